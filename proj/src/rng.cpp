#include "ctxforge/rng.hpp"

namespace ctxforge {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::uint64_t Rng::index(std::uint64_t n) {
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t limit = n * (~std::uint64_t{0} / n);
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
}

double Rng::uniform(double lo, double hi) {
    double unit = double(next() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * unit;
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view name) {
    return splitmix64(splitmix64(root) ^ fnv1a(name));
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index) {
    return splitmix64(derive_seed(root, name) ^ splitmix64(index));
}

}  // namespace ctxforge
