#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ctxforge {

/// Seeded generator with platform-stable draws. std::mt19937_64's sequence is fixed by the
/// standard; the distributions below are written out so results do not depend on the
/// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t index(std::uint64_t n);

    /// Uniform real in [lo, hi).
    double uniform(double lo, double hi);

    bool coin() { return (next() >> 63) != 0; }

private:
    std::mt19937_64 engine_;
};

/// Named sub-seed of a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);
std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index);

}  // namespace ctxforge
