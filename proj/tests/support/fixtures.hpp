#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctxforge/dataset.hpp"
#include "ctxforge/image.hpp"
#include "ctxforge/rng.hpp"

namespace ctxforge::test {

/// Unique directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("ctxforge_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    std::filesystem::path path_;
};

/// Smooth random texture so crops are not constant.
inline RgbImage random_texture(Index rows, Index cols, std::uint64_t seed) {
    Rng rng(seed);
    RgbImage img(rows, cols);
    for (int c = 0; c < 3; ++c) {
        const double fx = rng.uniform(0.02, 0.2), fy = rng.uniform(0.02, 0.2), phase = rng.uniform(0, 6.28);
        const double base = rng.uniform(60, 190);
        for (Index y = 0; y < rows; ++y)
            for (Index x = 0; x < cols; ++x)
                img[c](y, x) = std::uint8_t(std::lround(base + 50.0 * std::sin(fx * double(x) + fy * double(y) + phase) +
                                                        double(rng.index(9)) - 4.0));
    }
    return img;
}

inline const std::vector<std::string>& fixture_novel() {
    static const std::vector<std::string> v{"airplane", "baseballfield", "tenniscourt", "trainstation", "windmill"};
    return v;
}

inline const std::vector<std::string>& fixture_base() {
    static const std::vector<std::string> v{"ship", "vehicle", "storagetank"};
    return v;
}

/// VOC fixture of `count` images (PNG). Every third image is novel-free; the others hold one
/// or two instances of a novel class in rotation, plus a base box. Some novel boxes are difficult.
inline DatasetManifest make_voc_fixture(const std::filesystem::path& root, int count, std::uint64_t seed) {
    std::filesystem::create_directories(root / "JPEGImages");
    Rng rng(seed);
    DatasetManifest m;
    m.root = root;
    m.splits = dior_classes();
    int novel_turn = 0;
    for (int i = 0; i < count; ++i) {
        ImageRecord rec;
        rec.id = "img" + std::to_string(1000 + i);
        rec.file = rec.id + ".png";
        rec.width = Index(120 + rng.index(60));
        rec.height = Index(100 + rng.index(60));
        rec.path = root / "JPEGImages" / rec.file;
        write_rgb(rec.path, random_texture(rec.height, rec.width, seed * 7919 + std::uint64_t(i)));

        auto add_box = [&](const std::string& cls, bool difficult) {
            const double w = 14.0 + double(rng.index(20)), h = 12.0 + double(rng.index(20));
            const double x = double(rng.index(std::uint64_t(double(rec.width) - w)));
            const double y = double(rng.index(std::uint64_t(double(rec.height) - h)));
            Annotation a;
            a.id = rec.id + "#" + std::to_string(std::count_if(m.annotations.begin(), m.annotations.end(),
                                                                [&](const Annotation& b) { return b.image_id == rec.id; }));
            a.image_id = rec.id;
            a.box = BBox::make(x, y, x + w, y + h);
            a.label = ClassLabel{cls, m.splits.at(cls)};
            a.difficult = difficult;
            m.annotations.push_back(a);
        };
        add_box(fixture_base()[rng.index(fixture_base().size())], false);
        if (i % 3 != 0) {
            const std::string& cls = fixture_novel()[std::size_t(novel_turn++) % fixture_novel().size()];
            add_box(cls, false);
            if (rng.index(4) == 0) add_box(cls, rng.index(2) == 0);
        }
        m.images.push_back(rec);
    }
    save_voc(m, root);
    return m;
}

}  // namespace ctxforge::test
