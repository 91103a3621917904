#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

namespace ctxforge {

using Index = Eigen::Index;

/// Single-channel raster; coefficient (y, x) is row y, column x.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Binary raster, 1 = set.
using Mask = Plane<std::uint8_t>;

/// Three-plane RGB raster.
template <typename Scalar>
struct Rgb {
    std::array<Plane<Scalar>, 3> channels;

    Rgb() = default;
    Rgb(Index rows, Index cols, Scalar fill = Scalar(0)) {
        for (auto& c : channels) c.setConstant(rows, cols, fill);
    }
    Rgb(Plane<Scalar> r, Plane<Scalar> g, Plane<Scalar> b)
        : channels{std::move(r), std::move(g), std::move(b)} {}

    Index rows() const { return channels[0].rows(); }
    Index cols() const { return channels[0].cols(); }

    Plane<Scalar>& operator[](int c) { return channels[c]; }
    const Plane<Scalar>& operator[](int c) const { return channels[c]; }

    template <typename Other>
    Rgb<Other> cast() const {
        return {channels[0].template cast<Other>(), channels[1].template cast<Other>(),
                channels[2].template cast<Other>()};
    }

    friend bool operator==(const Rgb& a, const Rgb& b) {
        for (int c = 0; c < 3; ++c) {
            if (a[c].rows() != b[c].rows() || a[c].cols() != b[c].cols()) return false;
            if (!(a[c] == b[c]).all()) return false;
        }
        return true;
    }
};

using RgbImage = Rgb<std::uint8_t>;

template <typename Scalar, typename Fn>
auto map_channels(const Rgb<Scalar>& image, Fn&& fn) {
    using Out = typename std::decay_t<decltype(fn(image[0]))>::Scalar;
    return Rgb<Out>(fn(image[0]), fn(image[1]), fn(image[2]));
}

/// Luma (BT.601 weights) as a double plane.
Plane<double> grayscale(const RgbImage& image);

/// Round and saturate to [0, 255].
Plane<std::uint8_t> to_u8(const Plane<double>& plane);

/// Bilinear resample with pixel-centre alignment, edges replicated.
template <typename Scalar>
Plane<double> resize_bilinear(const Plane<Scalar>& src, Index rows, Index cols) {
    Plane<double> out(rows, cols);
    const double sy = double(src.rows()) / double(rows);
    const double sx = double(src.cols()) / double(cols);
    for (Index y = 0; y < rows; ++y) {
        double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(src.rows() - 1));
        Index y0 = Index(fy);
        Index y1 = std::min(y0 + 1, src.rows() - 1);
        double wy = fy - double(y0);
        for (Index x = 0; x < cols; ++x) {
            double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(src.cols() - 1));
            Index x0 = Index(fx);
            Index x1 = std::min(x0 + 1, src.cols() - 1);
            double wx = fx - double(x0);
            double top = (1.0 - wx) * double(src(y0, x0)) + wx * double(src(y0, x1));
            double bottom = (1.0 - wx) * double(src(y1, x0)) + wx * double(src(y1, x1));
            out(y, x) = (1.0 - wy) * top + wy * bottom;
        }
    }
    return out;
}

/// Nearest-neighbour resample; keeps binary masks binary.
template <typename Scalar>
Plane<Scalar> resize_nearest(const Plane<Scalar>& src, Index rows, Index cols) {
    Plane<Scalar> out(rows, cols);
    for (Index y = 0; y < rows; ++y) {
        Index sy = std::min(Index(std::floor((y + 0.5) * double(src.rows()) / double(rows))),
                            src.rows() - 1);
        for (Index x = 0; x < cols; ++x) {
            Index sx = std::min(Index(std::floor((x + 0.5) * double(src.cols()) / double(cols))),
                                src.cols() - 1);
            out(y, x) = src(sy, sx);
        }
    }
    return out;
}

/// Bilinear resize of all channels, rounded back to 8 bits. Same-size input is returned unchanged.
RgbImage resize_rgb(const RgbImage& image, Index rows, Index cols);

RgbImage read_rgb(const std::filesystem::path& path);
void write_rgb(const std::filesystem::path& path, const RgbImage& image);
void write_gray(const std::filesystem::path& path, const Plane<std::uint8_t>& plane);

std::vector<std::uint8_t> encode_png(const RgbImage& image);
std::vector<std::uint8_t> encode_png(const Plane<std::uint8_t>& plane);
RgbImage decode_rgb(const std::vector<std::uint8_t>& bytes);
Plane<std::uint8_t> decode_gray(const std::vector<std::uint8_t>& bytes);

/// Reads only the image header when possible. Returns {width, height}.
std::array<Index, 2> image_size(const std::filesystem::path& path);

}  // namespace ctxforge
