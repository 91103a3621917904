#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>

#include "ctxforge/geometry.hpp"

namespace ctxforge {

/// Edge magnitude map in [0, 1], same size as its source.
using HighFreqMap = Plane<double>;

/// Sobel gradient magnitude with replicated borders, divided by its maximum.
/// A flat input gives an all-zero map. Requires at least 3x3.
template <typename Scalar>
HighFreqMap high_pass(const Plane<Scalar>& gray);

/// Same, on the luma of an RGB raster.
HighFreqMap high_pass(const RgbImage& pixels);

/// Unnormalized Sobel magnitude; exposed for inspection and tests.
template <typename Scalar>
Plane<double> sobel_magnitude(const Plane<Scalar>& gray);

/// Context-sized canvas carrying the transformed edge map at the placement; zero elsewhere.
struct StitchCollage {
    Plane<double> canvas;
    PixelRect region;

    /// 8-bit export: values x255, rounded.
    Plane<std::uint8_t> to_u8() const;
    void write_png(const std::filesystem::path& path) const;
};

struct StitchResult {
    StitchCollage collage;
    AffineOp op = AffineOp::Identity;
    bool rotated = false;
};

/// Orientation alignment, then high-pass, then a sampled square symmetry; the result is
/// scaled to the placement rectangle, masked by the transformed instance mask and pasted
/// into a zero canvas of the context size.
StitchResult build_stitch(const ReferenceInstance& ref, const PlacementSpec& placement,
                          Index context_rows, Index context_cols, std::uint64_t affine_seed,
                          std::span<const AffineOp> family = kAllAffineOps);

/// Scales an already transformed edge map and mask into the placement and pastes them.
StitchCollage paste_stitch(const HighFreqMap& edges, const Mask& mask, const PlacementSpec& placement,
                           Index context_rows, Index context_cols);

}  // namespace ctxforge
