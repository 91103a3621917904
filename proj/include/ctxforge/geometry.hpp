#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ctxforge/types.hpp"

namespace ctxforge {

/// The eight symmetries of the square. Rotations are counter-clockwise on screen.
enum class AffineOp : std::uint8_t {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipHorizontal,
    FlipVertical,
    Transpose,
    AntiTranspose,
};

inline constexpr std::array<AffineOp, 8> kAllAffineOps = {
    AffineOp::Identity,       AffineOp::Rot90,        AffineOp::Rot180,    AffineOp::Rot270,
    AffineOp::FlipHorizontal, AffineOp::FlipVertical, AffineOp::Transpose, AffineOp::AntiTranspose,
};

std::string to_string(AffineOp op);
AffineOp affine_from_string(const std::string& name);

/// Action on centred (x, y) coordinates; y points down.
Eigen::Matrix2i affine_matrix(AffineOp op);

/// `compose(a, b)` applies b first, then a.
AffineOp compose(AffineOp a, AffineOp b);
AffineOp inverse(AffineOp op);

/// True for the ops that swap width and height.
bool swaps_axes(AffineOp op);

template <typename Scalar>
Plane<Scalar> apply_affine(AffineOp op, const Plane<Scalar>& src) {
    switch (op) {
        case AffineOp::Identity: return src;
        case AffineOp::Rot90: return src.transpose().colwise().reverse();
        case AffineOp::Rot180: return src.reverse();
        case AffineOp::Rot270: return src.transpose().rowwise().reverse();
        case AffineOp::FlipHorizontal: return src.rowwise().reverse();
        case AffineOp::FlipVertical: return src.colwise().reverse();
        case AffineOp::Transpose: return src.transpose();
        case AffineOp::AntiTranspose: return src.transpose().reverse();
    }
    return src;
}

template <typename Scalar>
Rgb<Scalar> apply_affine(AffineOp op, const Rgb<Scalar>& src) {
    return map_channels(src, [op](const Plane<Scalar>& p) { return apply_affine(op, p); });
}

/// Transforms pixels and mask together; lossless.
ReferenceInstance apply_affine(AffineOp op, const ReferenceInstance& ref);

/// Uniform draw from `family`; same seed, same op.
AffineOp sample_affine(std::uint64_t seed, std::span<const AffineOp> family = kAllAffineOps);

/// True iff the long edges of the reference and target disagree: (R_r - 1)(R_t - 1) < 0.
bool needs_rotation(double reference_ratio, double target_ratio);

struct Alignment {
    ReferenceInstance reference;
    bool rotated = false;
};

/// Rotates the reference by a quarter turn when its long edge disagrees with the target's.
Alignment orient_align(const ReferenceInstance& ref, const PlacementSpec& placement);

inline constexpr Index kEncoderSide = 224;

/// How a raster was padded to a square and scaled to the encoder input size.
struct ResizeRecord {
    Index pad_left = 0;
    Index pad_right = 0;
    Index pad_top = 0;
    Index pad_bottom = 0;
    double scale = 1.0;
    Index output_side = kEncoderSide;

    /// Continuous source coordinate of an output coordinate (and back).
    Eigen::Vector2d to_source(const Eigen::Vector2d& output_xy) const;
    Eigen::Vector2d to_output(const Eigen::Vector2d& source_xy) const;
};

struct EncoderInput {
    RgbImage pixels;
    Mask mask;
    ResizeRecord record;
};

/// Pads the shorter axis symmetrically (mid-gray pixels, zero mask; the odd pixel goes
/// right/bottom) to a square, then resizes to 224x224: bilinear for pixels, nearest for the mask.
EncoderInput pad_then_resize(const ReferenceInstance& ref);
EncoderInput pad_then_resize(const RgbImage& pixels, const Mask& mask);

}  // namespace ctxforge
