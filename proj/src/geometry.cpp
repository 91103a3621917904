#include "ctxforge/geometry.hpp"

#include <algorithm>

#include "ctxforge/error.hpp"
#include "ctxforge/rng.hpp"

namespace ctxforge {

std::string to_string(AffineOp op) {
    switch (op) {
        case AffineOp::Identity: return "identity";
        case AffineOp::Rot90: return "rot90";
        case AffineOp::Rot180: return "rot180";
        case AffineOp::Rot270: return "rot270";
        case AffineOp::FlipHorizontal: return "flip-horizontal";
        case AffineOp::FlipVertical: return "flip-vertical";
        case AffineOp::Transpose: return "transpose";
        case AffineOp::AntiTranspose: return "anti-transpose";
    }
    return "identity";
}

AffineOp affine_from_string(const std::string& name) {
    for (AffineOp op : kAllAffineOps)
        if (to_string(op) == name) return op;
    throw ConfigError("unknown affine op '" + name + "'");
}

Eigen::Matrix2i affine_matrix(AffineOp op) {
    Eigen::Matrix2i m;
    switch (op) {
        case AffineOp::Identity: m << 1, 0, 0, 1; break;
        case AffineOp::Rot90: m << 0, 1, -1, 0; break;
        case AffineOp::Rot180: m << -1, 0, 0, -1; break;
        case AffineOp::Rot270: m << 0, -1, 1, 0; break;
        case AffineOp::FlipHorizontal: m << -1, 0, 0, 1; break;
        case AffineOp::FlipVertical: m << 1, 0, 0, -1; break;
        case AffineOp::Transpose: m << 0, 1, 1, 0; break;
        case AffineOp::AntiTranspose: m << 0, -1, -1, 0; break;
    }
    return m;
}

namespace {

AffineOp from_matrix(const Eigen::Matrix2i& m) {
    for (AffineOp op : kAllAffineOps)
        if (affine_matrix(op) == m) return op;
    throw std::logic_error("matrix outside the square symmetry group");
}

}  // namespace

AffineOp compose(AffineOp a, AffineOp b) { return from_matrix(affine_matrix(a) * affine_matrix(b)); }

AffineOp inverse(AffineOp op) { return from_matrix(affine_matrix(op).transpose()); }

bool swaps_axes(AffineOp op) { return affine_matrix(op)(0, 0) == 0; }

ReferenceInstance apply_affine(AffineOp op, const ReferenceInstance& ref) {
    if (op == AffineOp::Identity) return ref;
    return ReferenceInstance(apply_affine(op, ref.pixels()), apply_affine(op, ref.mask()), ref.label(),
                             ref.source_image(), ref.source_box());
}

AffineOp sample_affine(std::uint64_t seed, std::span<const AffineOp> family) {
    if (family.empty()) throw ConfigError("affine family is empty");
    Rng rng(seed);
    return family[rng.index(family.size())];
}

bool needs_rotation(double reference_ratio, double target_ratio) {
    return (reference_ratio - 1.0) * (target_ratio - 1.0) < 0.0;
}

Alignment orient_align(const ReferenceInstance& ref, const PlacementSpec& placement) {
    if (!needs_rotation(ref.aspect_ratio(), placement.aspect_ratio())) return {ref, false};
    return {apply_affine(AffineOp::Rot90, ref), true};
}

Eigen::Vector2d ResizeRecord::to_source(const Eigen::Vector2d& output_xy) const {
    return output_xy / scale - Eigen::Vector2d(double(pad_left), double(pad_top));
}

Eigen::Vector2d ResizeRecord::to_output(const Eigen::Vector2d& source_xy) const {
    return (source_xy + Eigen::Vector2d(double(pad_left), double(pad_top))) * scale;
}

EncoderInput pad_then_resize(const RgbImage& pixels, const Mask& mask) {
    const Index h = pixels.rows();
    const Index w = pixels.cols();
    if (w < 1 || h < 1) throw DataError("cannot resize an empty raster");
    const Index side = std::max(w, h);

    ResizeRecord record;
    if (w < side) {
        record.pad_left = (side - w) / 2;
        record.pad_right = side - w - record.pad_left;
    } else {
        record.pad_top = (side - h) / 2;
        record.pad_bottom = side - h - record.pad_top;
    }
    record.scale = double(kEncoderSide) / double(side);

    RgbImage padded(side, side, 128);
    for (int c = 0; c < 3; ++c) padded[c].block(record.pad_top, record.pad_left, h, w) = pixels[c];
    Mask padded_mask = Mask::Zero(side, side);
    padded_mask.block(record.pad_top, record.pad_left, h, w) = mask;

    return {resize_rgb(padded, kEncoderSide, kEncoderSide), resize_nearest(padded_mask, kEncoderSide, kEncoderSide),
            record};
}

EncoderInput pad_then_resize(const ReferenceInstance& ref) { return pad_then_resize(ref.pixels(), ref.mask()); }

}  // namespace ctxforge
