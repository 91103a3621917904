#include "ctxforge/filtering.hpp"

#include <algorithm>
#include <cmath>

#include "ctxforge/error.hpp"

namespace ctxforge {

template <typename Scalar>
Plane<double> sobel_magnitude(const Plane<Scalar>& gray) {
    const Index rows = gray.rows();
    const Index cols = gray.cols();
    if (rows < 3 || cols < 3) throw DataError("high-pass filter needs at least a 3x3 raster");

    // Replicated border: pad by one pixel on every side.
    Plane<double> padded(rows + 2, cols + 2);
    for (Index y = 0; y < rows + 2; ++y) {
        Index sy = std::clamp<Index>(y - 1, 0, rows - 1);
        for (Index x = 0; x < cols + 2; ++x) padded(y, x) = double(gray(sy, std::clamp<Index>(x - 1, 0, cols - 1)));
    }

    auto at = [&](Index dy, Index dx) { return padded.block(1 + dy, 1 + dx, rows, cols); };
    Plane<double> gx = (at(-1, 1) - at(-1, -1)) + 2.0 * (at(0, 1) - at(0, -1)) + (at(1, 1) - at(1, -1));
    Plane<double> gy = (at(1, -1) - at(-1, -1)) + 2.0 * (at(1, 0) - at(-1, 0)) + (at(1, 1) - at(-1, 1));
    return (gx.square() + gy.square()).sqrt();
}

template <typename Scalar>
HighFreqMap high_pass(const Plane<Scalar>& gray) {
    Plane<double> magnitude = sobel_magnitude(gray);
    const double peak = magnitude.maxCoeff();
    if (peak > 0.0) magnitude /= peak;
    return magnitude;
}

template Plane<double> sobel_magnitude(const Plane<double>&);
template Plane<double> sobel_magnitude(const Plane<float>&);
template Plane<double> sobel_magnitude(const Plane<std::uint8_t>&);
template HighFreqMap high_pass(const Plane<double>&);
template HighFreqMap high_pass(const Plane<float>&);
template HighFreqMap high_pass(const Plane<std::uint8_t>&);

HighFreqMap high_pass(const RgbImage& pixels) { return high_pass(grayscale(pixels)); }

Plane<std::uint8_t> StitchCollage::to_u8() const { return ctxforge::to_u8(canvas * 255.0); }

void StitchCollage::write_png(const std::filesystem::path& path) const { write_gray(path, to_u8()); }

StitchCollage paste_stitch(const HighFreqMap& edges, const Mask& mask, const PlacementSpec& placement,
                           Index context_rows, Index context_cols) {
    const PixelRect r = placement.rect();
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > context_cols || r.y1 > context_rows)
        throw DataError("placement outside the context");
    Plane<double> scaled = resize_bilinear(edges, r.height(), r.width());
    Mask scaled_mask = resize_nearest(mask, r.height(), r.width());

    StitchCollage collage{Plane<double>::Zero(context_rows, context_cols), r};
    collage.canvas.block(r.y0, r.x0, r.height(), r.width()) =
        scaled * scaled_mask.cast<double>().min(1.0);
    return collage;
}

StitchResult build_stitch(const ReferenceInstance& ref, const PlacementSpec& placement, Index context_rows,
                          Index context_cols, std::uint64_t affine_seed, std::span<const AffineOp> family) {
    Alignment aligned = orient_align(ref, placement);
    HighFreqMap edges = high_pass(aligned.reference.pixels());
    AffineOp op = sample_affine(affine_seed, family);
    StitchCollage collage = paste_stitch(apply_affine(op, edges), apply_affine(op, aligned.reference.mask()),
                                         placement, context_rows, context_cols);
    return {std::move(collage), op, aligned.rotated};
}

}  // namespace ctxforge
