#include "ctxforge/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ctxforge/error.hpp"

namespace ctxforge {

BBox BBox::make(double x_min, double y_min, double x_max, double y_max) {
    BBox box{x_min, y_min, x_max, y_max};
    bool finite = std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) && std::isfinite(y_max);
    if (!finite || !(x_min < x_max) || !(y_min < y_max)) {
        std::ostringstream msg;
        msg << "invalid box (" << x_min << ", " << y_min << ", " << x_max << ", " << y_max << ")";
        throw DataError(msg.str());
    }
    return box;
}

double intersection_area(const BBox& a, const BBox& b) {
    double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (w <= 0.0 || h <= 0.0) return 0.0;
    return w * h;
}

double iou(const BBox& a, const BBox& b) {
    double inter = intersection_area(a, b);
    if (inter == 0.0) return 0.0;
    return inter / (a.area() + b.area() - inter);
}

std::string to_string(Split split) { return split == Split::Novel ? "novel" : "base"; }

Split split_from_string(const std::string& text) {
    if (text == "base") return Split::Base;
    if (text == "novel") return Split::Novel;
    throw DataError("unknown split '" + text + "'");
}

PixelRect pixel_rect(const BBox& box) {
    return {Index(std::lround(box.x_min)), Index(std::lround(box.y_min)), Index(std::lround(box.x_max)),
            Index(std::lround(box.y_max))};
}

PixelRect mask_bounds(const Mask& mask) {
    PixelRect r{mask.cols(), mask.rows(), 0, 0};
    for (Index y = 0; y < mask.rows(); ++y) {
        for (Index x = 0; x < mask.cols(); ++x) {
            if (!mask(y, x)) continue;
            r.x0 = std::min(r.x0, x);
            r.y0 = std::min(r.y0, y);
            r.x1 = std::max(r.x1, x + 1);
            r.y1 = std::max(r.y1, y + 1);
        }
    }
    if (r.x1 == 0) return {};
    return r;
}

double mask_aspect_ratio(const Mask& mask) {
    PixelRect r = mask_bounds(mask);
    if (r.width() <= 0) throw DataError("mask has no set pixel");
    return double(r.width()) / double(r.height());
}

ReferenceInstance::ReferenceInstance(RgbImage pixels, Mask mask, ClassLabel label, std::string source_image,
                                     BBox source_box)
    : pixels_(std::move(pixels)),
      mask_(std::move(mask)),
      label_(std::move(label)),
      source_image_(std::move(source_image)),
      source_box_(source_box) {
    if (pixels_.rows() != mask_.rows() || pixels_.cols() != mask_.cols()) {
        std::ostringstream msg;
        msg << "reference pixels " << pixels_.cols() << "x" << pixels_.rows() << " and mask " << mask_.cols()
            << "x" << mask_.rows() << " differ in size";
        throw DataError(msg.str());
    }
    aspect_ratio_ = mask_aspect_ratio(mask_);
}

bool operator==(const ReferenceInstance& a, const ReferenceInstance& b) {
    return a.pixels_ == b.pixels_ && a.mask_.rows() == b.mask_.rows() && a.mask_.cols() == b.mask_.cols() &&
           (a.mask_ == b.mask_).all() && a.label_ == b.label_ && a.source_image_ == b.source_image_ &&
           a.source_box_ == b.source_box_;
}

void ContextScene::validate() const {
    if (!novel_free) return;
    for (const auto& lb : existing_boxes) {
        if (lb.label.split == Split::Novel)
            throw DataError("context '" + id + "' is flagged novel-free but holds a '" + lb.label.name + "' box");
    }
}

PlacementSpec::PlacementSpec(const BBox& target, Index context_width, Index context_height) : target_(target) {
    BBox::make(target.x_min, target.y_min, target.x_max, target.y_max);
    PixelRect r = pixel_rect(target);
    if (!target.inside(double(context_width), double(context_height)) || r.width() < 1 || r.height() < 1) {
        std::ostringstream msg;
        msg << "placement (" << target.x_min << ", " << target.y_min << ", " << target.x_max << ", "
            << target.y_max << ") outside " << context_width << "x" << context_height << " context";
        throw DataError(msg.str());
    }
}

}  // namespace ctxforge
