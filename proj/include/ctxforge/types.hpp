#pragma once

#include <compare>
#include <string>
#include <vector>

#include "ctxforge/image.hpp"

namespace ctxforge {

/// Axis-aligned box in continuous pixel coordinates, origin top-left,
/// half-open: a pixel column x belongs to the box iff x_min <= x < x_max.
struct BBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    /// Throws DataError unless the coordinates are finite and strictly ordered.
    static BBox make(double x_min, double y_min, double x_max, double y_max);

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    double aspect_ratio() const { return width() / height(); }

    bool inside(double bound_width, double bound_height) const {
        return x_min >= 0.0 && y_min >= 0.0 && x_max <= bound_width && y_max <= bound_height;
    }

    friend bool operator==(const BBox&, const BBox&) = default;
};

double intersection_area(const BBox& a, const BBox& b);

/// Intersection over union, 0 for disjoint boxes.
double iou(const BBox& a, const BBox& b);

enum class Split { Base, Novel };

std::string to_string(Split split);
Split split_from_string(const std::string& text);

struct ClassLabel {
    std::string name;
    Split split = Split::Base;

    friend auto operator<=>(const ClassLabel&, const ClassLabel&) = default;
};

struct LabeledBox {
    BBox box;
    ClassLabel label;

    friend bool operator==(const LabeledBox&, const LabeledBox&) = default;
};

/// Integer pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
    Index x0 = 0;
    Index y0 = 0;
    Index x1 = 0;
    Index y1 = 0;

    Index width() const { return x1 - x0; }
    Index height() const { return y1 - y0; }

    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Pixels covered by a box, with coordinates rounded to the nearest integer.
PixelRect pixel_rect(const BBox& box);

/// Width/height of the tight bounding box of the set pixels; throws DataError on an empty mask.
double mask_aspect_ratio(const Mask& mask);

/// Tight bounding rectangle of the set pixels of a mask. Empty rect for an empty mask.
PixelRect mask_bounds(const Mask& mask);

/// An object crop to be integrated elsewhere.
class ReferenceInstance {
public:
    ReferenceInstance(RgbImage pixels, Mask mask, ClassLabel label, std::string source_image,
                      BBox source_box);

    const RgbImage& pixels() const { return pixels_; }
    const Mask& mask() const { return mask_; }
    const ClassLabel& label() const { return label_; }
    const std::string& source_image() const { return source_image_; }
    const BBox& source_box() const { return source_box_; }

    /// R_r: width/height of the tight mask bounding box.
    double aspect_ratio() const { return aspect_ratio_; }

    friend bool operator==(const ReferenceInstance& a, const ReferenceInstance& b);

private:
    RgbImage pixels_;
    Mask mask_;
    ClassLabel label_;
    std::string source_image_;
    BBox source_box_;
    double aspect_ratio_;
};

/// A background image and the ground truth it already carries.
struct ContextScene {
    std::string id;
    RgbImage pixels;
    std::vector<LabeledBox> existing_boxes;
    bool novel_free = false;

    /// Throws DataError when novel_free is claimed but a novel box is present.
    void validate() const;
};

/// Where an instance goes inside a context.
class PlacementSpec {
public:
    /// Throws DataError if the target exits [0, width) x [0, height).
    PlacementSpec(const BBox& target, Index context_width, Index context_height);

    const BBox& target() const { return target_; }

    /// R_t: target width/height.
    double aspect_ratio() const { return target_.aspect_ratio(); }

    PixelRect rect() const { return pixel_rect(target_); }

private:
    BBox target_;
};

}  // namespace ctxforge
