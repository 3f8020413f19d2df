#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "uwkit/common.hpp"

namespace uwkit {

// Axis-aligned box in continuous pixel coordinates; pixel (r, c) is covered
// iff x1 <= c + 0.5 < x2 and y1 <= r + 0.5 < y2 (no +1 conventions anywhere).
struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double w() const { return x2 - x1; }
    double h() const { return y2 - y1; }
    double area() const { return w() > 0 && h() > 0 ? w() * h() : 0.0; }
    bool valid() const { return x2 > x1 && y2 > y1; }
    Box clipped(double width, double height) const;
};

double box_iou(const Box& a, const Box& b);

// Binary mask with row-major uint8 storage.
struct Mask {
    int height = 0, width = 0;
    std::vector<uint8_t> data;

    Mask() = default;
    Mask(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w, 0) {}

    uint8_t& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
    uint8_t at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
    int64_t area() const;
    bool empty() const { return area() == 0; }
};

double mask_iou(const Mask& a, const Mask& b);

// Tight axis-aligned bounds of the set pixels; nullopt for an empty mask.
std::optional<Box> mask_tight_bbox(const Mask& m);

// Flat [x0,y0,x1,y1,...] polygon ring, as in COCO segmentations.
using PolygonRing = std::vector<double>;

// Rasterize polygon rings onto an h x w grid using the even-odd rule
// evaluated at pixel centers. Multiple rings XOR together (even-odd).
Mask rasterize_polygons(const std::vector<PolygonRing>& rings, int height, int width);

// COCO-style uncompressed RLE: column-major run lengths starting with the
// count of zeros.
std::vector<int64_t> mask_to_rle_counts(const Mask& m);
Mask rle_counts_to_mask(const std::vector<int64_t>& counts, int height, int width);

// Mask scaled to a new grid: target pixel set iff the box-filter average of
// the source footprint is >= 0.5.
Mask resize_mask(const Mask& m, int out_h, int out_w);

Mask hflip_mask(const Mask& m);
Mask crop_mask(const Mask& m, int r0, int c0, int out_h, int out_w);

}  // namespace uwkit
