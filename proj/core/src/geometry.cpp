#include "uwkit/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace uwkit {

Box Box::clipped(double width, double height) const {
    Box b;
    b.x1 = std::clamp(x1, 0.0, width);
    b.y1 = std::clamp(y1, 0.0, height);
    b.x2 = std::clamp(x2, 0.0, width);
    b.y2 = std::clamp(y2, 0.0, height);
    return b;
}

double box_iou(const Box& a, const Box& b) {
    const double ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
    const double ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
    const double iw = ix2 - ix1, ih = iy2 - iy1;
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

int64_t Mask::area() const {
    int64_t n = 0;
    for (uint8_t v : data) n += v ? 1 : 0;
    return n;
}

double mask_iou(const Mask& a, const Mask& b) {
    if (a.height != b.height || a.width != b.width)
        throw ShapeError("mask_iou: shape mismatch");
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const bool va = a.data[i] != 0, vb = b.data[i] != 0;
        inter += (va && vb) ? 1 : 0;
        uni += (va || vb) ? 1 : 0;
    }
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

std::optional<Box> mask_tight_bbox(const Mask& m) {
    int rmin = m.height, rmax = -1, cmin = m.width, cmax = -1;
    for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c)
            if (m.at(r, c)) {
                rmin = std::min(rmin, r);
                rmax = std::max(rmax, r);
                cmin = std::min(cmin, c);
                cmax = std::max(cmax, c);
            }
    if (rmax < 0) return std::nullopt;
    return Box{static_cast<double>(cmin), static_cast<double>(rmin), static_cast<double>(cmax + 1),
               static_cast<double>(rmax + 1)};
}

namespace {

// Even-odd point-in-polygon test at (px, py) against one ring.
bool point_in_ring(const PolygonRing& ring, double px, double py) {
    const size_t n = ring.size() / 2;
    bool inside = false;
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const double xi = ring[2 * i], yi = ring[2 * i + 1];
        const double xj = ring[2 * j], yj = ring[2 * j + 1];
        const bool crosses = (yi > py) != (yj > py);
        if (crosses) {
            const double x_at = xj + (py - yj) / (yi - yj) * (xi - xj);
            if (px < x_at) inside = !inside;
        }
    }
    return inside;
}

}  // namespace

Mask rasterize_polygons(const std::vector<PolygonRing>& rings, int height, int width) {
    Mask m(height, width);
    for (const auto& ring : rings) {
        if (ring.size() < 6 || ring.size() % 2 != 0)
            throw ParseError("rasterize_polygons: ring needs >= 3 (x, y) pairs");
        // Restrict scanning to the ring's bounding rows/cols.
        double xlo = ring[0], xhi = ring[0], ylo = ring[1], yhi = ring[1];
        for (size_t i = 0; i < ring.size(); i += 2) {
            xlo = std::min(xlo, ring[i]);
            xhi = std::max(xhi, ring[i]);
            ylo = std::min(ylo, ring[i + 1]);
            yhi = std::max(yhi, ring[i + 1]);
        }
        const int r0 = std::max(0, static_cast<int>(std::floor(ylo - 0.5)));
        const int r1 = std::min(height - 1, static_cast<int>(std::ceil(yhi)));
        const int c0 = std::max(0, static_cast<int>(std::floor(xlo - 0.5)));
        const int c1 = std::min(width - 1, static_cast<int>(std::ceil(xhi)));
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c)
                if (point_in_ring(ring, c + 0.5, r + 0.5)) m.at(r, c) ^= 1;
    }
    return m;
}

std::vector<int64_t> mask_to_rle_counts(const Mask& m) {
    std::vector<int64_t> counts;
    uint8_t cur = 0;
    int64_t run = 0;
    for (int c = 0; c < m.width; ++c) {
        for (int r = 0; r < m.height; ++r) {
            const uint8_t v = m.at(r, c) ? 1 : 0;
            if (v == cur) {
                ++run;
            } else {
                counts.push_back(run);
                cur = v;
                run = 1;
            }
        }
    }
    counts.push_back(run);
    return counts;
}

Mask rle_counts_to_mask(const std::vector<int64_t>& counts, int height, int width) {
    Mask m(height, width);
    int64_t pos = 0;
    uint8_t cur = 0;
    for (int64_t run : counts) {
        for (int64_t i = 0; i < run; ++i) {
            if (pos >= static_cast<int64_t>(height) * width)
                throw ParseError("rle_counts_to_mask: counts exceed mask size");
            const int64_t c = pos / height, r = pos % height;
            m.at(static_cast<int>(r), static_cast<int>(c)) = cur;
            ++pos;
        }
        cur ^= 1;
    }
    if (pos != static_cast<int64_t>(height) * width)
        throw ParseError("rle_counts_to_mask: counts do not cover mask");
    return m;
}

Mask resize_mask(const Mask& m, int out_h, int out_w) {
    Mask out(out_h, out_w);
    const double sy = static_cast<double>(m.height) / out_h;
    const double sx = static_cast<double>(m.width) / out_w;
    for (int r = 0; r < out_h; ++r) {
        const int y0 = static_cast<int>(std::floor(r * sy));
        const int y1 = std::min(m.height, std::max(y0 + 1, static_cast<int>(std::ceil((r + 1) * sy))));
        for (int c = 0; c < out_w; ++c) {
            const int x0 = static_cast<int>(std::floor(c * sx));
            const int x1 =
                std::min(m.width, std::max(x0 + 1, static_cast<int>(std::ceil((c + 1) * sx))));
            int64_t set = 0, total = 0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    set += m.at(y, x) ? 1 : 0;
                    ++total;
                }
            out.at(r, c) = (2 * set >= total) ? 1 : 0;
        }
    }
    return out;
}

Mask hflip_mask(const Mask& m) {
    Mask out(m.height, m.width);
    for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c) out.at(r, m.width - 1 - c) = m.at(r, c);
    return out;
}

Mask crop_mask(const Mask& m, int r0, int c0, int out_h, int out_w) {
    Mask out(out_h, out_w);
    for (int r = 0; r < out_h; ++r)
        for (int c = 0; c < out_w; ++c) {
            const int sr = r + r0, sc = c + c0;
            if (sr >= 0 && sr < m.height && sc >= 0 && sc < m.width) out.at(r, c) = m.at(sr, sc);
        }
    return out;
}

}  // namespace uwkit
