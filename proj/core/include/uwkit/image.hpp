#pragma once

#include <string>
#include <vector>

#include "uwkit/geometry.hpp"
#include "uwkit/tensor.hpp"

namespace uwkit {

// RGB image, values in [0,1], row-major [h, w, 3].
struct ImageRGB {
    int height = 0, width = 0;
    std::vector<double> data;

    ImageRGB() = default;
    ImageRGB(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, 0.0) {}

    double& at(int r, int c, int ch) { return data[(static_cast<size_t>(r) * width + c) * 3 + ch]; }
    double at(int r, int c, int ch) const {
        return data[(static_cast<size_t>(r) * width + c) * 3 + ch];
    }

    Tensor to_tensor() const { return Tensor({height, width, 3}, data); }
    static ImageRGB from_tensor(const Tensor& t);
};

ImageRGB resize_bilinear(const ImageRGB& img, int out_h, int out_w);
ImageRGB hflip(const ImageRGB& img);
// Out-of-bounds source pixels are filled with `fill`.
ImageRGB crop(const ImageRGB& img, int r0, int c0, int out_h, int out_w, double fill = 0.0);

// 8-bit PNG/JPG round trip (values clamped to [0,1] and quantized to 255 levels).
void write_image(const std::string& path, const ImageRGB& img);
ImageRGB read_image(const std::string& path);

}  // namespace uwkit
