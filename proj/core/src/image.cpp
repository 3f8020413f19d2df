#include "uwkit/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

#include "uwkit/common.hpp"

namespace uwkit {

ImageRGB ImageRGB::from_tensor(const Tensor& t) {
    if (t.ndim() != 3 || t.dim(2) != 3) throw ShapeError("ImageRGB::from_tensor: expects [h,w,3]");
    ImageRGB img(static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1)));
    img.data = t.data;
    return img;
}

ImageRGB resize_bilinear(const ImageRGB& img, int out_h, int out_w) {
    ImageRGB out(out_h, out_w);
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;
    for (int r = 0; r < out_h; ++r) {
        double fy = (r + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int c = 0; c < out_w; ++c) {
            double fx = (c + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < 3; ++ch) {
                out.at(r, c, ch) = (1 - wy) * ((1 - wx) * img.at(y0, x0, ch) + wx * img.at(y0, x1, ch)) +
                                   wy * ((1 - wx) * img.at(y1, x0, ch) + wx * img.at(y1, x1, ch));
            }
        }
    }
    return out;
}

ImageRGB hflip(const ImageRGB& img) {
    ImageRGB out(img.height, img.width);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            for (int ch = 0; ch < 3; ++ch) out.at(r, img.width - 1 - c, ch) = img.at(r, c, ch);
    return out;
}

ImageRGB crop(const ImageRGB& img, int r0, int c0, int out_h, int out_w, double fill) {
    ImageRGB out(out_h, out_w);
    for (int r = 0; r < out_h; ++r)
        for (int c = 0; c < out_w; ++c) {
            const int sr = r + r0, sc = c + c0;
            const bool in = sr >= 0 && sr < img.height && sc >= 0 && sc < img.width;
            for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = in ? img.at(sr, sc, ch) : fill;
        }
    return out;
}

void write_image(const std::string& path, const ImageRGB& img) {
    cv::Mat mat(img.height, img.width, CV_8UC3);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            auto& px = mat.at<cv::Vec3b>(r, c);
            for (int ch = 0; ch < 3; ++ch) {
                const double v = std::clamp(img.at(r, c, ch), 0.0, 1.0);
                // OpenCV stores BGR.
                px[2 - ch] = static_cast<uint8_t>(std::lround(v * 255.0));
            }
        }
    if (!cv::imwrite(path, mat)) throw IoError("write_image: failed to write " + path);
}

ImageRGB read_image(const std::string& path) {
    cv::Mat mat = cv::imread(path, cv::IMREAD_COLOR);
    if (mat.empty()) throw IoError("read_image: failed to read " + path);
    ImageRGB img(mat.rows, mat.cols);
    for (int r = 0; r < mat.rows; ++r)
        for (int c = 0; c < mat.cols; ++c) {
            const auto& px = mat.at<cv::Vec3b>(r, c);
            for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = px[2 - ch] / 255.0;
        }
    return img;
}

}  // namespace uwkit
