#include "siamattack/image.hpp"

#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "siamattack/error.hpp"

namespace siam {

Tensor to_chw(const ImageU8& img) {
    Tensor t({3, img.h, img.w});
    const float k = 1.0f / 255.0f;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) t.at(c, y, x) = static_cast<float>(img.at(y, x, c)) * k;
    return t;
}

ImageU8 to_u8(const Tensor& chw) {
    if (chw.ndim() != 3 || chw.dim(0) != 3) throw ShapeError("to_u8 expects (3,H,W), got " + chw.shape_str());
    ImageU8 img(chw.dim(1), chw.dim(2));
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = chw.at(c, y, x) * 255.0f;
                v = v < 0.0f ? 0.0f : (v > 255.0f ? 255.0f : v);
                img.at(y, x, c) = static_cast<uint8_t>(std::lround(v));
            }
    return img;
}

void write_image(const std::string& path, const ImageU8& img) {
    cv::Mat m(img.h, img.w, CV_8UC3);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            auto& p = m.at<cv::Vec3b>(y, x);  // BGR
            p[0] = img.at(y, x, 2);
            p[1] = img.at(y, x, 1);
            p[2] = img.at(y, x, 0);
        }
    if (!cv::imwrite(path, m)) throw IoError("failed to write image " + path);
}

ImageU8 read_image(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw IoError("failed to read image " + path);
    ImageU8 img(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            const auto& p = m.at<cv::Vec3b>(y, x);
            img.at(y, x, 0) = p[2];
            img.at(y, x, 1) = p[1];
            img.at(y, x, 2) = p[0];
        }
    return img;
}

std::array<float, 3> channel_means(const Tensor& chw) {
    std::array<float, 3> m{0.0f, 0.0f, 0.0f};
    const int64_t hw = static_cast<int64_t>(chw.dim(1)) * chw.dim(2);
    for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        const float* p = chw.data() + c * hw;
        for (int64_t i = 0; i < hw; ++i) acc += p[i];
        m[static_cast<size_t>(c)] = static_cast<float>(acc / static_cast<double>(hw));
    }
    return m;
}

namespace {

inline float sample_padded(const Tensor& chw, int c, float sy, float sx, float fill) {
    const int h = chw.dim(1), w = chw.dim(2);
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const float fx = sx - static_cast<float>(x0);
    const float fy = sy - static_cast<float>(y0);
    auto px = [&](int yy, int xx) -> float {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return fill;
        return chw.at(c, yy, xx);
    };
    const float v00 = px(y0, x0), v01 = px(y0, x0 + 1);
    const float v10 = px(y0 + 1, x0), v11 = px(y0 + 1, x0 + 1);
    const float top = v00 + (v01 - v00) * fx;
    const float bot = v10 + (v11 - v10) * fx;
    return top + (bot - top) * fy;
}

}  // namespace

Tensor crop_resize(const Tensor& chw, float cx, float cy, float side, int out_side,
                   const std::array<float, 3>& fill) {
    if (chw.ndim() != 3 || chw.dim(0) != 3) throw ShapeError("crop_resize expects (3,H,W)");
    if (side <= 0.0f || out_side <= 0) throw ConfigError("crop side and out_side must be positive");
    Tensor out({3, out_side, out_side});
    const float step = side / static_cast<float>(out_side);
    const float left = cx - 0.5f * side;
    const float top = cy - 0.5f * side;
    for (int c = 0; c < 3; ++c) {
        const float f = fill[static_cast<size_t>(c)];
        for (int j = 0; j < out_side; ++j) {
            const float sy = top + (static_cast<float>(j) + 0.5f) * step - 0.5f;
            for (int i = 0; i < out_side; ++i) {
                const float sx = left + (static_cast<float>(i) + 0.5f) * step - 0.5f;
                out.at(c, j, i) = sample_padded(chw, c, sy, sx, f);
            }
        }
    }
    return out;
}

Tensor resize_bilinear(const Tensor& chw, int out_h, int out_w) {
    if (chw.ndim() != 3) throw ShapeError("resize_bilinear expects (C,H,W)");
    const int ch = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    Tensor out({ch, out_h, out_w});
    const float sy_step = static_cast<float>(h) / static_cast<float>(out_h);
    const float sx_step = static_cast<float>(w) / static_cast<float>(out_w);
    for (int c = 0; c < ch; ++c)
        for (int j = 0; j < out_h; ++j) {
            float sy = (static_cast<float>(j) + 0.5f) * sy_step - 0.5f;
            sy = sy < 0.0f ? 0.0f : (sy > static_cast<float>(h - 1) ? static_cast<float>(h - 1) : sy);
            for (int i = 0; i < out_w; ++i) {
                float sx = (static_cast<float>(i) + 0.5f) * sx_step - 0.5f;
                sx = sx < 0.0f ? 0.0f : (sx > static_cast<float>(w - 1) ? static_cast<float>(w - 1) : sx);
                const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
                const int y1 = y0 + 1 < h ? y0 + 1 : y0;
                const int x1 = x0 + 1 < w ? x0 + 1 : x0;
                const float fy = sy - static_cast<float>(y0), fx = sx - static_cast<float>(x0);
                const float top = chw.at(c, y0, x0) + (chw.at(c, y0, x1) - chw.at(c, y0, x0)) * fx;
                const float bot = chw.at(c, y1, x0) + (chw.at(c, y1, x1) - chw.at(c, y1, x0)) * fx;
                out.at(c, j, i) = top + (bot - top) * fy;
            }
        }
    return out;
}

}  // namespace siam
