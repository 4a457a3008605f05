#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "siamattack/tensor.hpp"

namespace siam {

// Interleaved 8-bit RGB image; the storage/disk form of all frames.
struct ImageU8 {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> px;  // h*w*3, RGB

    ImageU8() = default;
    ImageU8(int height, int width) : h(height), w(width), px(static_cast<size_t>(height) * width * 3, 0) {}

    uint8_t& at(int y, int x, int c) { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    uint8_t at(int y, int x, int c) const { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    bool empty() const { return px.empty(); }
};

// u8 RGB -> float CHW in [0,1].
Tensor to_chw(const ImageU8& img);

// float CHW in [0,1] -> u8 RGB (values clamped, round-to-nearest).
ImageU8 to_u8(const Tensor& chw);

// PNG (or any OpenCV-supported lossless format chosen by extension).
void write_image(const std::string& path, const ImageU8& img);
ImageU8 read_image(const std::string& path);

// Mean of each channel over the whole image.
std::array<float, 3> channel_means(const Tensor& chw);

// Square crop of `side` pixels centered at (cx, cy), bilinearly resampled to
// out_side x out_side. Samples falling outside the frame read `fill` for
// their channel. Output pixel j maps to source coordinate
// (cx - side/2) + (j + 0.5) * side / out_side - 0.5, so an axis-aligned
// integer crop with side == out_side is an exact pixel copy.
Tensor crop_resize(const Tensor& chw, float cx, float cy, float side, int out_side,
                   const std::array<float, 3>& fill);

// Plain bilinear resize (half-pixel-center convention, no padding reads:
// sample coordinates are clamped to the frame).
Tensor resize_bilinear(const Tensor& chw, int out_h, int out_w);

}  // namespace siam
