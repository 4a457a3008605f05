#pragma once

#include <vector>

#include "siamattack/image.hpp"
#include "siamattack/tensor.hpp"

namespace siam {

// Axis-aligned box in center form. Pixel coordinates, x right, y down.
struct Box {
    float cx = 0, cy = 0, w = 0, h = 0;

    Box() = default;
    Box(float cx_, float cy_, float w_, float h_);

    // Corner-width form (x, y = top-left), the annotation convention.
    static Box from_corner(float x, float y, float w, float h);
    float x1() const { return cx - 0.5f * w; }
    float y1() const { return cy - 0.5f * h; }
    float x2() const { return cx + 0.5f * w; }
    float y2() const { return cy + 0.5f * h; }
};

float iou(const Box& a, const Box& b);

// Anchor-relative box parameterization: center shift normalized by anchor
// size, log-scale size ratios.
struct Offsets {
    float dx = 0, dy = 0, dw = 0, dh = 0;
};

Offsets encode_offsets(const Box& anchor, const Box& box);
Box decode_offsets(const Box& anchor, const Offsets& off);

// Dense anchor set over the score map: score_size x score_size cells,
// K = ratios.size() anchors per cell, all sharing area (base_scale*stride)^2.
// Storage order is (row i, col j, ratio k).
struct AnchorGrid {
    int score_size = 0;
    int stride = 0;
    float region_center = 0;
    std::vector<float> ratios;
    float base_scale = 0;
    std::vector<Box> boxes;

    int K() const { return static_cast<int>(ratios.size()); }
    const Box& at(int i, int j, int k) const {
        return boxes[(static_cast<size_t>(i) * score_size + j) * ratios.size() + k];
    }
};

AnchorGrid make_anchor_grid(int score_size, int stride, std::vector<float> ratios,
                            float base_scale, float region_center);

// Square context side around a box, SiamRPN convention:
// s_z = sqrt((w+p)(h+p)) with p = (w+h)/2. The template is cropped at side
// s_z, the search region at side 2*s_z.
float context_side(const Box& b);

// Square crop centered at `center`, mean-padded outside the frame, resized to
// out_side x out_side.
Tensor crop_region(const Tensor& frame_chw, float cx, float cy, float side, int out_side);

}  // namespace siam
