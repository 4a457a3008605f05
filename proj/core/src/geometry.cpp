#include "siamattack/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "siamattack/error.hpp"

namespace siam {

Box::Box(float cx_, float cy_, float w_, float h_) : cx(cx_), cy(cy_), w(w_), h(h_) {
    if (!(w > 0.0f) || !(h > 0.0f))
        throw InvalidBoxError("dims " + std::to_string(w) + "x" + std::to_string(h));
}

Box Box::from_corner(float x, float y, float w, float h) {
    return Box(x + 0.5f * w, y + 0.5f * h, w, h);
}

float iou(const Box& a, const Box& b) {
    const float ix = std::max(0.0f, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
    const float iy = std::max(0.0f, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
    const float inter = ix * iy;
    const float uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0.0f ? inter / uni : 0.0f;
}

Offsets encode_offsets(const Box& anchor, const Box& box) {
    if (!(box.w > 0.0f) || !(box.h > 0.0f)) throw InvalidBoxError("encode target has non-positive dims");
    Offsets o;
    o.dx = (box.cx - anchor.cx) / anchor.w;
    o.dy = (box.cy - anchor.cy) / anchor.h;
    o.dw = std::log(box.w / anchor.w);
    o.dh = std::log(box.h / anchor.h);
    return o;
}

Box decode_offsets(const Box& anchor, const Offsets& off) {
    return Box(off.dx * anchor.w + anchor.cx, off.dy * anchor.h + anchor.cy,
               anchor.w * std::exp(off.dw), anchor.h * std::exp(off.dh));
}

AnchorGrid make_anchor_grid(int score_size, int stride, std::vector<float> ratios,
                            float base_scale, float region_center) {
    if (stride <= 0) throw ConfigError("anchor stride must be positive");
    if (ratios.empty()) throw ConfigError("anchor ratio list is empty");
    if (score_size <= 0 || score_size % 2 == 0) throw ConfigError("score_size must be odd and positive");

    AnchorGrid g;
    g.score_size = score_size;
    g.stride = stride;
    g.region_center = region_center;
    g.ratios = std::move(ratios);
    g.base_scale = base_scale;

    const float area_side = base_scale * static_cast<float>(stride);
    const int half = (score_size - 1) / 2;
    g.boxes.reserve(static_cast<size_t>(score_size) * score_size * g.ratios.size());
    for (int i = 0; i < score_size; ++i)
        for (int j = 0; j < score_size; ++j) {
            const float cy = static_cast<float>(i - half) * stride + region_center;
            const float cx = static_cast<float>(j - half) * stride + region_center;
            for (float r : g.ratios) {
                const float w = area_side / std::sqrt(r);  // r = h/w, w*h = area_side^2
                const float h = area_side * std::sqrt(r);
                g.boxes.emplace_back(cx, cy, w, h);
            }
        }
    return g;
}

float context_side(const Box& b) {
    const float p = 0.5f * (b.w + b.h);
    return std::sqrt((b.w + p) * (b.h + p));
}

Tensor crop_region(const Tensor& frame_chw, float cx, float cy, float side, int out_side) {
    if (!(side > 0.0f) || out_side <= 0) throw ConfigError("crop side must be positive");
    if (frame_chw.numel() == 0) throw ConfigError("crop source frame is empty");
    Tensor out = crop_resize(frame_chw, cx, cy, side, out_side, channel_means(frame_chw));
    // Interpolation of in-range pixels can only stay in [0,1]; clamping pins
    // that down so a zero perturbation is a bitwise no-op after clipping.
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = std::min(1.0f, std::max(0.0f, out[i]));
    return out;
}

}  // namespace siam
