#include "siamattack/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "siamattack/error.hpp"
#include "siamattack/rng.hpp"

namespace fs = std::filesystem;

namespace siam {

namespace {

constexpr float kTau = 6.28318530717958647692f;

// Bilinearly interpolated lattice of random RGB values. Two octaves of this
// make the background; one octave in sprite-local coordinates textures the
// sprites.
struct NoiseField {
    int gw = 0, gh = 0;
    float cell = 1;
    std::vector<std::array<float, 3>> nodes;

    static NoiseField make(float extent_x, float extent_y, float cell, float lo, float hi, Rng& rng) {
        NoiseField f;
        f.cell = cell;
        f.gw = static_cast<int>(std::ceil(extent_x / cell)) + 2;
        f.gh = static_cast<int>(std::ceil(extent_y / cell)) + 2;
        f.nodes.resize(static_cast<size_t>(f.gw) * f.gh);
        for (auto& n : f.nodes)
            for (int c = 0; c < 3; ++c) n[static_cast<size_t>(c)] = rng.uniform(lo, hi);
        return f;
    }

    std::array<float, 3> at(float x, float y) const {
        const float gx = std::max(0.0f, x / cell);
        const float gy = std::max(0.0f, y / cell);
        int ix = std::min(static_cast<int>(gx), gw - 2);
        int iy = std::min(static_cast<int>(gy), gh - 2);
        const float fx = std::min(gx - static_cast<float>(ix), 1.0f);
        const float fy = std::min(gy - static_cast<float>(iy), 1.0f);
        std::array<float, 3> out{};
        for (int c = 0; c < 3; ++c) {
            const float a = nodes[static_cast<size_t>(iy) * gw + ix][static_cast<size_t>(c)];
            const float b = nodes[static_cast<size_t>(iy) * gw + ix + 1][static_cast<size_t>(c)];
            const float d = nodes[(static_cast<size_t>(iy) + 1) * gw + ix][static_cast<size_t>(c)];
            const float e = nodes[(static_cast<size_t>(iy) + 1) * gw + ix + 1][static_cast<size_t>(c)];
            out[static_cast<size_t>(c)] = (a * (1 - fx) + b * fx) * (1 - fy) + (d * (1 - fx) + e * fx) * fy;
        }
        return out;
    }
};

std::array<float, 3> hsv_to_rgb(float h, float s, float v) {
    h = h - std::floor(h);
    const float c = v * s;
    const float hp = h * 6.0f;
    const float x = c * (1.0f - std::fabs(std::fmod(hp, 2.0f) - 1.0f));
    float r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const float m = v - c;
    return {r + m, g + m, b + m};
}

struct Sprite {
    float cx = 0, cy = 0;   // center
    float w = 0, h = 0;     // current extent
    float vx = 0, vy = 0;
    std::array<float, 3> color{};
    NoiseField texture;
};

// Draws an anti-aliased textured ellipse with a darker rim and brighter core;
// the radial shading gives the tracker's size regression a usable cue.
void draw_sprite(std::vector<float>& rgb, int fw, int fh, const Sprite& s) {
    const float rx = 0.5f * s.w, ry = 0.5f * s.h;
    const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - rx - 1)));
    const int x1 = std::min(fw - 1, static_cast<int>(std::ceil(s.cx + rx + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - ry - 1)));
    const int y1 = std::min(fh - 1, static_cast<int>(std::ceil(s.cy + ry + 1)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const float nx = (static_cast<float>(x) - s.cx) / rx;
            const float ny = (static_cast<float>(y) - s.cy) / ry;
            const float rho = std::sqrt(nx * nx + ny * ny);
            const float alpha = std::clamp(4.0f * (1.0f - rho), 0.0f, 1.0f);
            if (alpha <= 0.0f) continue;
            const auto tex = s.texture.at((nx + 1.0f) * rx, (ny + 1.0f) * ry);
            float shade = 0.75f + 0.5f * tex[1];
            if (rho > 0.72f) shade *= 0.55f;        // rim
            else if (rho < 0.28f) shade *= 1.30f;   // core
            float* px = &rgb[(static_cast<size_t>(y) * fw + x) * 3];
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(s.color[static_cast<size_t>(c)] * shade *
                                               (0.8f + 0.4f * tex[static_cast<size_t>(c)]),
                                           0.0f, 1.0f);
                px[c] = px[c] * (1.0f - alpha) + v * alpha;
            }
        }
}

// Keeps the box fully inside the frame; reflects velocity on contact.
void bounce(Sprite& s, int fw, int fh, float max_half_w, float max_half_h) {
    if (s.cx - max_half_w < 0) { s.cx = max_half_w; s.vx = std::fabs(s.vx); }
    if (s.cx + max_half_w > static_cast<float>(fw)) { s.cx = static_cast<float>(fw) - max_half_w; s.vx = -std::fabs(s.vx); }
    if (s.cy - max_half_h < 0) { s.cy = max_half_h; s.vy = std::fabs(s.vy); }
    if (s.cy + max_half_h > static_cast<float>(fh)) { s.cy = static_cast<float>(fh) - max_half_h; s.vy = -std::fabs(s.vy); }
}

}  // namespace

VideoClip generate_video(const SyntheticSpec& spec) {
    if (spec.frame_w <= 0 || spec.frame_h <= 0 || spec.num_frames <= 0)
        throw ConfigError("synthetic spec has non-positive dimensions");
    if (spec.sprite_w <= 0 || spec.sprite_h <= 0) throw ConfigError("sprite size must be positive");

    Rng rng(spec.seed, 0x5e9);
    const int fw = spec.frame_w, fh = spec.frame_h;

    // Static background, two octaves.
    Rng bg_rng = rng.fork(1);
    NoiseField coarse = NoiseField::make(static_cast<float>(fw), static_cast<float>(fh), 40.0f, 0.18f, 0.72f, bg_rng);
    NoiseField fine = NoiseField::make(static_cast<float>(fw), static_cast<float>(fh), 13.0f, -0.06f, 0.06f, bg_rng);
    std::vector<float> background(static_cast<size_t>(fw) * fh * 3);
    for (int y = 0; y < fh; ++y)
        for (int x = 0; x < fw; ++x) {
            const auto a = coarse.at(static_cast<float>(x), static_cast<float>(y));
            const auto b = fine.at(static_cast<float>(x), static_cast<float>(y));
            float* px = &background[(static_cast<size_t>(y) * fw + x) * 3];
            for (int c = 0; c < 3; ++c)
                px[c] = std::clamp(a[static_cast<size_t>(c)] + b[static_cast<size_t>(c)], 0.0f, 1.0f);
        }

    // Target sprite.
    Rng tgt_rng = rng.fork(2);
    const float hue = tgt_rng.uniform();
    Sprite target;
    target.w = spec.sprite_w;
    target.h = spec.sprite_h;
    target.color = hsv_to_rgb(hue, tgt_rng.uniform(0.65f, 0.95f), tgt_rng.uniform(0.7f, 1.0f));
    target.texture = NoiseField::make(spec.sprite_w, spec.sprite_h, std::max(4.0f, spec.sprite_w / 5.0f), 0.0f, 1.0f, tgt_rng);

    const float max_scale = 1.0f + spec.scale_drift;
    const float mhw = 0.5f * spec.sprite_w * max_scale + 2.0f;
    const float mhh = 0.5f * spec.sprite_h * max_scale + 2.0f;
    target.cx = tgt_rng.uniform(mhw, static_cast<float>(fw) - mhw);
    target.cy = tgt_rng.uniform(mhh, static_cast<float>(fh) - mhh);
    target.vx = tgt_rng.uniform(1.2f, 3.0f) * (tgt_rng.uniform() < 0.5f ? -1.0f : 1.0f);
    target.vy = tgt_rng.uniform(1.2f, 3.0f) * (tgt_rng.uniform() < 0.5f ? -1.0f : 1.0f);

    // Sinusoidal parameters (used only by that model).
    const float sin_cx = target.cx, sin_cy = target.cy;
    float amp_x = tgt_rng.uniform(30.0f, 80.0f);
    float amp_y = tgt_rng.uniform(20.0f, 55.0f);
    const float om_x = tgt_rng.uniform(0.05f, 0.11f), ph_x = tgt_rng.uniform(0.0f, kTau);
    const float om_y = tgt_rng.uniform(0.05f, 0.11f), ph_y = tgt_rng.uniform(0.0f, kTau);
    // The path is c + amp*(sin(om*t + ph) - sin(ph)); its extremes sit
    // amp*(1 +- sin(ph)) from c, so the wall clearance must buy both.
    const auto fit_amp = [](float amp, float lo_room, float hi_room, float ph) {
        const float lo_f = 1.0f + std::sin(ph), hi_f = 1.0f - std::sin(ph);
        if (lo_f > 1e-6f) amp = std::min(amp, lo_room / lo_f);
        if (hi_f > 1e-6f) amp = std::min(amp, hi_room / hi_f);
        return std::max(amp, 0.0f);
    };
    amp_x = fit_amp(amp_x, sin_cx - mhw, static_cast<float>(fw) - mhw - sin_cx, ph_x);
    amp_y = fit_amp(amp_y, sin_cy - mhh, static_cast<float>(fh) - mhh - sin_cy, ph_y);

    const float drift_phase = tgt_rng.uniform(0.0f, kTau);

    // Distractor sprites, hues pushed away from the target's.
    std::vector<Sprite> distractors;
    Rng dis_rng = rng.fork(3);
    for (int i = 0; i < spec.distractors; ++i) {
        Sprite d;
        const float rel = dis_rng.uniform(0.65f, 1.25f);
        d.w = spec.sprite_w * rel;
        d.h = spec.sprite_h * dis_rng.uniform(0.65f, 1.25f);
        const float dhue = hue + 0.33f + 0.34f * dis_rng.uniform();
        d.color = hsv_to_rgb(dhue, dis_rng.uniform(0.6f, 0.9f), dis_rng.uniform(0.55f, 0.95f));
        d.texture = NoiseField::make(d.w, d.h, std::max(4.0f, d.w / 4.0f), 0.0f, 1.0f, dis_rng);
        d.cx = dis_rng.uniform(0.5f * d.w + 2.0f, static_cast<float>(fw) - 0.5f * d.w - 2.0f);
        d.cy = dis_rng.uniform(0.5f * d.h + 2.0f, static_cast<float>(fh) - 0.5f * d.h - 2.0f);
        d.vx = dis_rng.uniform(0.8f, 2.2f) * (dis_rng.uniform() < 0.5f ? -1.0f : 1.0f);
        d.vy = dis_rng.uniform(0.8f, 2.2f) * (dis_rng.uniform() < 0.5f ? -1.0f : 1.0f);
        distractors.push_back(std::move(d));
    }

    Rng walk_rng = rng.fork(4);

    VideoClip clip;
    clip.frames.reserve(static_cast<size_t>(spec.num_frames));
    clip.gt.reserve(static_cast<size_t>(spec.num_frames));
    std::vector<float> rgb;
    for (int t = 0; t < spec.num_frames; ++t) {
        // Advance target.
        if (t > 0) {
            switch (spec.motion) {
                case MotionModel::kConstantVelocity:
                    target.cx += target.vx;
                    target.cy += target.vy;
                    bounce(target, fw, fh, mhw, mhh);
                    break;
                case MotionModel::kSinusoidal:
                    target.cx = sin_cx + amp_x * std::sin(om_x * static_cast<float>(t) + ph_x) -
                                amp_x * std::sin(ph_x);
                    target.cy = sin_cy + amp_y * std::sin(om_y * static_cast<float>(t) + ph_y) -
                                amp_y * std::sin(ph_y);
                    break;
                case MotionModel::kRandomWalk:
                    target.vx = std::clamp(target.vx + 0.6f * walk_rng.normal(), -3.5f, 3.5f);
                    target.vy = std::clamp(target.vy + 0.6f * walk_rng.normal(), -3.5f, 3.5f);
                    target.cx += target.vx;
                    target.cy += target.vy;
                    bounce(target, fw, fh, mhw, mhh);
                    break;
            }
        }
        const float scale = 1.0f + spec.scale_drift * std::sin(kTau * static_cast<float>(t) / 60.0f + drift_phase);
        const float cur_w = spec.sprite_w * scale;
        const float cur_h = spec.sprite_h * scale;

        // Advance distractors, repelled when they close in on the target.
        for (auto& d : distractors) {
            if (t > 0) {
                d.cx += d.vx;
                d.cy += d.vy;
                bounce(d, fw, fh, 0.5f * d.w + 2.0f, 0.5f * d.h + 2.0f);
            }
            const float sep_x = d.cx - target.cx, sep_y = d.cy - target.cy;
            const float min_sep = 0.6f * (std::max(cur_w, cur_h) + std::max(d.w, d.h));
            const float dist = std::sqrt(sep_x * sep_x + sep_y * sep_y);
            if (dist < min_sep && dist > 1e-3f) {
                const float speed = std::sqrt(d.vx * d.vx + d.vy * d.vy);
                d.vx = speed * sep_x / dist;
                d.vy = speed * sep_y / dist;
            }
        }

        // Render.
        rgb = background;
        for (const auto& d : distractors) draw_sprite(rgb, fw, fh, d);
        Sprite cur = target;
        cur.w = cur_w;
        cur.h = cur_h;
        draw_sprite(rgb, fw, fh, cur);

        ImageU8 frame(fh, fw);
        for (size_t i = 0; i < rgb.size(); ++i)
            frame.px[i] = static_cast<uint8_t>(std::lround(std::clamp(rgb[i], 0.0f, 1.0f) * 255.0f));
        clip.frames.push_back(std::move(frame));
        clip.gt.emplace_back(target.cx, target.cy, cur_w, cur_h);
    }
    return clip;
}

Sequence Sequence::from_dir(const std::string& dir) {
    Sequence s;
    s.name_ = fs::path(dir).filename().string();

    const fs::path gt_path = fs::path(dir) / "groundtruth.txt";
    std::ifstream gt_file(gt_path);
    if (!gt_file) throw IoError("missing " + gt_path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(gt_file, line)) {
        ++lineno;
        if (line.empty()) continue;
        float v[4];
        const char* p = line.c_str();
        const char* end = p + line.size();
        for (int i = 0; i < 4; ++i) {
            auto [next, ec] = std::from_chars(p, end, v[i]);
            if (ec != std::errc{})
                throw ParseError(gt_path.string() + ":" + std::to_string(lineno) +
                                 ": expected 4 comma-separated numbers, got '" + line + "'");
            p = next;
            if (i < 3) {
                if (p >= end || *p != ',')
                    throw ParseError(gt_path.string() + ":" + std::to_string(lineno) +
                                     ": expected ',' after field " + std::to_string(i + 1));
                ++p;
            }
        }
        if (v[2] <= 0 || v[3] <= 0)
            throw ParseError(gt_path.string() + ":" + std::to_string(lineno) + ": non-positive box size");
        s.gt_.push_back(Box::from_corner(v[0], v[1], v[2], v[3]));
    }

    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string ext = e.path().extension().string();
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
            s.paths_.push_back(e.path().string());
    }
    std::sort(s.paths_.begin(), s.paths_.end());

    if (s.paths_.size() != s.gt_.size())
        throw ParseError(dir + ": " + std::to_string(s.paths_.size()) + " frames but " +
                         std::to_string(s.gt_.size()) + " annotation lines");
    if (s.gt_.empty()) throw ParseError(dir + ": empty sequence");
    return s;
}

Sequence Sequence::in_memory(std::string name, VideoClip clip) {
    if (clip.frames.size() != clip.gt.size())
        throw ShapeError("clip has " + std::to_string(clip.frames.size()) + " frames, " +
                         std::to_string(clip.gt.size()) + " boxes");
    Sequence s;
    s.name_ = std::move(name);
    s.mem_ = std::move(clip.frames);
    s.gt_ = std::move(clip.gt);
    return s;
}

ImageU8 Sequence::frame(int i) const {
    if (!mem_.empty()) return mem_[static_cast<size_t>(i)];
    return read_image(paths_[static_cast<size_t>(i)]);
}

Dataset load_dataset(const std::string& root) {
    if (!fs::is_directory(root)) throw IoError("dataset root '" + root + "' is not a directory");
    std::vector<std::string> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path().string());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw IoError("dataset root '" + root + "' has no sequence directories");

    Dataset ds;
    ds.sequences.reserve(dirs.size());
    for (const auto& d : dirs) ds.sequences.push_back(Sequence::from_dir(d));
    return ds;
}

SyntheticSpec corpus_spec(const std::string& split, int index, int num_frames) {
    uint64_t base;
    if (split == "train") base = 1000;
    else if (split == "val") base = 2000;
    else if (split == "test") base = 3000;
    else throw ConfigError("unknown split '" + split + "'");

    SyntheticSpec spec;
    spec.seed = base + static_cast<uint64_t>(index);
    spec.num_frames = num_frames;

    Rng meta(spec.seed ^ 0xC0FFEEULL, 99);
    spec.motion = static_cast<MotionModel>(index % 3);
    spec.sprite_w = meta.uniform(30.0f, 56.0f);
    spec.sprite_h = std::clamp(spec.sprite_w * meta.uniform(0.7f, 1.3f), 24.0f, 52.0f);
    spec.distractors = 1 + meta.uniform_int(3);
    spec.scale_drift = meta.uniform() < 0.5f ? 0.0f : meta.uniform(0.04f, 0.12f);
    return spec;
}

void write_corpus(const CorpusConfig& cfg) {
    const std::vector<std::pair<std::string, int>> splits = {
        {"train", cfg.train}, {"val", cfg.val}, {"test", cfg.test}};
    for (const auto& [split, count] : splits) {
        for (int i = 0; i < count; ++i) {
            const SyntheticSpec spec = corpus_spec(split, i, cfg.num_frames);
            const VideoClip clip = generate_video(spec);
            char seq_name[32];
            std::snprintf(seq_name, sizeof(seq_name), "seq_%03d", i);
            const fs::path dir = fs::path(cfg.out_dir) / split / seq_name;
            fs::create_directories(dir);

            std::ofstream gt(dir / "groundtruth.txt");
            if (!gt) throw IoError("cannot write " + (dir / "groundtruth.txt").string());
            char buf[128];
            for (size_t t = 0; t < clip.frames.size(); ++t) {
                char frame_name[32];
                std::snprintf(frame_name, sizeof(frame_name), "%05zu.png", t);
                write_image((dir / frame_name).string(), clip.frames[t]);
                const Box& b = clip.gt[t];
                std::snprintf(buf, sizeof(buf), "%.3f,%.3f,%.3f,%.3f\n", b.x1(), b.y1(), b.w, b.h);
                gt << buf;
            }
        }
    }
}

}  // namespace siam
