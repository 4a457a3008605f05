#include "siamattack/generator.hpp"

#include <cmath>

#include <json.hpp>

#include "siamattack/checkpoint.hpp"
#include "siamattack/error.hpp"

namespace siam {

namespace {

thread_local uint64_t g_generator_calls = 0;

constexpr float kTau = 6.28318530717958647692f;

// Shared scalar contract for apply()/apply_var(): the exact float op order
// matters for the bit-exactness guarantees, so both paths go through this.
inline float clip_pixel(float s, float delta, float eps01) {
    float v = s + delta;
    const float lo = s - eps01;
    const float hi = s + eps01;
    v = v < lo ? lo : v;
    v = v > hi ? hi : v;
    v = v < 0.0f ? 0.0f : v;
    v = v > 1.0f ? 1.0f : v;
    return v;
}

}  // namespace

std::string GeneratorConfig::to_json() const {
    nlohmann::json j;
    j["epsilon"] = epsilon;
    j["conditional"] = conditional;
    j["in_size"] = in_size;
    j["out_size"] = out_size;
    j["channels"] = {ch1, ch2, ch3, ch4, chm, cd4, cd3, cd2, cd1};
    return j.dump();
}

GeneratorConfig GeneratorConfig::from_json(const std::string& json) {
    GeneratorConfig c;
    const auto j = nlohmann::json::parse(json);
    c.epsilon = j.at("epsilon").get<float>();
    c.conditional = j.at("conditional").get<bool>();
    c.in_size = j.at("in_size").get<int>();
    c.out_size = j.at("out_size").get<int>();
    const auto ch = j.at("channels");
    c.ch1 = ch.at(0);
    c.ch2 = ch.at(1);
    c.ch3 = ch.at(2);
    c.ch4 = ch.at(3);
    c.chm = ch.at(4);
    c.cd4 = ch.at(5);
    c.cd3 = ch.at(6);
    c.cd2 = ch.at(7);
    c.cd1 = ch.at(8);
    return c;
}

GeneratorNet::GeneratorNet(GeneratorConfig cfg, Rng& rng) : cfg_(cfg) {
    if (cfg_.epsilon <= 0) throw ConfigError("generator epsilon must be positive");
    const int in_ch = cfg_.conditional ? 4 : 3;
    e1_ = nn::Conv2d("g.e1", in_ch, cfg_.ch1, 3, 2, 1, rng);
    e2_ = nn::Conv2d("g.e2", cfg_.ch1, cfg_.ch2, 3, 2, 1, rng);
    e3_ = nn::Conv2d("g.e3", cfg_.ch2, cfg_.ch3, 3, 2, 1, rng);
    e4_ = nn::Conv2d("g.e4", cfg_.ch3, cfg_.ch4, 3, 2, 1, rng);
    mid_ = nn::Conv2d("g.mid", cfg_.ch4, cfg_.chm, 3, 1, 1, rng);
    d4_ = nn::Conv2d("g.d4", cfg_.chm + cfg_.ch3, cfg_.cd4, 3, 1, 1, rng);
    d3_ = nn::Conv2d("g.d3", cfg_.cd4 + cfg_.ch2, cfg_.cd3, 3, 1, 1, rng);
    d2_ = nn::Conv2d("g.d2", cfg_.cd3 + cfg_.ch1, cfg_.cd2, 3, 1, 1, rng);
    d1_ = nn::Conv2d("g.d1", cfg_.cd2, cfg_.cd1, 3, 1, 1, rng);
    d0_ = nn::Conv2d("g.d0", cfg_.cd1, 3, 3, 1, 1, rng);
}

std::vector<nn::Param> GeneratorNet::params() const {
    std::vector<nn::Param> out;
    for (const auto* c : {&e1_, &e2_, &e3_, &e4_, &mid_, &d4_, &d3_, &d2_, &d1_, &d0_})
        c->collect(out);
    return out;
}

ag::Var GeneratorNet::forward(const ag::Var& input) const {
    const int want_ch = cfg_.conditional ? 4 : 3;
    if (input->value.ndim() != 3 || input->value.dim(0) != want_ch ||
        input->value.dim(1) != cfg_.in_size || input->value.dim(2) != cfg_.in_size)
        throw ShapeError("generator input " + input->value.shape_str() + ", want (" +
                         std::to_string(want_ch) + "," + std::to_string(cfg_.in_size) + "," +
                         std::to_string(cfg_.in_size) + ")");
    ++g_generator_calls;

    const auto x1 = ag::relu(e1_(input));
    const auto x2 = ag::relu(e2_(x1));
    const auto x3 = ag::relu(e3_(x2));
    const auto x4 = ag::relu(e4_(x3));
    const auto m = ag::relu(mid_(x4));
    const auto u4 = ag::relu(d4_(ag::concat_ch(ag::upsample2x(m), x3)));
    const auto u3 = ag::relu(d3_(ag::concat_ch(ag::upsample2x(u4), x2)));
    const auto u2 = ag::relu(d2_(ag::concat_ch(ag::upsample2x(u3), x1)));
    const auto u1 = ag::relu(d1_(ag::upsample2x(u2)));
    const auto u0 = d0_(ag::upsample2x(u1));
    const auto cropped = ag::crop_hw(u0, 0, 0, cfg_.out_size, cfg_.out_size);
    return ag::scale(ag::tanh_act(cropped), cfg_.epsilon / 255.0f);
}

void GeneratorNet::save(const std::string& path) const {
    save_checkpoint(path, snapshot_params("generator", cfg_.to_json(), params()));
}

GeneratorNet GeneratorNet::load(const std::string& path) {
    const Checkpoint ck = load_checkpoint(path);
    if (ck.kind != "generator") throw IoError("'" + path + "' is a " + ck.kind + " checkpoint");
    Rng rng(0);
    GeneratorNet g(GeneratorConfig::from_json(ck.config_json), rng);
    restore_params(ck, g.params());
    return g;
}

Tensor make_generator_input(const GeneratorNet& g, const Tensor& template_chw,
                            const ConditionMask* mask) {
    check_shape(template_chw, {3, g.cfg().in_size, g.cfg().in_size}, "generator template");
    if (g.conditional() && mask == nullptr)
        throw ConditioningError("conditional generator needs a direction mask");
    if (!g.conditional() && mask != nullptr)
        throw ConditioningError("unconditional generator was given a mask");
    if (!g.conditional()) return template_chw;

    const Tensor up = upsample_mask(*mask, g.cfg().in_size);
    Tensor input({4, g.cfg().in_size, g.cfg().in_size});
    std::copy(template_chw.data(), template_chw.data() + template_chw.numel(), input.data());
    std::copy(up.data(), up.data() + up.numel(), input.data() + template_chw.numel());
    return input;
}

Perturbation generate(const GeneratorNet& g, const Tensor& template_chw,
                      const ConditionMask* mask) {
    const Tensor input = make_generator_input(g, template_chw, mask);
    ag::NoGrad ng;
    Perturbation p;
    p.delta = g.forward(ag::leaf(input))->value;
    p.epsilon = g.cfg().epsilon;
    return p;
}

Tensor apply(const Tensor& search, const Perturbation& p) {
    if (!search.same_shape(p.delta))
        throw ShapeError("apply: search " + search.shape_str() + " vs delta " + p.delta.shape_str());
    const float eps01 = p.epsilon / 255.0f;
    Tensor out = search;
    float* o = out.data();
    const float* d = p.delta.data();
    for (int64_t i = 0; i < out.numel(); ++i) o[i] = clip_pixel(o[i], d[i], eps01);
    return out;
}

ag::Var apply_var(const Tensor& search, const ag::Var& delta, float epsilon) {
    if (!search.same_shape(delta->value))
        throw ShapeError("apply: search " + search.shape_str() + " vs delta " +
                         delta->value.shape_str());
    const float eps01 = epsilon / 255.0f;
    Tensor out = search;
    float* o = out.data();
    const float* d = delta->value.data();
    for (int64_t i = 0; i < out.numel(); ++i) o[i] = clip_pixel(o[i], d[i], eps01);

    // Gradient passes where neither the rails nor the [0,1] range clamp bound
    // the output, i.e. where out == search + delta held after rounding.
    return ag::make_op(std::move(out), {delta}, [search, eps01](ag::Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        const float* s = search.data();
        const float* d = p->value.data();
        const float* src = n.grad.data();
        float* dst = g.data();
        for (int64_t i = 0; i < g.numel(); ++i) {
            const float raw = s[i] + d[i];
            if (n.value[i] == raw && raw >= 0.0f && raw <= 1.0f) dst[i] += src[i];
        }
    });
}

ConditionMask make_direction_mask(int k, int K, int d, float box_side, const AnchorGrid& grid) {
    if (K < 1) throw ConfigError("direction count K must be >= 1");
    if (k < 0 || k >= K) throw ConfigError("direction index out of range");
    if (d < 0) throw ConfigError("shift distance must be non-negative");
    if (box_side <= 0) throw ConfigError("mask box side must be positive");

    const int S = grid.score_size;
    const int c = (S - 1) / 2;
    const float theta = kTau * static_cast<float>(k) / static_cast<float>(K);
    const int dj = static_cast<int>(std::lround(static_cast<float>(d) * std::cos(theta)));
    const int di = static_cast<int>(std::lround(static_cast<float>(d) * std::sin(theta)));
    const int ti = c + di, tj = c + dj;
    if (ti < 0 || ti >= S || tj < 0 || tj >= S)
        throw ConfigError("displaced mask center (" + std::to_string(ti) + "," + std::to_string(tj) +
                          ") is off the " + std::to_string(S) + "-cell grid");

    // A cell is active when its center falls inside the half-open box
    // [center - side/2, center + side/2); 64 px at stride 8 spans 8x8 cells.
    ConditionMask m;
    m.grid = Tensor::zeros({S, S});
    const float half = 0.5f * box_side;
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j) {
            const float py = static_cast<float>((i - ti) * grid.stride);
            const float px = static_cast<float>((j - tj) * grid.stride);
            if (py >= -half && py < half && px >= -half && px < half)
                m.grid[static_cast<int64_t>(i) * S + j] = 1.0f;
        }
    return m;
}

Box direction_target_box(int k, int K, int d, float box_side, const AnchorGrid& grid) {
    const int S = grid.score_size;
    const int c = (S - 1) / 2;
    const float theta = kTau * static_cast<float>(k) / static_cast<float>(K);
    const int dj = static_cast<int>(std::lround(static_cast<float>(d) * std::cos(theta)));
    const int di = static_cast<int>(std::lround(static_cast<float>(d) * std::sin(theta)));
    const int ti = c + di, tj = c + dj;
    if (ti < 0 || ti >= S || tj < 0 || tj >= S)
        throw ConfigError("displaced target center is off the grid");
    const float cx = static_cast<float>((tj - c) * grid.stride) + grid.region_center;
    const float cy = static_cast<float>((ti - c) * grid.stride) + grid.region_center;
    return Box(cx, cy, box_side, box_side);
}

Tensor upsample_mask(const ConditionMask& mask, int out_size) {
    const int S = mask.grid.dim(0);
    Tensor out({1, out_size, out_size});
    for (int y = 0; y < out_size; ++y) {
        const int sy = std::min(S - 1, (2 * y + 1) * S / (2 * out_size));
        for (int x = 0; x < out_size; ++x) {
            const int sx = std::min(S - 1, (2 * x + 1) * S / (2 * out_size));
            out.at(0, y, x) = mask.grid[static_cast<int64_t>(sy) * S + sx];
        }
    }
    return out;
}

uint64_t generator_call_count() { return g_generator_calls; }
void reset_generator_call_count() { g_generator_calls = 0; }

}  // namespace siam
