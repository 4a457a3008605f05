#include "siamattack/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>

#include <json.hpp>

#include "siamattack/error.hpp"

namespace siam {

namespace {

float softplus(float x) {
    return std::max(x, 0.0f) + std::log1p(std::exp(-std::abs(x)));
}

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

void check_maps(const Tensor& cls, const Tensor& reg) {
    if (cls.ndim() != 3 || reg.ndim() != 3 || cls.dim(1) != reg.dim(1) ||
        cls.dim(2) != reg.dim(2) || cls.dim(0) % 2 != 0 ||
        reg.dim(0) != 2 * cls.dim(0)) {
        throw ShapeError("loss: cls " + cls.shape_str() + " and reg " + reg.shape_str() +
                         " are not (2K,S,S)/(4K,S,S)");
    }
}

}  // namespace

void LossConfig::validate() const {
    if (!(tau > 0.0f && tau < 1.0f)) throw ConfigError("loss: tau must be in (0,1)");
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0 || lambda5 < 0)
        throw ConfigError("loss: negative weight");
    if (shift_d < 0) throw ConfigError("loss: shift_d must be >= 0");
    if (!(target_box_side > 0)) throw ConfigError("loss: target_box_side must be > 0");
}

std::string LossConfig::to_json() const {
    nlohmann::json j;
    j["tau"] = tau;
    j["margin_cls"] = margin_cls;
    j["margin_w"] = margin_w;
    j["margin_h"] = margin_h;
    j["lambda1"] = lambda1;
    j["lambda2"] = lambda2;
    j["lambda3"] = lambda3;
    j["lambda4"] = lambda4;
    j["lambda5"] = lambda5;
    j["shift_d"] = shift_d;
    j["target_box_side"] = target_box_side;
    j["fool_cls"] = fool_cls;
    j["fool_reg"] = fool_reg;
    j["shift_cls"] = shift_cls;
    j["shift_reg"] = shift_reg;
    j["top1_fallback"] = top1_fallback;
    j["mean_over_selected"] = mean_over_selected;
    return j.dump();
}

LossConfig LossConfig::from_json(const std::string& json) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("loss config: ") + e.what());
    }
    static const std::set<std::string> known = {
        "tau",       "margin_cls", "margin_w",  "margin_h",        "lambda1",
        "lambda2",   "lambda3",    "lambda4",   "lambda5",         "shift_d",
        "target_box_side", "fool_cls", "fool_reg", "shift_cls", "shift_reg",
        "top1_fallback",   "mean_over_selected"};
    for (const auto& item : j.items()) {
        if (!known.count(item.key()))
            throw ConfigError("loss config: unknown key '" + item.key() + "'");
    }
    LossConfig c;
    c.tau = j.value("tau", c.tau);
    c.margin_cls = j.value("margin_cls", c.margin_cls);
    c.margin_w = j.value("margin_w", c.margin_w);
    c.margin_h = j.value("margin_h", c.margin_h);
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    c.lambda3 = j.value("lambda3", c.lambda3);
    c.lambda4 = j.value("lambda4", c.lambda4);
    c.lambda5 = j.value("lambda5", c.lambda5);
    c.shift_d = j.value("shift_d", c.shift_d);
    c.target_box_side = j.value("target_box_side", c.target_box_side);
    c.fool_cls = j.value("fool_cls", c.fool_cls);
    c.fool_reg = j.value("fool_reg", c.fool_reg);
    c.shift_cls = j.value("shift_cls", c.shift_cls);
    c.shift_reg = j.value("shift_reg", c.shift_reg);
    c.top1_fallback = j.value("top1_fallback", c.top1_fallback);
    c.mean_over_selected = j.value("mean_over_selected", c.mean_over_selected);
    c.validate();
    return c;
}

std::vector<int> select_anchors(const ScoreMaps& clean, const LossConfig& cfg) {
    check_maps(clean.cls, clean.reg);
    const int K = static_cast<int>(clean.cls.dim(0)) / 2;
    const int S = static_cast<int>(clean.cls.dim(1));
    std::vector<int> out;
    int best = -1;
    float best_prob = -1.0f;
    for (int k = 0; k < K; ++k) {
        for (int i = 0; i < S; ++i) {
            for (int j = 0; j < S; ++j) {
                const float p = clean.fg_prob(k, i, j);
                const int flat = (k * S + i) * S + j;
                if (p > cfg.tau) out.push_back(flat);
                if (p > best_prob) {
                    best_prob = p;
                    best = flat;
                }
            }
        }
    }
    if (out.empty() && cfg.top1_fallback && best >= 0) out.push_back(best);
    return out;
}

ag::Var fool_loss(const ScoreMaps& clean, const ScoreMapsVar& adv, const LossConfig& cfg) {
    return fool_loss_selected(select_anchors(clean, cfg), adv, cfg);
}

ag::Var fool_loss_selected(const std::vector<int>& selected, const ScoreMapsVar& adv,
                           const LossConfig& cfg) {
    cfg.validate();
    check_maps(adv.cls->value, adv.reg->value);
    const int K = static_cast<int>(adv.cls->value.dim(0)) / 2;
    const int S = static_cast<int>(adv.cls->value.dim(1));
    if (selected.empty()) return ag::leaf(Tensor::scalar(0.0f));
    for (int a : selected) {
        if (a < 0 || a >= K * S * S)
            throw ShapeError("fool_loss: selected anchor index out of range");
    }
    const float w = cfg.mean_over_selected ? 1.0f / static_cast<float>(selected.size()) : 1.0f;

    const Tensor& cls = adv.cls->value;
    const Tensor& reg = adv.reg->value;
    double acc = 0.0;
    for (int a : selected) {
        const int k = a / (S * S), i = (a / S) % S, j = a % S;
        if (cfg.fool_cls) {
            const float fb = cls.at(K + k, i, j) - cls.at(k, i, j);
            acc += static_cast<double>(cfg.lambda1) * w * std::max(fb, cfg.margin_cls);
        }
        if (cfg.fool_reg) {
            const float dw = reg.at(4 * k + 2, i, j);
            const float dh = reg.at(4 * k + 3, i, j);
            acc += static_cast<double>(cfg.lambda2) * w *
                   (std::max(dw, cfg.margin_w) + std::max(dh, cfg.margin_h));
        }
    }

    auto sel = selected;  // keep alive in the closure
    return ag::make_op(Tensor::scalar(static_cast<float>(acc)), {adv.cls, adv.reg},
                       [sel, cfg, w, K, S](ag::Node& n) {
                           const float g = n.grad[0];
                           auto& cls_p = *n.parents[0];
                           auto& reg_p = *n.parents[1];
                           for (int a : sel) {
                               const int k = a / (S * S), i = (a / S) % S, j = a % S;
                               if (cfg.fool_cls && cls_p.requires_grad) {
                                   const float fb = cls_p.value.at(K + k, i, j) -
                                                    cls_p.value.at(k, i, j);
                                   if (fb > cfg.margin_cls) {
                                       cls_p.ensure_grad();
                                       cls_p.grad.at(K + k, i, j) += cfg.lambda1 * w * g;
                                       cls_p.grad.at(k, i, j) -= cfg.lambda1 * w * g;
                                   }
                               }
                               if (cfg.fool_reg && reg_p.requires_grad) {
                                   reg_p.ensure_grad();
                                   if (reg_p.value.at(4 * k + 2, i, j) > cfg.margin_w)
                                       reg_p.grad.at(4 * k + 2, i, j) += cfg.lambda2 * w * g;
                                   if (reg_p.value.at(4 * k + 3, i, j) > cfg.margin_h)
                                       reg_p.grad.at(4 * k + 3, i, j) += cfg.lambda2 * w * g;
                               }
                           }
                       });
}

namespace {

// Shared core: binary NLL toward foreground at one anchor plus L1 pull of its
// regression toward r_star.
ag::Var shift_loss_at(const ScoreMapsVar& adv, int ti, int tj, int k,
                      const Offsets& r_star, const LossConfig& cfg) {
    const int K = static_cast<int>(adv.cls->value.dim(0)) / 2;
    const Tensor& cls = adv.cls->value;
    const Tensor& reg = adv.reg->value;

    double acc = 0.0;
    if (cfg.shift_cls) {
        const float z = cls.at(k, ti, tj) - cls.at(K + k, ti, tj);  // b - f
        acc += static_cast<double>(cfg.lambda3) * softplus(z);
    }
    const float rs[4] = {r_star.dx, r_star.dy, r_star.dw, r_star.dh};
    if (cfg.shift_reg) {
        for (int c = 0; c < 4; ++c)
            acc += static_cast<double>(cfg.lambda4) * std::abs(reg.at(4 * k + c, ti, tj) - rs[c]);
    }

    const float rs0 = rs[0], rs1 = rs[1], rs2 = rs[2], rs3 = rs[3];
    return ag::make_op(
        Tensor::scalar(static_cast<float>(acc)), {adv.cls, adv.reg},
        [ti, tj, k, K, cfg, rs0, rs1, rs2, rs3](ag::Node& n) {
            const float g = n.grad[0];
            auto& cls_p = *n.parents[0];
            auto& reg_p = *n.parents[1];
            if (cfg.shift_cls && cls_p.requires_grad) {
                const float z = cls_p.value.at(k, ti, tj) - cls_p.value.at(K + k, ti, tj);
                const float s = sigmoid(z);  // d softplus(b-f) / d b
                cls_p.ensure_grad();
                cls_p.grad.at(k, ti, tj) += cfg.lambda3 * s * g;
                cls_p.grad.at(K + k, ti, tj) -= cfg.lambda3 * s * g;
            }
            if (cfg.shift_reg && reg_p.requires_grad) {
                reg_p.ensure_grad();
                const float rs[4] = {rs0, rs1, rs2, rs3};
                for (int c = 0; c < 4; ++c) {
                    const float d = reg_p.value.at(4 * k + c, ti, tj) - rs[c];
                    if (d != 0.0f)
                        reg_p.grad.at(4 * k + c, ti, tj) +=
                            cfg.lambda4 * (d > 0.0f ? 1.0f : -1.0f) * g;
                }
            }
        });
}

// Most overlapping anchor at a cell for a given box; fixed cell, free k.
int best_anchor_at(const AnchorGrid& grid, int ti, int tj, const Box& box) {
    int best = 0;
    float best_iou = -1.0f;
    for (int k = 0; k < grid.K(); ++k) {
        const float v = iou(grid.at(ti, tj, k), box);
        if (v > best_iou) {
            best_iou = v;
            best = k;
        }
    }
    return best;
}

}  // namespace

ag::Var shift_loss_untargeted(const ScoreMapsVar& adv, const AnchorGrid& grid,
                              const LossConfig& cfg) {
    cfg.validate();
    check_maps(adv.cls->value, adv.reg->value);
    const int S = grid.score_size;
    if (static_cast<int>(adv.cls->value.dim(1)) != S)
        throw ShapeError("shift_loss: score map does not match anchor grid");
    const int c = (S - 1) / 2;
    const int ti = c + cfg.shift_d, tj = c;
    if (ti >= S)
        throw ConfigError("shift_loss: displacement " + std::to_string(cfg.shift_d) +
                          " falls outside the " + std::to_string(S) + "x" +
                          std::to_string(S) + " grid");
    const Box cell = grid.at(ti, tj, 0);
    const Box target(cell.cx, cell.cy, cfg.target_box_side, cfg.target_box_side);
    const int k = best_anchor_at(grid, ti, tj, target);
    return shift_loss_at(adv, ti, tj, k, encode_offsets(grid.at(ti, tj, k), target), cfg);
}

ag::Var shift_loss_targeted(const ScoreMapsVar& adv, const AnchorGrid& grid,
                            const Box& target_box, const LossConfig& cfg) {
    cfg.validate();
    check_maps(adv.cls->value, adv.reg->value);
    const int S = grid.score_size;
    if (static_cast<int>(adv.cls->value.dim(1)) != S)
        throw ShapeError("shift_loss: score map does not match anchor grid");
    const float extent = 2.0f * grid.region_center;
    if (target_box.cx < 0.0f || target_box.cx > extent || target_box.cy < 0.0f ||
        target_box.cy > extent) {
        throw InvalidTargetError("target center (" + std::to_string(target_box.cx) + "," +
                                 std::to_string(target_box.cy) +
                                 ") lies outside the search region");
    }
    const int c = (S - 1) / 2;
    auto nearest = [&](float v) {
        const long cell = std::lround((v - grid.region_center) / grid.stride) + c;
        return static_cast<int>(std::clamp(cell, 0L, static_cast<long>(S - 1)));
    };
    const int ti = nearest(target_box.cy), tj = nearest(target_box.cx);
    const int k = best_anchor_at(grid, ti, tj, target_box);
    return shift_loss_at(adv, ti, tj, k, encode_offsets(grid.at(ti, tj, k), target_box), cfg);
}

ag::Var perceptibility_loss(const ag::Var& adv_search, const Tensor& clean_search,
                            const LossConfig& cfg) {
    cfg.validate();
    return ag::scale(ag::mse_against(adv_search, clean_search), cfg.lambda5);
}

ag::Var total_loss(const std::vector<ag::Var>& parts) {
    if (parts.empty()) return ag::leaf(Tensor::scalar(0.0f));
    ag::Var acc = parts[0];
    for (size_t i = 1; i < parts.size(); ++i) acc = ag::add(acc, parts[i]);
    return acc;
}

}  // namespace siam
