#include <cmath>
#include <fstream>
#include <memory>

#include <json.hpp>

#include "siamattack/error.hpp"
#include "siamattack/tracker.hpp"

namespace siam {

namespace {

inline float softplus(float x) {
    return std::max(x, 0.0f) + std::log1p(std::exp(-std::fabs(x)));
}

// Mean binary cross-entropy over the labeled anchors. cls layout: channel k =
// background logit of anchor k, channel K+k = foreground logit.
ag::Var anchor_ce_loss(const ag::Var& cls, std::shared_ptr<const AnchorLabels> labels) {
    const Tensor& v = cls->value;
    const int K = v.dim(0) / 2, S = v.dim(1);
    const int n_sel = labels->num_pos + labels->num_neg;
    if (n_sel == 0) return ag::leaf(Tensor::scalar(0.0f));

    double acc = 0.0;
    for (int k = 0; k < K; ++k)
        for (int i = 0; i < S; ++i)
            for (int j = 0; j < S; ++j) {
                const int8_t y = labels->cls[(static_cast<size_t>(k) * S + i) * S + j];
                if (y == 0) continue;
                const float f = v.at(K + k, i, j), b = v.at(k, i, j);
                acc += y > 0 ? softplus(b - f) : softplus(f - b);
            }
    Tensor out = Tensor::scalar(static_cast<float>(acc / n_sel));

    return ag::make_op(std::move(out), {cls}, [labels, n_sel](ag::Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        const Tensor& v = p->value;
        const int K = v.dim(0) / 2, S = v.dim(1);
        const float gs = n.grad[0] / static_cast<float>(n_sel);
        for (int k = 0; k < K; ++k)
            for (int i = 0; i < S; ++i)
                for (int j = 0; j < S; ++j) {
                    const int8_t y = labels->cls[(static_cast<size_t>(k) * S + i) * S + j];
                    if (y == 0) continue;
                    const float f = v.at(K + k, i, j), b = v.at(k, i, j);
                    const float prob = 1.0f / (1.0f + std::exp(b - f));
                    const float target = y > 0 ? 1.0f : 0.0f;
                    g.at(K + k, i, j) += gs * (prob - target);
                    g.at(k, i, j) += gs * (target - prob);
                }
    });
}

// Mean smooth-L1 over the 4 offset components of the positive anchors.
ag::Var anchor_reg_loss(const ag::Var& reg, std::shared_ptr<const AnchorLabels> labels) {
    const Tensor& v = reg->value;
    const int K = v.dim(0) / 4, S = v.dim(1);
    if (labels->num_pos == 0) return ag::leaf(Tensor::scalar(0.0f));
    const float denom = static_cast<float>(4 * labels->num_pos);

    auto component_diffs = [K, S](const Tensor& v, const AnchorLabels& lab, auto&& fn) {
        for (int k = 0; k < K; ++k)
            for (int i = 0; i < S; ++i)
                for (int j = 0; j < S; ++j) {
                    const size_t a = (static_cast<size_t>(k) * S + i) * S + j;
                    if (lab.cls[a] != 1) continue;
                    const Offsets& t = lab.reg[a];
                    const float tv[4] = {t.dx, t.dy, t.dw, t.dh};
                    for (int c = 0; c < 4; ++c) fn(4 * k + c, i, j, v.at(4 * k + c, i, j) - tv[c]);
                }
    };

    double acc = 0.0;
    component_diffs(v, *labels, [&acc](int, int, int, float d) {
        const float ad = std::fabs(d);
        acc += ad < 1.0f ? 0.5 * d * d : ad - 0.5;
    });
    Tensor out = Tensor::scalar(static_cast<float>(acc / denom));

    return ag::make_op(std::move(out), {reg}, [labels, denom, component_diffs](ag::Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        const float gs = n.grad[0] / denom;
        component_diffs(p->value, *labels, [&g, gs](int ch, int i, int j, float d) {
            g.at(ch, i, j) += gs * std::clamp(d, -1.0f, 1.0f);
        });
    });
}

struct TrainPair {
    Tensor z;          // (3,127,127)
    Tensor s;          // (3,255,255)
    Box gt_region;     // gt in search-region coordinates
};

TrainPair sample_pair(const Sequence& seq, const TrackerConfig& ncfg,
                      const TrackerTrainConfig& cfg, Rng& rng) {
    const int len = seq.size();
    const int t0 = rng.uniform_int(std::max(1, len - 1));
    const int max_gap = std::min(cfg.max_frame_gap, len - 1 - t0);
    const int t1 = t0 + (max_gap > 0 ? 1 + rng.uniform_int(max_gap) : 0);

    TrainPair out;
    {
        const Tensor chw = to_chw(seq.frame(t0));
        const Box& g0 = seq.gt(t0);
        out.z = crop_region(chw, g0.cx, g0.cy, context_side(g0), ncfg.exemplar_size);
    }
    const Tensor chw = to_chw(seq.frame(t1));
    const Box& g1 = seq.gt(t1);
    const float jlog = std::log(1.0f + cfg.scale_jitter);
    const float side = 2.0f * context_side(g1) * std::exp(rng.uniform(-jlog, jlog));
    const float scale = static_cast<float>(ncfg.search_size) / side;
    const float ox = rng.uniform(-cfg.shift_jitter, cfg.shift_jitter);  // region px
    const float oy = rng.uniform(-cfg.shift_jitter, cfg.shift_jitter);
    const float crop_cx = g1.cx + ox / scale;
    const float crop_cy = g1.cy + oy / scale;
    out.s = crop_region(chw, crop_cx, crop_cy, side, ncfg.search_size);
    const float rc = static_cast<float>((ncfg.search_size - 1) / 2);
    out.gt_region = Box(rc - ox, rc - oy, g1.w * scale, g1.h * scale);
    return out;
}

}  // namespace

std::string TrackerTrainConfig::to_json() const {
    nlohmann::json j;
    j["epochs"] = epochs;
    j["pairs_per_epoch"] = pairs_per_epoch;
    j["lr"] = lr;
    j["reg_weight"] = reg_weight;
    j["iou_pos"] = iou_pos;
    j["iou_neg"] = iou_neg;
    j["max_pos"] = max_pos;
    j["max_total"] = max_total;
    j["max_frame_gap"] = max_frame_gap;
    j["shift_jitter"] = shift_jitter;
    j["scale_jitter"] = scale_jitter;
    j["seed"] = seed;
    return j.dump();
}

TrackerNet train_tracker(const Dataset& data, const TrackerTrainConfig& cfg,
                         const TrackerConfig& net_cfg) {
    if (data.sequences.empty()) throw ConfigError("tracker training needs a non-empty dataset");
    Rng rng(cfg.seed);
    Rng init_rng = rng.fork(1);
    Rng sample_rng = rng.fork(2);
    Rng label_rng = rng.fork(3);

    TrackerNet net(net_cfg, init_rng);
    nn::Adam opt(net.params(), cfg.lr);
    const float rc = static_cast<float>((net_cfg.search_size - 1) / 2);
    const AnchorGrid grid = make_anchor_grid(net_cfg.score_size, net_cfg.stride, net_cfg.ratios,
                                             net_cfg.base_scale, rc);

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path);
        log << "step,cls,reg,total\n";
    }

    const int n_seq = static_cast<int>(data.sequences.size());
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int it = 0; it < cfg.pairs_per_epoch; ++it, ++step) {
            const Sequence& seq = data.sequences[static_cast<size_t>(sample_rng.uniform_int(n_seq))];
            const TrainPair pair = sample_pair(seq, net_cfg, cfg, sample_rng);
            auto labels = std::make_shared<AnchorLabels>(
                label_anchors(grid, pair.gt_region, cfg.iou_pos, cfg.iou_neg, cfg.max_pos,
                              cfg.max_total, label_rng, true));

            const TemplateEmbed emb = net.embed_template(ag::leaf(pair.z));
            const ScoreMapsVar maps = net.forward(emb, ag::leaf(pair.s));
            const ag::Var cls_loss = anchor_ce_loss(maps.cls, labels);
            const ag::Var reg_loss = anchor_reg_loss(maps.reg, labels);
            const ag::Var total = ag::add(cls_loss, ag::scale(reg_loss, cfg.reg_weight));

            const float lv = total->value[0];
            if (!std::isfinite(lv))
                throw TrainingError("loss diverged at step " + std::to_string(step) +
                                    "; config: " + cfg.to_json());
            ag::backward(total);
            opt.step();

            if (log.is_open())
                log << step << "," << cls_loss->value[0] << "," << reg_loss->value[0] << "," << lv
                    << "\n";
        }
    }
    return net;
}

}  // namespace siam
