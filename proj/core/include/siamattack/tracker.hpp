#pragma once

#include <string>
#include <vector>

#include "siamattack/data.hpp"
#include "siamattack/generator.hpp"
#include "siamattack/geometry.hpp"
#include "siamattack/nn.hpp"

namespace siam {

struct TrackerConfig {
    int exemplar_size = 127;
    int search_size = 255;
    int score_size = 25;
    int stride = 8;
    std::vector<float> ratios = {1.0f / 3.0f, 0.5f, 1.0f, 2.0f, 3.0f};
    float base_scale = 8.0f;  // anchor area side = base_scale * stride
    int ch1 = 16, ch2 = 32, ch3 = 48, ch4 = 64, ch5 = 64;
    float penalty_k = 0.05f;
    float window_influence = 0.40f;
    float size_lr = 0.30f;

    int K() const { return static_cast<int>(ratios.size()); }
    std::string to_json() const;
    static TrackerConfig from_json(const std::string& json);
};

// Per-anchor classification logits and regression offsets over the score map.
// cls channel k holds the background logit of anchor k, channel K+k the
// foreground logit; reg channels 4k..4k+3 hold dx,dy,dw,dh of anchor k.
struct ScoreMaps {
    Tensor cls;  // (2K, S, S)
    Tensor reg;  // (4K, S, S)

    int K() const { return cls.dim(0) / 2; }
    float fg_logit(int k, int i, int j) const { return cls.at(K() + k, i, j); }
    float bg_logit(int k, int i, int j) const { return cls.at(k, i, j); }
    float fg_prob(int k, int i, int j) const;  // softmax over {bg, fg}
    Offsets offsets(int k, int i, int j) const;
};

// Graph-carrying view used by training code.
struct ScoreMapsVar {
    ag::Var cls;
    ag::Var reg;
    ScoreMaps values() const { return {cls->value, reg->value}; }
};

// Template features after the per-branch adjust convolutions; these are the
// correlation kernels.
struct TemplateEmbed {
    ag::Var cls_k;  // (C, 6, 6)
    ag::Var reg_k;
};

class TrackerNet {
  public:
    TrackerNet(TrackerConfig cfg, Rng& rng);

    const TrackerConfig& cfg() const { return cfg_; }
    std::vector<nn::Param> params() const;

    // Graph-building forms. Inference callers wrap inputs in no-grad leaves.
    TemplateEmbed embed_template(const ag::Var& z) const;  // z (3,127,127)
    ScoreMapsVar forward(const TemplateEmbed& emb, const ag::Var& search) const;  // (3,255,255)

    // Value-only conveniences (run under NoGrad).
    TemplateEmbed embed_template_value(const Tensor& z) const;
    ScoreMaps forward_value(const TemplateEmbed& emb, const Tensor& search) const;

    void save(const std::string& path) const;
    static TrackerNet load(const std::string& path);

  private:
    ag::Var backbone(const ag::Var& x) const;

    TrackerConfig cfg_;
    nn::Conv2d conv1_, conv2_, conv3_, conv4_, conv5_;
    nn::Conv2d adj_z_cls_, adj_z_reg_, adj_s_cls_, adj_s_reg_;
    nn::Conv2d cls_h1_, cls_h2_, reg_h1_, reg_h2_;
};

struct TrackerState {
    float cx = 0, cy = 0;  // frame coords
    float w = 0, h = 0;
    TemplateEmbed emb;
    Tensor window;  // (S, S), Hanning outer product, 1 at center
    float penalty_k = 0.05f;
    float window_influence = 0.40f;
    float size_lr = 0.30f;
};

struct RankedProposal {
    Box box;     // same coordinate frame as the grid; size already smoothed
    float conf;  // raw foreground probability of the winning anchor
    int k = 0, i = 0, j = 0;
};

// Re-ranks anchors by windowed, scale-penalized foreground score and decodes
// the winner. Everything here lives in the grid's coordinate frame:
// state.w/state.h are read as the prior size in those coordinates, and the
// smoothed output size is prior*(1-lr) + proposal*lr with
// lr = penalty*conf*size_lr.
RankedProposal rank_proposals(const ScoreMaps& maps, const AnchorGrid& grid,
                              const TrackerState& state);

TrackerState track_init(const TrackerNet& net, const ImageU8& frame, const Box& gt);

struct StepResult {
    Box box;
    float conf;
};

// One tracking step: crop the search region at the current state, optionally
// apply the perturbation to the resized crop, run the heads, re-rank, map the
// winner back to frame coordinates.
StepResult track_step(const TrackerNet& net, TrackerState& state, const ImageU8& frame,
                      const Perturbation* pert = nullptr);

// Anchor supervision for tracker training.
struct AnchorLabels {
    std::vector<int8_t> cls;      // per flat anchor (k*S+i)*S+j: +1 fg, -1 bg, 0 ignore
    std::vector<Offsets> reg;     // valid where cls == +1
    int num_pos = 0;
    int num_neg = 0;
};

// IoU >= iou_pos marks positive, <= iou_neg negative, in between ignored;
// positives capped at max_pos, negatives subsampled to max_total - positives.
// With fallback_argmax the best-IoU anchor is forced positive when nothing
// crosses iou_pos.
AnchorLabels label_anchors(const AnchorGrid& grid, const Box& gt, float iou_pos, float iou_neg,
                           int max_pos, int max_total, Rng& rng, bool fallback_argmax);

struct TrackerTrainConfig {
    int epochs = 10;
    int pairs_per_epoch = 800;
    float lr = 1e-3f;
    float reg_weight = 1.0f;
    float iou_pos = 0.6f;
    float iou_neg = 0.3f;
    int max_pos = 16;
    int max_total = 64;
    int max_frame_gap = 40;
    float shift_jitter = 48.0f;  // px, uniform center offset of the search crop
    float scale_jitter = 0.25f;  // log-uniform factor exp(±)
    uint64_t seed = 11;
    std::string log_path;  // optional per-step CSV

    std::string to_json() const;
};

TrackerNet train_tracker(const Dataset& data, const TrackerTrainConfig& cfg,
                         const TrackerConfig& net_cfg = {});

}  // namespace siam
