#include "siamattack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "siamattack/checkpoint.hpp"
#include "siamattack/error.hpp"

namespace siam {

namespace {
constexpr float kTau = 6.28318530717958647692f;
}

std::string TrackerConfig::to_json() const {
    nlohmann::json j;
    j["exemplar_size"] = exemplar_size;
    j["search_size"] = search_size;
    j["score_size"] = score_size;
    j["stride"] = stride;
    j["ratios"] = ratios;
    j["base_scale"] = base_scale;
    j["channels"] = {ch1, ch2, ch3, ch4, ch5};
    j["penalty_k"] = penalty_k;
    j["window_influence"] = window_influence;
    j["size_lr"] = size_lr;
    return j.dump();
}

TrackerConfig TrackerConfig::from_json(const std::string& json) {
    TrackerConfig c;
    const auto j = nlohmann::json::parse(json);
    c.exemplar_size = j.at("exemplar_size").get<int>();
    c.search_size = j.at("search_size").get<int>();
    c.score_size = j.at("score_size").get<int>();
    c.stride = j.at("stride").get<int>();
    c.ratios = j.at("ratios").get<std::vector<float>>();
    c.base_scale = j.at("base_scale").get<float>();
    const auto ch = j.at("channels");
    c.ch1 = ch.at(0);
    c.ch2 = ch.at(1);
    c.ch3 = ch.at(2);
    c.ch4 = ch.at(3);
    c.ch5 = ch.at(4);
    c.penalty_k = j.at("penalty_k").get<float>();
    c.window_influence = j.at("window_influence").get<float>();
    c.size_lr = j.at("size_lr").get<float>();
    return c;
}

float ScoreMaps::fg_prob(int k, int i, int j) const {
    return 1.0f / (1.0f + std::exp(bg_logit(k, i, j) - fg_logit(k, i, j)));
}

Offsets ScoreMaps::offsets(int k, int i, int j) const {
    Offsets o;
    o.dx = reg.at(4 * k + 0, i, j);
    o.dy = reg.at(4 * k + 1, i, j);
    o.dw = reg.at(4 * k + 2, i, j);
    o.dh = reg.at(4 * k + 3, i, j);
    return o;
}

TrackerNet::TrackerNet(TrackerConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
    // Valid convolutions; 255 -> 126 -> 62 -> 30 -> 30 -> 30 on the search
    // branch, 127 -> 62 -> 30 -> 14 -> 14 -> 14 on the template branch. The
    // 6x6 center crop of the template features correlates over the 30x30
    // search features to give the 25x25 score map.
    conv1_ = nn::Conv2d("t.conv1", 3, cfg_.ch1, 5, 2, 0, rng);
    conv2_ = nn::Conv2d("t.conv2", cfg_.ch1, cfg_.ch2, 3, 2, 0, rng);
    conv3_ = nn::Conv2d("t.conv3", cfg_.ch2, cfg_.ch3, 3, 2, 0, rng);
    conv4_ = nn::Conv2d("t.conv4", cfg_.ch3, cfg_.ch4, 3, 1, 1, rng);
    conv5_ = nn::Conv2d("t.conv5", cfg_.ch4, cfg_.ch5, 3, 1, 1, rng);
    adj_z_cls_ = nn::Conv2d("t.adj_z_cls", cfg_.ch5, cfg_.ch5, 1, 1, 0, rng);
    adj_z_reg_ = nn::Conv2d("t.adj_z_reg", cfg_.ch5, cfg_.ch5, 1, 1, 0, rng);
    adj_s_cls_ = nn::Conv2d("t.adj_s_cls", cfg_.ch5, cfg_.ch5, 1, 1, 0, rng);
    adj_s_reg_ = nn::Conv2d("t.adj_s_reg", cfg_.ch5, cfg_.ch5, 1, 1, 0, rng);
    cls_h1_ = nn::Conv2d("t.cls_h1", cfg_.ch5, 48, 1, 1, 0, rng);
    cls_h2_ = nn::Conv2d("t.cls_h2", 48, 2 * cfg_.K(), 1, 1, 0, rng);
    reg_h1_ = nn::Conv2d("t.reg_h1", cfg_.ch5, 48, 1, 1, 0, rng);
    reg_h2_ = nn::Conv2d("t.reg_h2", 48, 4 * cfg_.K(), 1, 1, 0, rng);
}

std::vector<nn::Param> TrackerNet::params() const {
    std::vector<nn::Param> out;
    for (const auto* c : {&conv1_, &conv2_, &conv3_, &conv4_, &conv5_, &adj_z_cls_, &adj_z_reg_,
                          &adj_s_cls_, &adj_s_reg_, &cls_h1_, &cls_h2_, &reg_h1_, &reg_h2_})
        c->collect(out);
    return out;
}

ag::Var TrackerNet::backbone(const ag::Var& x) const {
    auto f = ag::relu(conv1_(x));
    f = ag::relu(conv2_(f));
    f = ag::relu(conv3_(f));
    f = ag::relu(conv4_(f));
    return conv5_(f);
}

TemplateEmbed TrackerNet::embed_template(const ag::Var& z) const {
    if (z->value.ndim() != 3 || z->value.dim(0) != 3 || z->value.dim(1) != cfg_.exemplar_size ||
        z->value.dim(2) != cfg_.exemplar_size)
        throw ShapeError("template " + z->value.shape_str() + ", want (3," +
                         std::to_string(cfg_.exemplar_size) + "," + std::to_string(cfg_.exemplar_size) + ")");
    auto f = backbone(z);
    const int side = f->value.dim(1);
    const int off = (side - 6) / 2;
    auto crop = ag::crop_hw(f, off, off, 6, 6);
    return {adj_z_cls_(crop), adj_z_reg_(crop)};
}

ScoreMapsVar TrackerNet::forward(const TemplateEmbed& emb, const ag::Var& search) const {
    if (search->value.ndim() != 3 || search->value.dim(0) != 3 ||
        search->value.dim(1) != cfg_.search_size || search->value.dim(2) != cfg_.search_size)
        throw ShapeError("search " + search->value.shape_str() + ", want (3," +
                         std::to_string(cfg_.search_size) + "," + std::to_string(cfg_.search_size) + ")");
    auto f = backbone(search);
    auto corr_c = ag::dw_xcorr(adj_s_cls_(f), emb.cls_k);
    auto corr_r = ag::dw_xcorr(adj_s_reg_(f), emb.reg_k);
    ScoreMapsVar out;
    out.cls = cls_h2_(ag::relu(cls_h1_(corr_c)));
    out.reg = reg_h2_(ag::relu(reg_h1_(corr_r)));
    return out;
}

TemplateEmbed TrackerNet::embed_template_value(const Tensor& z) const {
    ag::NoGrad ng;
    return embed_template(ag::leaf(z));
}

ScoreMaps TrackerNet::forward_value(const TemplateEmbed& emb, const Tensor& search) const {
    ag::NoGrad ng;
    const ScoreMapsVar v = forward(emb, ag::leaf(search));
    return v.values();
}

void TrackerNet::save(const std::string& path) const {
    save_checkpoint(path, snapshot_params("tracker", cfg_.to_json(), params()));
}

TrackerNet TrackerNet::load(const std::string& path) {
    const Checkpoint ck = load_checkpoint(path);
    if (ck.kind != "tracker") throw IoError("'" + path + "' is a " + ck.kind + " checkpoint");
    Rng rng(0);
    TrackerNet net(TrackerConfig::from_json(ck.config_json), rng);
    restore_params(ck, net.params());
    return net;
}

RankedProposal rank_proposals(const ScoreMaps& maps, const AnchorGrid& grid,
                              const TrackerState& state) {
    const int S = grid.score_size;
    const int K = grid.K();
    const float prior_scale = context_side(Box(0, 0, state.w, state.h));
    const float prior_ratio = state.w / state.h;
    const float wi = state.window_influence;

    RankedProposal best;
    float best_score = -std::numeric_limits<float>::infinity();
    float best_penalty = 1.0f;
    Box best_box;
    for (int k = 0; k < K; ++k)
        for (int i = 0; i < S; ++i)
            for (int j = 0; j < S; ++j) {
                const float prob = maps.fg_prob(k, i, j);
                const Box prop = decode_offsets(grid.at(i, j, k), maps.offsets(k, i, j));
                const float sc_prop = context_side(prop);
                const float s_ratio = std::max(sc_prop / prior_scale, prior_scale / sc_prop);
                const float ratio = prop.w / prop.h;
                const float r_ratio = std::max(ratio / prior_ratio, prior_ratio / ratio);
                const float penalty = std::exp(-(s_ratio * r_ratio - 1.0f) * state.penalty_k);
                const float score = (1.0f - wi) * penalty * prob +
                                    wi * state.window[static_cast<int64_t>(i) * S + j];
                if (score > best_score) {
                    best_score = score;
                    best = {prop, prob, k, i, j};
                    best_penalty = penalty;
                    best_box = prop;
                }
            }

    const float lr = std::clamp(best_penalty * best.conf * state.size_lr, 0.0f, 1.0f);
    best.box = Box(best_box.cx, best_box.cy, state.w * (1.0f - lr) + best_box.w * lr,
                   state.h * (1.0f - lr) + best_box.h * lr);
    return best;
}

TrackerState track_init(const TrackerNet& net, const ImageU8& frame, const Box& gt) {
    if (gt.cx < 0 || gt.cx >= static_cast<float>(frame.w) || gt.cy < 0 ||
        gt.cy >= static_cast<float>(frame.h))
        throw InvalidBoxError("init box center outside frame");

    const Tensor chw = to_chw(frame);
    const float s_z = context_side(gt);
    const Tensor z = crop_region(chw, gt.cx, gt.cy, s_z, net.cfg().exemplar_size);

    TrackerState st;
    st.cx = gt.cx;
    st.cy = gt.cy;
    st.w = gt.w;
    st.h = gt.h;
    st.emb = net.embed_template_value(z);
    const int S = net.cfg().score_size;
    st.window = Tensor({S, S});
    for (int i = 0; i < S; ++i) {
        const float wy = 0.5f - 0.5f * std::cos(kTau * static_cast<float>(i) / static_cast<float>(S - 1));
        for (int j = 0; j < S; ++j) {
            const float wx = 0.5f - 0.5f * std::cos(kTau * static_cast<float>(j) / static_cast<float>(S - 1));
            st.window[static_cast<int64_t>(i) * S + j] = wy * wx;
        }
    }
    st.penalty_k = net.cfg().penalty_k;
    st.window_influence = net.cfg().window_influence;
    st.size_lr = net.cfg().size_lr;
    return st;
}

StepResult track_step(const TrackerNet& net, TrackerState& state, const ImageU8& frame,
                      const Perturbation* pert) {
    const TrackerConfig& cfg = net.cfg();
    const Tensor chw = to_chw(frame);
    const float s_z = context_side(Box(0, 0, state.w, state.h));
    const float side = 2.0f * s_z;
    const float scale = static_cast<float>(cfg.search_size) / side;

    Tensor crop = crop_region(chw, state.cx, state.cy, side, cfg.search_size);
    if (pert != nullptr) crop = apply(crop, *pert);

    const ScoreMaps maps = net.forward_value(state.emb, crop);
    const float rc = static_cast<float>((cfg.search_size - 1) / 2);
    const AnchorGrid grid =
        make_anchor_grid(cfg.score_size, cfg.stride, cfg.ratios, cfg.base_scale, rc);

    TrackerState rank_state = state;
    rank_state.w = state.w * scale;
    rank_state.h = state.h * scale;
    const RankedProposal rp = rank_proposals(maps, grid, rank_state);

    float cx = state.cx + (rp.box.cx - rc) / scale;
    float cy = state.cy + (rp.box.cy - rc) / scale;
    float w = rp.box.w / scale;
    float h = rp.box.h / scale;
    cx = std::clamp(cx, 0.0f, static_cast<float>(frame.w - 1));
    cy = std::clamp(cy, 0.0f, static_cast<float>(frame.h - 1));
    w = std::clamp(w, 4.0f, static_cast<float>(frame.w));
    h = std::clamp(h, 4.0f, static_cast<float>(frame.h));

    state.cx = cx;
    state.cy = cy;
    state.w = w;
    state.h = h;
    return {Box(cx, cy, w, h), rp.conf};
}

AnchorLabels label_anchors(const AnchorGrid& grid, const Box& gt, float iou_pos, float iou_neg,
                           int max_pos, int max_total, Rng& rng, bool fallback_argmax) {
    const size_t n = grid.boxes.size();
    const int S = grid.score_size;
    const int K = grid.K();
    AnchorLabels out;
    out.cls.assign(n, 0);
    out.reg.assign(n, Offsets{});

    // Labels are keyed (k*S + i)*S + j to line up with the (2K,S,S) and
    // (4K,S,S) head layouts; anchor_box below inverts that key.
    const auto anchor_box = [&grid, S](int a) -> const Box& {
        const int k = a / (S * S), cell = a % (S * S);
        return grid.at(cell / S, cell % S, k);
    };

    std::vector<int> pos, neg;
    float best_iou = 0.0f;
    int best_idx = -1;
    for (int k = 0; k < K; ++k)
        for (int i = 0; i < S; ++i)
            for (int j = 0; j < S; ++j) {
                const int a = (k * S + i) * S + j;
                const float v = iou(grid.at(i, j, k), gt);
                if (v > best_iou) {
                    best_iou = v;
                    best_idx = a;
                }
                if (v >= iou_pos) pos.push_back(a);
                else if (v <= iou_neg) neg.push_back(a);
            }
    if (pos.empty() && fallback_argmax && best_idx >= 0 && best_iou > 0.05f)
        pos.push_back(best_idx);

    // Fisher-Yates prefixes keep the subsample deterministic under the rng.
    auto take = [&rng](std::vector<int>& v, int want) {
        const int n_v = static_cast<int>(v.size());
        const int m = std::min(want, n_v);
        for (int i = 0; i < m; ++i)
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(i + rng.uniform_int(n_v - i))]);
        v.resize(static_cast<size_t>(m));
    };
    take(pos, max_pos);
    take(neg, std::max(0, max_total - static_cast<int>(pos.size())));

    for (int a : pos) {
        out.cls[static_cast<size_t>(a)] = 1;
        out.reg[static_cast<size_t>(a)] = encode_offsets(anchor_box(a), gt);
    }
    for (int a : neg) out.cls[static_cast<size_t>(a)] = -1;
    out.num_pos = static_cast<int>(pos.size());
    out.num_neg = static_cast<int>(neg.size());
    return out;
}

}  // namespace siam
