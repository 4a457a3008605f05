#include "siamattack/attack_train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "siamattack/error.hpp"

namespace siam {

void AttackTrainConfig::validate() const {
    if (!(lr > 0.0f)) throw ConfigError("attack train: lr must be > 0");
    if (!(epsilon > 0.0f && epsilon <= 255.0f))
        throw ConfigError("attack train: epsilon must be in (0,255]");
    if (frame_stride < 1) throw ConfigError("attack train: frame_stride must be >= 1");
    if (searches_per_template < 1)
        throw ConfigError("attack train: searches_per_template must be >= 1");
    if (epochs < 1) throw ConfigError("attack train: epochs must be >= 1");
    if (num_directions < 1) throw ConfigError("attack train: num_directions must be >= 1");
    loss.validate();
}

std::string AttackTrainConfig::to_json() const {
    nlohmann::json j;
    j["lr"] = lr;
    j["epsilon"] = epsilon;
    j["frame_stride"] = frame_stride;
    j["searches_per_template"] = searches_per_template;
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["targeted"] = targeted;
    j["num_directions"] = num_directions;
    j["loss"] = nlohmann::json::parse(loss.to_json());
    j["log_path"] = log_path;
    return j.dump();
}

AttackTrainConfig AttackTrainConfig::from_json(const std::string& json) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("attack train config: ") + e.what());
    }
    static const std::set<std::string> known = {
        "lr",   "epsilon",  "frame_stride",   "searches_per_template", "epochs",
        "seed", "targeted", "num_directions", "loss",                  "log_path"};
    for (const auto& item : j.items()) {
        if (!known.count(item.key()))
            throw ConfigError("attack train config: unknown key '" + item.key() + "'");
    }
    AttackTrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.frame_stride = j.value("frame_stride", c.frame_stride);
    c.searches_per_template = j.value("searches_per_template", c.searches_per_template);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.targeted = j.value("targeted", c.targeted);
    c.num_directions = j.value("num_directions", c.num_directions);
    if (j.count("loss")) c.loss = LossConfig::from_json(j["loss"].dump());
    c.log_path = j.value("log_path", c.log_path);
    c.validate();
    return c;
}

TrainBatch sample_training_batch(const Sequence& seq, const TrackerConfig& tcfg,
                                 const AttackTrainConfig& cfg) {
    cfg.validate();
    TrainBatch batch;
    const int need = cfg.searches_per_template * cfg.frame_stride;
    if (seq.size() <= need) return batch;  // too short, caller warns and skips

    const Box& g0 = seq.gt(0);
    const Tensor frame0 = to_chw(seq.frame(0));
    batch.template_chw =
        crop_region(frame0, g0.cx, g0.cy, context_side(g0), tcfg.exemplar_size);

    const float rc = static_cast<float>(tcfg.search_size - 1) / 2.0f;
    for (int n = 1; n <= cfg.searches_per_template; ++n) {
        const int f = n * cfg.frame_stride;
        const Box& g = seq.gt(f);
        const float side = 2.0f * context_side(g);
        const float scale = static_cast<float>(tcfg.search_size) / side;
        const Tensor frame = to_chw(seq.frame(f));
        batch.searches.push_back(
            crop_region(frame, g.cx, g.cy, side, tcfg.search_size));
        batch.gt_region.emplace_back(rc, rc, g.w * scale, g.h * scale);
    }
    return batch;
}

namespace {

// Flips requires_grad off for the victim's parameters so backprop only pays
// for input gradients, and restores the flags on scope exit.
class FreezeGuard {
  public:
    explicit FreezeGuard(const std::vector<nn::Param>& params) {
        for (const auto& p : params) {
            saved_.emplace_back(p.var, p.var->requires_grad);
            p.var->requires_grad = false;
        }
    }
    ~FreezeGuard() {
        for (auto& [var, flag] : saved_) var->requires_grad = flag;
    }
    FreezeGuard(const FreezeGuard&) = delete;
    FreezeGuard& operator=(const FreezeGuard&) = delete;

  private:
    std::vector<std::pair<ag::Var, bool>> saved_;
};

}  // namespace

GeneratorNet train_generator(const TrackerNet& tracker, const Dataset& data,
                             const GeneratorConfig& gen_cfg, const AttackTrainConfig& cfg) {
    cfg.validate();
    if (cfg.targeted && !gen_cfg.conditional)
        throw ConditioningError("targeted training needs a conditional generator");
    if (!cfg.targeted && gen_cfg.conditional)
        throw ConditioningError("a conditional generator trains in targeted mode only");
    if (data.sequences.empty()) throw TrainingError("attack train: empty dataset");

    GeneratorConfig gcfg = gen_cfg;
    gcfg.epsilon = cfg.epsilon;

    Rng base(cfg.seed, 0xa77ac);
    Rng rng_init = base.fork(1);
    Rng rng_shuffle = base.fork(2);
    Rng rng_dir = base.fork(3);

    GeneratorNet gen(gcfg, rng_init);
    nn::Adam opt(gen.params(), cfg.lr);
    FreezeGuard freeze(tracker.params());

    const TrackerConfig& tcfg = tracker.cfg();
    const float rc = static_cast<float>(tcfg.search_size - 1) / 2.0f;
    const AnchorGrid grid =
        make_anchor_grid(tcfg.score_size, tcfg.stride, tcfg.ratios, tcfg.base_scale, rc);

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path);
        if (!log) throw IoError("cannot open log " + cfg.log_path);
        log << "step,epoch,sequence,fool,shift,percept,total\n";
    }

    const size_t num_seq = data.sequences.size();
    std::vector<TemplateEmbed> embeds(num_seq);
    std::vector<bool> embed_ready(num_seq, false);
    // Selection depends only on the clean response, so it is fixed per crop.
    std::vector<std::vector<std::vector<int>>> selections(num_seq);
    std::set<size_t> warned;

    int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<size_t> order(num_seq);
        for (size_t i = 0; i < num_seq; ++i) order[i] = i;
        for (size_t i = num_seq; i > 1; --i) {
            const size_t j = rng_shuffle.uniform_int(static_cast<uint32_t>(i));
            std::swap(order[i - 1], order[j]);
        }

        for (size_t idx : order) {
            const Sequence& seq = data.sequences[idx];
            TrainBatch batch = sample_training_batch(seq, tcfg, cfg);
            // Targeted steps consume one draw per template even when the
            // sequence is skipped, keeping draws aligned across runs that
            // share a corpus but differ in which sequences are usable.
            const int dir = cfg.targeted
                                ? static_cast<int>(rng_dir.uniform_int(
                                      static_cast<uint32_t>(cfg.num_directions)))
                                : -1;
            if (!batch.ok()) {
                if (!warned.count(idx)) {
                    std::fprintf(stderr,
                                 "attack train: skipping %s (%d frames < %d needed)\n",
                                 seq.name().c_str(), seq.size(),
                                 cfg.searches_per_template * cfg.frame_stride + 1);
                    warned.insert(idx);
                }
                continue;
            }

            if (!embed_ready[idx]) {
                embeds[idx] = tracker.embed_template_value(batch.template_chw);
                embed_ready[idx] = true;
                selections[idx].resize(batch.searches.size());
            }

            ConditionMask mask;
            Box target_box(1.0f, 1.0f, 1.0f, 1.0f);
            const ConditionMask* mask_ptr = nullptr;
            if (cfg.targeted) {
                mask = make_direction_mask(dir, cfg.num_directions, cfg.loss.shift_d,
                                           cfg.loss.target_box_side, grid);
                target_box = direction_target_box(dir, cfg.num_directions, cfg.loss.shift_d,
                                                  cfg.loss.target_box_side, grid);
                mask_ptr = &mask;
            }

            const Tensor gen_in = make_generator_input(gen, batch.template_chw, mask_ptr);
            const ag::Var delta = gen.forward(ag::leaf(gen_in));

            double fool_sum = 0.0, shift_sum = 0.0, percept_sum = 0.0;
            std::vector<ag::Var> parts;
            for (size_t n = 0; n < batch.searches.size(); ++n) {
                const Tensor& search = batch.searches[n];
                if (selections[idx][n].empty()) {
                    ag::NoGrad ng;
                    const ScoreMaps clean = tracker.forward_value(embeds[idx], search);
                    selections[idx][n] = select_anchors(clean, cfg.loss);
                }
                const ag::Var adv = apply_var(search, delta, cfg.epsilon);
                const ScoreMapsVar maps = tracker.forward(embeds[idx], adv);

                const ag::Var fool = fool_loss_selected(selections[idx][n], maps, cfg.loss);
                const ag::Var shift =
                    cfg.targeted ? shift_loss_targeted(maps, grid, target_box, cfg.loss)
                                 : shift_loss_untargeted(maps, grid, cfg.loss);
                const ag::Var percept = perceptibility_loss(adv, search, cfg.loss);
                fool_sum += fool->value[0];
                shift_sum += shift->value[0];
                percept_sum += percept->value[0];
                parts.push_back(total_loss({fool, shift, percept}));
            }
            const float inv_n = 1.0f / static_cast<float>(batch.searches.size());
            const ag::Var total = ag::scale(total_loss(parts), inv_n);
            const float total_v = total->value[0];
            if (!std::isfinite(total_v)) {
                throw TrainingError("attack train: non-finite loss at step " +
                                    std::to_string(step) + " on " + seq.name() +
                                    "; config " + cfg.to_json());
            }

            ag::backward(total);
            opt.step();

            if (log) {
                char line[256];
                std::snprintf(line, sizeof(line), "%lld,%d,%s,%.6f,%.6f,%.6f,%.6f\n",
                              static_cast<long long>(step), epoch, seq.name().c_str(),
                              fool_sum * inv_n, shift_sum * inv_n, percept_sum * inv_n,
                              static_cast<double>(total_v));
                log << line;
            }
            ++step;
        }
    }
    if (step == 0) throw TrainingError("attack train: every sequence was too short");
    return gen;
}

}  // namespace siam
