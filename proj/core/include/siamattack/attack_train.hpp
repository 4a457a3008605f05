#pragma once

#include <string>
#include <vector>

#include "siamattack/data.hpp"
#include "siamattack/generator.hpp"
#include "siamattack/losses.hpp"
#include "siamattack/tracker.hpp"

namespace siam {

struct AttackTrainConfig {
    float lr = 2e-4f;
    float epsilon = 16.0f;  // overrides the generator config's budget
    int frame_stride = 10;
    int searches_per_template = 8;
    int epochs = 4;
    uint64_t seed = 7;
    bool targeted = false;   // requires a conditional generator
    int num_directions = 12;  // direction bank size K in targeted mode
    LossConfig loss;
    std::string log_path;  // per-step CSV when non-empty

    void validate() const;
    std::string to_json() const;
    static AttackTrainConfig from_json(const std::string& json);
};

// One template plus the search crops it must transfer to. Searches are
// ground-truth centered with context side 2*s_z, taken at frames
// {stride, 2*stride, ...}; gt_region holds the target box in region pixels.
struct TrainBatch {
    Tensor template_chw;  // (3, 127, 127)
    std::vector<Tensor> searches;
    std::vector<Box> gt_region;

    bool ok() const { return !searches.empty(); }
};

// Empty batch (with a caller-side warning expected) when the sequence is too
// short for searches_per_template strided frames.
TrainBatch sample_training_batch(const Sequence& seq, const TrackerConfig& tcfg,
                                 const AttackTrainConfig& cfg);

// Trains a perturbation generator against a frozen tracker. The tracker's
// weights are bitwise untouched; only its input gradient is used. In targeted
// mode each step conditions on a uniformly drawn direction index and pulls
// predictions toward that direction's displaced box.
GeneratorNet train_generator(const TrackerNet& tracker, const Dataset& data,
                             const GeneratorConfig& gen_cfg, const AttackTrainConfig& cfg);

}  // namespace siam
