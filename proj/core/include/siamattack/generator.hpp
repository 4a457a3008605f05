#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "siamattack/autograd.hpp"
#include "siamattack/geometry.hpp"
#include "siamattack/nn.hpp"

namespace siam {

// Additive search-region perturbation. delta lives on the [0,1] image scale;
// epsilon is quoted on the 0-255 scale like the config knob.
struct Perturbation {
    Tensor delta;  // (3, out, out)
    float epsilon = 0;
};

// Score-map-resolution binary footprint of the intended target box.
struct ConditionMask {
    Tensor grid;  // (S, S), entries in {0,1}
};

struct GeneratorConfig {
    float epsilon = 16.0f;  // 0-255 scale
    bool conditional = false;
    int in_size = 127;
    int out_size = 255;
    int ch1 = 24, ch2 = 32, ch3 = 48, ch4 = 64, chm = 64;
    int cd4 = 48, cd3 = 32, cd2 = 24, cd1 = 16;

    std::string to_json() const;
    static GeneratorConfig from_json(const std::string& json);
};

// Encoder-decoder with skip connections; two extra decoder stages bridge the
// 127-pixel input to the 255-pixel output. The final tanh scaling bounds the
// raw output to [-epsilon, epsilon] before any clipping in apply().
class GeneratorNet {
  public:
    GeneratorNet(GeneratorConfig cfg, Rng& rng);

    const GeneratorConfig& cfg() const { return cfg_; }
    bool conditional() const { return cfg_.conditional; }
    std::vector<nn::Param> params() const;

    // input: (3,127,127), or (4,127,127) with the mask channel appended.
    // Every call bumps the per-thread instrumentation counter.
    ag::Var forward(const ag::Var& input) const;

    void save(const std::string& path) const;
    static GeneratorNet load(const std::string& path);

  private:
    GeneratorConfig cfg_;
    nn::Conv2d e1_, e2_, e3_, e4_, mid_;
    nn::Conv2d d4_, d3_, d2_, d1_, d0_;
};

// Stacks the template with the upsampled mask channel when the generator is
// conditional. Throws ConditioningError when the mask presence does not match
// the generator's conditional flag.
Tensor make_generator_input(const GeneratorNet& g, const Tensor& template_chw,
                            const ConditionMask* mask);

// One no-grad forward pass.
Perturbation generate(const GeneratorNet& g, const Tensor& template_chw,
                      const ConditionMask* mask = nullptr);

// clamp(search + delta, search - eps, search + eps), then clamp to [0,1].
Tensor apply(const Tensor& search, const Perturbation& p);

// Graph form of apply for training; gradients flow into delta where neither
// clamp binds.
ag::Var apply_var(const Tensor& search, const ag::Var& delta, float epsilon);

// Binary footprint of a box_side x box_side box centered d cells from the
// grid center along angle 2*pi*k/K (k=0 points right, y points down; the
// displacement is rounded to the nearest cell).
ConditionMask make_direction_mask(int k, int K, int d, float box_side, const AnchorGrid& grid);

// Center of that displaced box in the grid's pixel coordinates.
Box direction_target_box(int k, int K, int d, float box_side, const AnchorGrid& grid);

// Nearest-neighbor upsampling to a single-channel (1, out_size, out_size)
// image; values stay binary.
Tensor upsample_mask(const ConditionMask& mask, int out_size = 127);

// Instrumentation: every GeneratorNet::forward increments a per-thread
// counter, so run drivers can snapshot deltas even when sequences are
// evaluated on worker threads.
uint64_t generator_call_count();
void reset_generator_call_count();

}  // namespace siam
