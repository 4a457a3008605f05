#pragma once

#include <string>
#include <vector>

#include "siamattack/autograd.hpp"
#include "siamattack/rng.hpp"

namespace siam::nn {

// A named trainable tensor. Modules expose their parameters as a flat list so
// the optimizer, checkpoint writer, and gradient checks all see the same
// ordering.
struct Param {
    std::string name;
    ag::Var var;
};

// 2D convolution layer. Weights are Kaiming-uniform over fan_in, biases zero.
class Conv2d {
  public:
    Conv2d() = default;
    Conv2d(std::string name, int in_ch, int out_ch, int ksize, int stride, int pad, Rng& rng);

    ag::Var operator()(const ag::Var& x) const { return ag::conv2d(x, weight_, bias_, stride_, pad_); }

    void collect(std::vector<Param>& out) const;
    int stride() const { return stride_; }
    int pad() const { return pad_; }

  private:
    std::string name_;
    ag::Var weight_;
    ag::Var bias_;
    int stride_ = 1;
    int pad_ = 0;
};

// Adam with bias correction. State slots are keyed by position in the
// parameter list, which modules keep stable across steps and checkpoints.
class Adam {
  public:
    explicit Adam(std::vector<Param> params, float lr, float beta1 = 0.9f, float beta2 = 0.999f,
                  float eps = 1e-8f);

    // Applies one update from the gradients accumulated on the parameters,
    // then clears them.
    void step();

    const std::vector<Param>& params() const { return params_; }
    float lr() const { return lr_; }
    void set_lr(float lr) { lr_ = lr; }

  private:
    std::vector<Param> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    float lr_;
    float beta1_;
    float beta2_;
    float eps_;
    int64_t t_ = 0;
};

// Drops gradient buffers on all parameters (start of a fresh accumulation).
void zero_grad(const std::vector<Param>& params);

}  // namespace siam::nn
