#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "siamattack/tensor.hpp"

namespace siam::ag {

// Minimal reverse-mode autodiff over siam::Tensor. Graphs are built
// define-by-run; Node::parents keeps the upstream values alive until
// backward() has consumed them. Ops skip graph construction entirely when no
// input requires gradients (or inside a NoGrad scope), so inference pays only
// for the forward arithmetic.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (grad.empty()) grad = Tensor::zeros(value.shape());
        return grad;
    }
};

// Leaf variable. Parameters and attacked inputs are leaves with
// requires_grad=true; constants are leaves with requires_grad=false.
Var leaf(Tensor value, bool requires_grad = false);

// Generic op constructor used by modules that fuse their own backward rules.
// If gradients are globally disabled or no parent requires them, parents and
// backward_fn are dropped.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

// Scalar root backward pass.
void backward(const Var& root);

// Thread-local gradient switch, RAII style.
class NoGrad {
  public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

  private:
    bool prev_;
};
bool grad_enabled();

// ---- elementwise and structural ops ----
Var add(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var relu(const Var& a);
Var tanh_act(const Var& a);

// clamp(x, lo, hi) with constant tensor rails (same shape as x). Gradient
// passes where lo <= x <= hi.
Var clamp_tensors(const Var& x, const Tensor& lo, const Tensor& hi);
Var clamp_scalars(const Var& x, float lo, float hi);

// Scalar mean((x - ref)^2).
Var mse_against(const Var& x, const Tensor& ref);

// ---- network ops ----
// x: (IC,H,W); w: (OC,IC,KH,KW); b: (OC). Zero padding, floor output size.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

// Nearest-neighbor 2x upsample of (C,H,W).
Var upsample2x(const Var& x);

// Channel concatenation of two (.,H,W) tensors.
Var concat_ch(const Var& a, const Var& b);

// Spatial crop: rows [y0,y0+h), cols [x0,x0+w).
Var crop_hw(const Var& x, int y0, int x0, int h, int w);

// Depthwise cross-correlation: x (C,HX,WX) against kernel (C,KH,KW), valid
// placements only, normalized by the kernel footprint:
//   out(c,i,j) = mean_{u,v} x(c,i+u,j+v) * k(c,u,v)
Var dw_xcorr(const Var& x, const Var& kernel);

}  // namespace siam::ag
