#include "siamattack/nn.hpp"

#include <cmath>

namespace siam::nn {

Conv2d::Conv2d(std::string name, int in_ch, int out_ch, int ksize, int stride, int pad, Rng& rng)
    : name_(std::move(name)), stride_(stride), pad_(pad) {
    const float fan_in = static_cast<float>(in_ch * ksize * ksize);
    const float bound = std::sqrt(6.0f / fan_in);
    weight_ = ag::leaf(Tensor::uniform({out_ch, in_ch, ksize, ksize}, -bound, bound, rng), true);
    bias_ = ag::leaf(Tensor::zeros({out_ch}), true);
}

void Conv2d::collect(std::vector<Param>& out) const {
    out.push_back({name_ + ".w", weight_});
    out.push_back({name_ + ".b", bias_});
}

Adam::Adam(std::vector<Param> params, float lr, float beta1, float beta2, float eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.push_back(Tensor::zeros(p.var->value.shape()));
        v_.push_back(Tensor::zeros(p.var->value.shape()));
    }
}

void Adam::step() {
    ++t_;
    const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& node = *params_[i].var;
        if (node.grad.empty()) continue;  // parameter untouched this step
        float* w = node.value.data();
        const float* g = node.grad.data();
        float* m = m_[i].data();
        float* v = v_[i].data();
        for (int64_t j = 0; j < node.value.numel(); ++j) {
            m[j] = beta1_ * m[j] + (1.0f - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0f - beta2_) * g[j] * g[j];
            const float mhat = m[j] / bc1;
            const float vhat = v[j] / bc2;
            w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
        node.grad = Tensor();
    }
}

void zero_grad(const std::vector<Param>& params) {
    for (const auto& p : params) p.var->grad = Tensor();
}

}  // namespace siam::nn
