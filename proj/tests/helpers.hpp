#pragma once

#include <doctest.h>

#include <cmath>
#include <functional>

#include "siamattack/autograd.hpp"
#include "siamattack/tensor.hpp"

namespace testutil {

namespace ag = siam::ag;
using siam::Tensor;

// Central-difference gradient check: rebuilds the graph from scratch at
// x +- eps per coordinate and compares against the backward-pass gradient.
// Checks at most max_checks evenly spaced coordinates.
inline void fd_check(const Tensor& x0, const std::function<ag::Var(const ag::Var&)>& build,
                     float eps = 1e-3f, float rel_tol = 1e-2f, float abs_tol = 1e-4f,
                     int64_t max_checks = 64) {
    ag::Var x = ag::leaf(x0, true);
    ag::Var root = build(x);
    REQUIRE(root->value.numel() == 1);
    ag::backward(root);
    REQUIRE(!x->grad.empty());
    const Tensor analytic = x->grad;

    auto eval = [&](const Tensor& xv) {
        ag::NoGrad ng;
        return build(ag::leaf(xv))->value[0];
    };

    const int64_t n = x0.numel();
    const int64_t step = n <= max_checks ? 1 : n / max_checks;
    for (int64_t i = 0; i < n; i += step) {
        Tensor xp = x0;
        Tensor xm = x0;
        xp[i] += eps;
        xm[i] -= eps;
        const float fd = (eval(xp) - eval(xm)) / (2.0f * eps);
        const float an = analytic[i];
        const float tol = abs_tol + rel_tol * std::max(std::abs(an), std::abs(fd));
        INFO("coordinate ", i, ": analytic=", an, " fd=", fd);
        CHECK(std::abs(an - fd) <= tol);
    }
}

inline bool tensors_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

inline float max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    float m = 0.0f;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace testutil
