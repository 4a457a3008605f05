#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "siamattack/autograd.hpp"
#include "siamattack/rng.hpp"

using namespace siam;
using testutil::fd_check;

namespace {

// Reduce any tensor to a scalar against a fixed reference; the squared
// residuals give distinct per-element weights so index mixups in a backward
// pass cannot cancel out. The reference must not depend on the input value or
// finite differencing would see a constant function.
ag::Var weighted_sum(const ag::Var& x) {
    Tensor ref(x->value.shape());
    for (int64_t i = 0; i < ref.numel(); ++i)
        ref[i] = 0.1f + 0.01f * static_cast<float>(i % 7);
    return ag::mse_against(x, ref);
}

}  // namespace

TEST_CASE("add and scale gradients") {
    Rng r(1);
    const Tensor x0 = Tensor::uniform({3, 4, 4}, -1.0f, 1.0f, r);
    fd_check(x0, [](const ag::Var& x) {
        return weighted_sum(ag::add(ag::scale(x, 2.5f), ag::scale(x, -0.5f)));
    });
}

TEST_CASE("relu gradient") {
    Rng r(2);
    Tensor x0 = Tensor::uniform({2, 5, 5}, -1.0f, 1.0f, r);
    for (int64_t i = 0; i < x0.numel(); ++i)
        if (std::abs(x0[i]) < 5e-3f) x0[i] = 0.1f;  // keep away from the kink
    fd_check(x0, [](const ag::Var& x) { return weighted_sum(ag::relu(x)); });
}

TEST_CASE("tanh gradient") {
    Rng r(3);
    const Tensor x0 = Tensor::uniform({2, 3, 3}, -2.0f, 2.0f, r);
    fd_check(x0, [](const ag::Var& x) { return weighted_sum(ag::tanh_act(x)); });
}

TEST_CASE("clamp passes gradient only inside the band") {
    Rng r(4);
    Tensor x0 = Tensor::uniform({1, 4, 4}, -1.0f, 1.0f, r);
    Tensor lo({1, 4, 4}), hi({1, 4, 4});
    lo.fill(-0.5f);
    hi.fill(0.5f);
    for (int64_t i = 0; i < x0.numel(); ++i)
        if (std::abs(std::abs(x0[i]) - 0.5f) < 5e-3f) x0[i] = 0.0f;
    fd_check(x0, [&](const ag::Var& x) {
        return weighted_sum(ag::clamp_tensors(x, lo, hi));
    });

    ag::Var x = ag::leaf(x0, true);
    ag::Var y = ag::clamp_tensors(x, lo, hi);
    ag::backward(weighted_sum(y));
    for (int64_t i = 0; i < x0.numel(); ++i)
        if (x0[i] < -0.5f || x0[i] > 0.5f) CHECK(x->grad[i] == 0.0f);
}

TEST_CASE("mse_against value and gradient") {
    Tensor x0({2, 2});
    x0[0] = 1.0f; x0[1] = 2.0f; x0[2] = 3.0f; x0[3] = 4.0f;
    Tensor ref({2, 2});
    ref.fill(2.0f);
    ag::Var x = ag::leaf(x0, true);
    ag::Var loss = ag::mse_against(x, ref);
    // ((1)^2 + 0 + 1 + 4) / 4 = 1.5
    CHECK(loss->value[0] == doctest::Approx(1.5f));
    fd_check(x0, [&](const ag::Var& v) { return ag::mse_against(v, ref); });
}

TEST_CASE("conv2d gradient wrt input, weight, and bias") {
    Rng r(5);
    const Tensor x0 = Tensor::uniform({2, 6, 6}, -1.0f, 1.0f, r);
    const Tensor w0 = Tensor::uniform({3, 2, 3, 3}, -0.5f, 0.5f, r);
    const Tensor b0 = Tensor::uniform({3}, -0.5f, 0.5f, r);

    SUBCASE("input, stride 1 pad 1") {
        fd_check(x0, [&](const ag::Var& x) {
            return weighted_sum(ag::conv2d(x, ag::leaf(w0), ag::leaf(b0), 1, 1));
        });
    }
    SUBCASE("input, stride 2 pad 0") {
        fd_check(x0, [&](const ag::Var& x) {
            return weighted_sum(ag::conv2d(x, ag::leaf(w0), ag::leaf(b0), 2, 0));
        });
    }
    SUBCASE("weight") {
        fd_check(w0, [&](const ag::Var& w) {
            return weighted_sum(ag::conv2d(ag::leaf(x0), w, ag::leaf(b0), 1, 1));
        });
    }
    SUBCASE("bias") {
        fd_check(b0, [&](const ag::Var& b) {
            return weighted_sum(ag::conv2d(ag::leaf(x0), ag::leaf(w0), b, 1, 1));
        });
    }
}

TEST_CASE("conv2d output matches a direct computation") {
    // 1x1 input channel, 2x2 kernel, no pad: out = sum(x*w) + b placement by placement.
    Tensor x({1, 3, 3});
    for (int i = 0; i < 9; ++i) x[i] = static_cast<float>(i + 1);
    Tensor w({1, 1, 2, 2});
    w[0] = 1.0f; w[1] = 0.0f; w[2] = 0.0f; w[3] = -1.0f;
    Tensor b({1});
    b[0] = 0.25f;
    const ag::Var out = ag::conv2d(ag::leaf(x), ag::leaf(w), ag::leaf(b), 1, 0);
    REQUIRE(out->value.shape() == std::vector<int>{1, 2, 2});
    // x[0,0]-x[1,1]+0.25 = 1-5+0.25
    CHECK(out->value.at(0, 0, 0) == doctest::Approx(-3.75f));
    CHECK(out->value.at(0, 0, 1) == doctest::Approx(2.0f - 6.0f + 0.25f));
    CHECK(out->value.at(0, 1, 1) == doctest::Approx(5.0f - 9.0f + 0.25f));
}

TEST_CASE("upsample2x nearest gradient and values") {
    Rng r(6);
    const Tensor x0 = Tensor::uniform({2, 3, 3}, -1.0f, 1.0f, r);
    const ag::Var up = ag::upsample2x(ag::leaf(x0));
    REQUIRE(up->value.shape() == std::vector<int>{2, 6, 6});
    CHECK(up->value.at(0, 0, 0) == x0.at(0, 0, 0));
    CHECK(up->value.at(0, 1, 1) == x0.at(0, 0, 0));
    CHECK(up->value.at(1, 5, 4) == x0.at(1, 2, 2));
    fd_check(x0, [](const ag::Var& x) { return weighted_sum(ag::upsample2x(x)); });
}

TEST_CASE("concat_ch stacks channels and routes gradients") {
    Rng r(7);
    const Tensor a0 = Tensor::uniform({2, 4, 4}, -1.0f, 1.0f, r);
    const Tensor b0 = Tensor::uniform({3, 4, 4}, -1.0f, 1.0f, r);
    const ag::Var cat = ag::concat_ch(ag::leaf(a0), ag::leaf(b0));
    REQUIRE(cat->value.shape() == std::vector<int>{5, 4, 4});
    CHECK(cat->value.at(1, 2, 3) == a0.at(1, 2, 3));
    CHECK(cat->value.at(4, 2, 3) == b0.at(2, 2, 3));
    fd_check(a0, [&](const ag::Var& a) {
        return weighted_sum(ag::concat_ch(a, ag::leaf(b0)));
    });
    fd_check(b0, [&](const ag::Var& b) {
        return weighted_sum(ag::concat_ch(ag::leaf(a0), b));
    });
}

TEST_CASE("crop_hw takes the exact window") {
    Rng r(8);
    const Tensor x0 = Tensor::uniform({2, 6, 7}, -1.0f, 1.0f, r);
    const ag::Var c = ag::crop_hw(ag::leaf(x0), 1, 2, 4, 3);
    REQUIRE(c->value.shape() == std::vector<int>{2, 4, 3});
    CHECK(c->value.at(1, 0, 0) == x0.at(1, 1, 2));
    CHECK(c->value.at(0, 3, 2) == x0.at(0, 4, 4));
    fd_check(x0, [](const ag::Var& x) {
        return weighted_sum(ag::crop_hw(x, 1, 2, 4, 3));
    });
}

TEST_CASE("dw_xcorr values match a direct mean-normalized correlation") {
    Rng r(9);
    const Tensor x0 = Tensor::uniform({2, 5, 5}, -1.0f, 1.0f, r);
    const Tensor k0 = Tensor::uniform({2, 3, 3}, -1.0f, 1.0f, r);
    const ag::Var out = ag::dw_xcorr(ag::leaf(x0), ag::leaf(k0));
    REQUIRE(out->value.shape() == std::vector<int>{2, 3, 3});
    for (int c = 0; c < 2; ++c) {
        float acc = 0.0f;
        for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 3; ++v) acc += x0.at(c, 1 + u, 2 + v) * k0.at(c, u, v);
        CHECK(out->value.at(c, 1, 2) == doctest::Approx(acc / 9.0f));
    }
}

TEST_CASE("dw_xcorr gradients wrt search and kernel") {
    Rng r(10);
    const Tensor x0 = Tensor::uniform({2, 5, 5}, -1.0f, 1.0f, r);
    const Tensor k0 = Tensor::uniform({2, 3, 3}, -1.0f, 1.0f, r);
    fd_check(x0, [&](const ag::Var& x) {
        return weighted_sum(ag::dw_xcorr(x, ag::leaf(k0)));
    });
    fd_check(k0, [&](const ag::Var& k) {
        return weighted_sum(ag::dw_xcorr(ag::leaf(x0), k));
    });
}

TEST_CASE("diamond graphs accumulate gradients once per path") {
    Tensor x0({2});
    x0[0] = 1.0f;
    x0[1] = -2.0f;
    ag::Var x = ag::leaf(x0, true);
    ag::Var a = ag::scale(x, 2.0f);
    ag::Var b = ag::scale(x, 3.0f);
    ag::Var s = ag::add(a, b);  // s = 5x
    Tensor zero({2});
    ag::Var loss = ag::mse_against(s, zero);  // mean(25 x^2): d/dx = 25 x
    ag::backward(loss);
    CHECK(x->grad[0] == doctest::Approx(25.0f * 1.0f));
    CHECK(x->grad[1] == doctest::Approx(25.0f * -2.0f));
}

TEST_CASE("backward requires a scalar root") {
    ag::Var x = ag::leaf(Tensor::full({3}, 1.0f), true);
    ag::Var y = ag::scale(x, 2.0f);
    CHECK_THROWS(ag::backward(y));
}

TEST_CASE("NoGrad suppresses graph building") {
    ag::Var x = ag::leaf(Tensor::full({2}, 1.0f), true);
    {
        ag::NoGrad ng;
        CHECK(!ag::grad_enabled());
        ag::Var y = ag::scale(x, 2.0f);
        CHECK(!y->requires_grad);
        CHECK(y->parents.empty());
    }
    CHECK(ag::grad_enabled());
}

TEST_CASE("ops on non-grad leaves build no graph") {
    ag::Var x = ag::leaf(Tensor::full({2}, 1.0f), false);
    ag::Var y = ag::scale(x, 2.0f);
    CHECK(!y->requires_grad);
    CHECK(y->parents.empty());
}
