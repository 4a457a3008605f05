#include "siamattack/autograd.hpp"

#include <cmath>
#include <unordered_set>

#include <Eigen/Core>

#include "siamattack/error.hpp"

namespace siam::ag {

namespace {

thread_local bool g_grad_enabled = true;

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

bool any_requires(const std::vector<Var>& parents) {
    if (!g_grad_enabled) return false;
    for (const auto& p : parents)
        if (p->requires_grad) return true;
    return false;
}

int conv_out_dim(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// col has shape (IC*KH*KW, OH*OW) row-major.
void im2col(const Tensor& x, int kh, int kw, int stride, int pad, int oh, int ow, float* col) {
    const int ic = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int64_t ohw = static_cast<int64_t>(oh) * ow;
    for (int c = 0; c < ic; ++c)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                float* row = col + ((static_cast<int64_t>(c) * kh + ky) * kw + kx) * ohw;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    float* dst = row + static_cast<int64_t>(oy) * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + ow, 0.0f);
                        continue;
                    }
                    const float* src = x.data() + (static_cast<int64_t>(c) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[ox] = (ix < 0 || ix >= w) ? 0.0f : src[ix];
                    }
                }
            }
}

void col2im_add(const float* col, int ic, int h, int w, int kh, int kw, int stride, int pad,
                int oh, int ow, Tensor& dx) {
    const int64_t ohw = static_cast<int64_t>(oh) * ow;
    for (int c = 0; c < ic; ++c)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                const float* row = col + ((static_cast<int64_t>(c) * kh + ky) * kw + kx) * ohw;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    float* dst = dx.data() + (static_cast<int64_t>(c) * h + iy) * w;
                    const float* src = row + static_cast<int64_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGrad::NoGrad() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGrad::~NoGrad() { g_grad_enabled = prev_; }

Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad && g_grad_enabled;
    return n;
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (any_requires(parents)) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

void backward(const Var& root) {
    if (root->value.numel() != 1) throw ShapeError("backward() root must be scalar");
    if (!root->requires_grad) return;

    // Post-order DFS; reversed it yields a valid topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad().fill(1.0f);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

Var add(const Var& a, const Var& b) {
    if (!a->value.same_shape(b->value))
        throw ShapeError("add: " + a->value.shape_str() + " vs " + b->value.shape_str());
    Tensor out = a->value;
    const float* pb = b->value.data();
    float* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] += pb[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            auto& p = n.parents[static_cast<size_t>(k)];
            if (!p->requires_grad) continue;
            Tensor& g = p->ensure_grad();
            const float* src = n.grad.data();
            float* dst = g.data();
            for (int64_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
        }
    });
}

Var scale(const Var& a, float s) {
    Tensor out = a->value;
    float* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] *= s;
    return make_op(std::move(out), {a}, [s](Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        const float* src = n.grad.data();
        float* dst = g.data();
        for (int64_t i = 0; i < g.numel(); ++i) dst[i] += s * src[i];
    });
}

Var relu(const Var& a) {
    Tensor out = a->value;
    float* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = po[i] > 0.0f ? po[i] : 0.0f;
    return make_op(std::move(out), {a}, [](Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        const float* x = p->value.data();
        const float* src = n.grad.data();
        float* dst = g.data();
        for (int64_t i = 0; i < g.numel(); ++i)
            if (x[i] > 0.0f) dst[i] += src[i];
    });
}

Var tanh_act(const Var& a) {
    Tensor out = a->value;
    float* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = std::tanh(po[i]);
    return make_op(std::move(out), {a}, [](Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        const float* y = n.value.data();
        const float* src = n.grad.data();
        float* dst = g.data();
        for (int64_t i = 0; i < g.numel(); ++i) dst[i] += src[i] * (1.0f - y[i] * y[i]);
    });
}

Var clamp_tensors(const Var& x, const Tensor& lo, const Tensor& hi) {
    if (!x->value.same_shape(lo) || !x->value.same_shape(hi))
        throw ShapeError("clamp_tensors rails must match input shape");
    Tensor out = x->value;
    float* po = out.data();
    const float* pl = lo.data();
    const float* ph = hi.data();
    for (int64_t i = 0; i < out.numel(); ++i) {
        float v = po[i];
        v = v < pl[i] ? pl[i] : v;
        v = v > ph[i] ? ph[i] : v;
        po[i] = v;
    }
    return make_op(std::move(out), {x}, [lo, hi](Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        const float* xv = p->value.data();
        const float* pl = lo.data();
        const float* ph = hi.data();
        const float* src = n.grad.data();
        float* dst = g.data();
        for (int64_t i = 0; i < g.numel(); ++i)
            if (xv[i] >= pl[i] && xv[i] <= ph[i]) dst[i] += src[i];
    });
}

Var clamp_scalars(const Var& x, float lo, float hi) {
    Tensor out = x->value;
    float* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) {
        float v = po[i];
        v = v < lo ? lo : v;
        v = v > hi ? hi : v;
        po[i] = v;
    }
    return make_op(std::move(out), {x}, [lo, hi](Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        const float* xv = p->value.data();
        const float* src = n.grad.data();
        float* dst = g.data();
        for (int64_t i = 0; i < g.numel(); ++i)
            if (xv[i] >= lo && xv[i] <= hi) dst[i] += src[i];
    });
}

Var mse_against(const Var& x, const Tensor& ref) {
    if (!x->value.same_shape(ref)) throw ShapeError("mse_against shape mismatch");
    const int64_t n = x->value.numel();
    double acc = 0.0;
    const float* px = x->value.data();
    const float* pr = ref.data();
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(px[i]) - static_cast<double>(pr[i]);
        acc += d * d;
    }
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
    return make_op(std::move(out), {x}, [ref](Node& nd) {
        auto& p = nd.parents[0];
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        const float gs = nd.grad[0];
        const float* px = p->value.data();
        const float* pr = ref.data();
        float* dst = g.data();
        const float k = 2.0f / static_cast<float>(g.numel());
        for (int64_t i = 0; i < g.numel(); ++i) dst[i] += gs * k * (px[i] - pr[i]);
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    if (xv.ndim() != 3 || wv.ndim() != 4) throw ShapeError("conv2d expects (IC,H,W) and (OC,IC,KH,KW)");
    const int ic = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    const int oc = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    if (wv.dim(1) != ic)
        throw ShapeError("conv2d channels: input " + std::to_string(ic) + " vs weight " + std::to_string(wv.dim(1)));
    const int oh = conv_out_dim(h, kh, stride, pad);
    const int ow = conv_out_dim(wd, kw, stride, pad);
    if (oh <= 0 || ow <= 0) throw ShapeError("conv2d output would be empty");

    const int64_t krows = static_cast<int64_t>(ic) * kh * kw;
    const int64_t ohw = static_cast<int64_t>(oh) * ow;
    std::vector<float> col(static_cast<size_t>(krows * ohw));
    im2col(xv, kh, kw, stride, pad, oh, ow, col.data());

    Tensor out({oc, oh, ow});
    {
        CMapRM wm(wv.data(), oc, krows);
        CMapRM cm(col.data(), krows, ohw);
        MapRM om(out.data(), oc, ohw);
        om.noalias() = wm * cm;
    }
    const float* pb = b->value.data();
    for (int c = 0; c < oc; ++c) {
        float* row = out.data() + static_cast<int64_t>(c) * ohw;
        const float bias = pb[c];
        for (int64_t i = 0; i < ohw; ++i) row[i] += bias;
    }

    const int s = stride, p = pad;
    return make_op(std::move(out), {x, w, b}, [s, p](Node& n) {
        auto& xp = n.parents[0];
        auto& wp = n.parents[1];
        auto& bp = n.parents[2];
        const Tensor& xv = xp->value;
        const Tensor& wv = wp->value;
        const int ic = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
        const int oc = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
        const int oh = n.value.dim(1), ow = n.value.dim(2);
        const int64_t krows = static_cast<int64_t>(ic) * kh * kw;
        const int64_t ohw = static_cast<int64_t>(oh) * ow;

        if (bp->requires_grad) {
            Tensor& gb = bp->ensure_grad();
            for (int c = 0; c < oc; ++c) {
                const float* row = n.grad.data() + static_cast<int64_t>(c) * ohw;
                float acc = 0.0f;
                for (int64_t i = 0; i < ohw; ++i) acc += row[i];
                gb[c] += acc;
            }
        }
        if (wp->requires_grad) {
            std::vector<float> col(static_cast<size_t>(krows * ohw));
            im2col(xv, kh, kw, s, p, oh, ow, col.data());
            Tensor& gw = wp->ensure_grad();
            CMapRM gm(n.grad.data(), oc, ohw);
            CMapRM cm(col.data(), krows, ohw);
            MapRM gwm(gw.data(), oc, krows);
            gwm.noalias() += gm * cm.transpose();
        }
        if (xp->requires_grad) {
            std::vector<float> dcol(static_cast<size_t>(krows * ohw));
            CMapRM wm(wv.data(), oc, krows);
            CMapRM gm(n.grad.data(), oc, ohw);
            MapRM dm(dcol.data(), krows, ohw);
            dm.noalias() = wm.transpose() * gm;
            col2im_add(dcol.data(), ic, h, wd, kh, kw, s, p, oh, ow, xp->ensure_grad());
        }
    });
}

Var upsample2x(const Var& x) {
    const Tensor& xv = x->value;
    if (xv.ndim() != 3) throw ShapeError("upsample2x expects (C,H,W)");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    Tensor out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y) {
            const float* src = xv.data() + (static_cast<int64_t>(ch) * h + y / 2) * w;
            float* dst = out.data() + (static_cast<int64_t>(ch) * 2 * h + y) * 2 * w;
            for (int xx = 0; xx < 2 * w; ++xx) dst[xx] = src[xx / 2];
        }
    return make_op(std::move(out), {x}, [](Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        const int c = g.dim(0), h = g.dim(1), w = g.dim(2);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < 2 * h; ++y) {
                const float* src = n.grad.data() + (static_cast<int64_t>(ch) * 2 * h + y) * 2 * w;
                float* dst = g.data() + (static_cast<int64_t>(ch) * h + y / 2) * w;
                for (int xx = 0; xx < 2 * w; ++xx) dst[xx / 2] += src[xx];
            }
    });
}

Var concat_ch(const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.ndim() != 3 || bv.ndim() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2))
        throw ShapeError("concat_ch spatial dims must match");
    const int ca = av.dim(0), cb = bv.dim(0), h = av.dim(1), w = av.dim(2);
    Tensor out({ca + cb, h, w});
    std::copy(av.data(), av.data() + av.numel(), out.data());
    std::copy(bv.data(), bv.data() + bv.numel(), out.data() + av.numel());
    return make_op(std::move(out), {a, b}, [ca](Node& n) {
        auto& ap = n.parents[0];
        auto& bp = n.parents[1];
        const int h = n.value.dim(1), w = n.value.dim(2);
        const int64_t na = static_cast<int64_t>(ca) * h * w;
        if (ap->requires_grad) {
            Tensor& g = ap->ensure_grad();
            const float* src = n.grad.data();
            for (int64_t i = 0; i < na; ++i) g[i] += src[i];
        }
        if (bp->requires_grad) {
            Tensor& g = bp->ensure_grad();
            const float* src = n.grad.data() + na;
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += src[i];
        }
    });
}

Var crop_hw(const Var& x, int y0, int x0, int h, int w) {
    const Tensor& xv = x->value;
    if (xv.ndim() != 3) throw ShapeError("crop_hw expects (C,H,W)");
    if (y0 < 0 || x0 < 0 || y0 + h > xv.dim(1) || x0 + w > xv.dim(2))
        throw ShapeError("crop_hw window out of bounds");
    const int c = xv.dim(0);
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y) {
            const float* src = xv.data() + (static_cast<int64_t>(ch) * xv.dim(1) + y0 + y) * xv.dim(2) + x0;
            float* dst = out.data() + (static_cast<int64_t>(ch) * h + y) * w;
            std::copy(src, src + w, dst);
        }
    return make_op(std::move(out), {x}, [y0, x0](Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        const int c = n.value.dim(0), h = n.value.dim(1), w = n.value.dim(2);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y) {
                const float* src = n.grad.data() + (static_cast<int64_t>(ch) * h + y) * w;
                float* dst = g.data() + (static_cast<int64_t>(ch) * g.dim(1) + y0 + y) * g.dim(2) + x0;
                for (int xx = 0; xx < w; ++xx) dst[xx] += src[xx];
            }
    });
}

Var dw_xcorr(const Var& x, const Var& kernel) {
    const Tensor& xv = x->value;
    const Tensor& kv = kernel->value;
    if (xv.ndim() != 3 || kv.ndim() != 3 || xv.dim(0) != kv.dim(0))
        throw ShapeError("dw_xcorr channel mismatch: " + xv.shape_str() + " vs " + kv.shape_str());
    const int c = xv.dim(0), hx = xv.dim(1), wx = xv.dim(2);
    const int kh = kv.dim(1), kw = kv.dim(2);
    const int oh = hx - kh + 1, ow = wx - kw + 1;
    if (oh <= 0 || ow <= 0) throw ShapeError("dw_xcorr kernel larger than input");
    const float norm = 1.0f / static_cast<float>(kh * kw);

    Tensor out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                float acc = 0.0f;
                for (int u = 0; u < kh; ++u) {
                    const float* xrow = xv.data() + (static_cast<int64_t>(ch) * hx + i + u) * wx + j;
                    const float* krow = kv.data() + (static_cast<int64_t>(ch) * kh + u) * kw;
                    for (int v = 0; v < kw; ++v) acc += xrow[v] * krow[v];
                }
                out.at(ch, i, j) = acc * norm;
            }

    return make_op(std::move(out), {x, kernel}, [norm](Node& n) {
        auto& xp = n.parents[0];
        auto& kp = n.parents[1];
        const Tensor& xv = xp->value;
        const Tensor& kv = kp->value;
        const int c = xv.dim(0);
        const int kh = kv.dim(1), kw = kv.dim(2);
        const int oh = n.value.dim(1), ow = n.value.dim(2);
        const bool need_dx = xp->requires_grad;
        const bool need_dk = kp->requires_grad;
        if (need_dx) xp->ensure_grad();
        if (need_dk) kp->ensure_grad();
        for (int ch = 0; ch < c; ++ch)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    const float go = n.grad.at(ch, i, j) * norm;
                    if (go == 0.0f) continue;
                    for (int u = 0; u < kh; ++u)
                        for (int v = 0; v < kw; ++v) {
                            if (need_dx) xp->grad.at(ch, i + u, j + v) += go * kv.at(ch, u, v);
                            if (need_dk) kp->grad.at(ch, u, v) += go * xv.at(ch, i + u, j + v);
                        }
                }
    });
}

}  // namespace siam::ag
