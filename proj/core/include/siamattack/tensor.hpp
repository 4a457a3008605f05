#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "siamattack/error.hpp"
#include "siamattack/rng.hpp"

namespace siam {

// Dense row-major float tensor. Value semantics (copies are deep); shapes are
// small vectors of ints. All network activations, images in compute form, and
// parameters use this type.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(numel_of(shape_)), 0.0f);
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, float v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor scalar(float v) { return full({1}, v); }

    static Tensor uniform(std::vector<int> shape, float lo, float hi, Rng& rng) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = rng.uniform(lo, hi);
        return t;
    }

    static Tensor normal(std::vector<int> shape, float stddev, Rng& rng) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = stddev * rng.normal();
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // (C,H,W) indexing for the common activation layout.
    float& at(int c, int y, int x) {
        return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    float at(int c, int y, int x) const {
        return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < shape_.size(); ++i) {
            s += std::to_string(shape_[i]);
            if (i + 1 < shape_.size()) s += ",";
        }
        return s + ")";
    }

    static int64_t numel_of(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw ShapeError("negative dimension");
            n *= d;
        }
        return n;
    }

  private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

inline void check_shape(const Tensor& t, const std::vector<int>& expect, const char* what) {
    if (t.shape() != expect) {
        Tensor e(expect);
        throw ShapeError(std::string(what) + ": got " + t.shape_str() + ", want " + e.shape_str());
    }
}

}  // namespace siam
