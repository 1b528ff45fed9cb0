#pragma once

#include <cstdint>
#include <cstring>
#include <numeric>
#include <vector>

#include "aftrack/common.hpp"

namespace aftrack {

/// Dense row-major tensor of Real. Feature maps use NCHW order.
struct Tensor {
    std::vector<int> shape;
    std::vector<Real> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(count(shape), 0.0) {}
    Tensor(std::vector<int> s, Real fill) : shape(std::move(s)), v(count(shape), fill) {}

    static std::int64_t count(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    Real* data() { return v.data(); }
    const Real* data() const { return v.data(); }

    void zero() { std::fill(v.begin(), v.end(), 0.0); }

    // NCHW accessors
    Real& at(int n, int c, int y, int x) {
        return v[((static_cast<std::int64_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
    Real at(int n, int c, int y, int x) const {
        return v[((static_cast<std::int64_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }

    static Tensor randn(std::vector<int> s, Rng& rng, Real stddev = 1.0) {
        Tensor t(std::move(s));
        for (auto& x : t.v) x = rng.normal() * stddev;
        return t;
    }

    static Tensor scalar(Real x) {
        Tensor t({1});
        t.v[0] = x;
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline bool all_finite(const Tensor& t) {
    for (Real x : t.v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace aftrack
