#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "umtl/error.hpp"
#include "umtl/rng.hpp"

namespace umtl {

// Dense row-major double tensor. All model math runs in double so the
// finite-difference gradient checks have headroom at 1e-4 relative tolerance.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)), v(numel_of(shape), 0.0) {}

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) n *= d;
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

    static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int64_t> s, double value) {
        Tensor t(std::move(s));
        for (double& x : t.v) x = value;
        return t;
    }

    static Tensor randn(std::vector<int64_t> s, Rng& rng) {
        Tensor t(std::move(s));
        for (double& x : t.v) x = rng.normal();
        return t;
    }

    static Tensor uniform(std::vector<int64_t> s, Rng& rng, double lo, double hi) {
        Tensor t(std::move(s));
        for (double& x : t.v) x = rng.uniform(lo, hi);
        return t;
    }

    double& at(int64_t i) { return v[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return v[static_cast<size_t>(i)]; }

    // 2-D accessors, shape {rows, cols}
    double& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * shape[1] + c)]; }
    double at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * shape[1] + c)]; }

    // 3-D accessors, shape {d0, d1, d2}
    double& at(int64_t i, int64_t j, int64_t k) {
        return v[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    double at(int64_t i, int64_t j, int64_t k) const {
        return v[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << "]";
        return os.str();
    }
};

inline void require_shape(const Tensor& t, const std::vector<int64_t>& s, const char* what) {
    if (t.shape != s) {
        Tensor probe;
        probe.shape = s;
        throw Error(errc::shape, std::string(what) + ": expected " + probe.shape_str() +
                                     ", got " + t.shape_str());
    }
}

}  // namespace umtl
