#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace bird {

// Dense row-major tensor of doubles. Feature maps use shape {c, h, w};
// attention vectors {c}; losses are rank-0 scalars (shape {}).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(count(shape), 0.0) {}

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int> s, double x) {
        Tensor t(std::move(s));
        for (double& e : t.v) e = x;
        return t;
    }

    static Tensor scalar(double x) {
        Tensor t;
        t.v.assign(1, x);
        return t;
    }

    static size_t count(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) n *= static_cast<size_t>(d);
        return n;
    }

    int numel() const { return static_cast<int>(v.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& operator[](size_t i) { return v[i]; }
    double operator[](size_t i) const { return v[i]; }

    // (c, h, w) accessors.
    double& at(int c, int y, int x) {
        return v[(static_cast<size_t>(c) * dim(1) + y) * dim(2) + x];
    }
    double at(int c, int y, int x) const {
        return v[(static_cast<size_t>(c) * dim(1) + y) * dim(2) + x];
    }

    bool all_finite() const {
        for (double e : v)
            if (!std::isfinite(e)) return false;
        return true;
    }

    double max_abs_diff(const Tensor& o) const {
        double m = 0.0;
        for (size_t i = 0; i < v.size(); ++i) m = std::max(m, std::fabs(v[i] - o.v[i]));
        return m;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }
};

}  // namespace bird
