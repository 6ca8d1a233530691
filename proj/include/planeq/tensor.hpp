#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

#include "planeq/common.hpp"

namespace planeq {

// Dense row-major tensor of 64-bit floats. All graph computation runs in
// doubles; 32-bit conversion happens only at the file-format boundary.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> dims) : dims_(std::move(dims)) {
        data_.assign(static_cast<size_t>(count(dims_)), 0.0);
    }

    Tensor(std::vector<int> dims, std::vector<double> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        if (static_cast<size_t>(count(dims_)) != data_.size())
            throw ShapeError("tensor data length does not match dims");
    }

    static Tensor zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }

    static Tensor full(std::vector<int> dims, double v) {
        Tensor t(std::move(dims));
        for (double& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor identity(int n) {
        Tensor t({n, n});
        for (int i = 0; i < n; ++i) t.data_[static_cast<size_t>(i) * n + i] = 1.0;
        return t;
    }

    static Tensor uniform(std::vector<int> dims, class RngStream& rng, double lo, double hi);

    int ndim() const { return static_cast<int>(dims_.size()); }
    int dim(int i) const { return dims_[static_cast<size_t>(i)]; }
    const std::vector<int>& dims() const { return dims_; }
    int numel() const { return static_cast<int>(data_.size()); }

    // 2-D accessors; rows()/cols() treat a 1-D tensor as a single row.
    int rows() const { return ndim() >= 2 ? dims_[0] : 1; }
    int cols() const { return ndim() >= 2 ? dims_[ndim() == 2 ? 1 : static_cast<int>(dims_.size()) - 1]
                                          : (ndim() == 1 ? dims_[0] : 1); }

    double& operator[](int i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int i) const { return data_[static_cast<size_t>(i)]; }
    double& at2(int r, int c) { return data_[static_cast<size_t>(r) * cols() + c]; }
    double at2(int r, int c) const { return data_[static_cast<size_t>(r) * cols() + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    bool same_dims(const Tensor& o) const { return dims_ == o.dims_; }

    bool all_finite() const {
        // NaN/Inf carry an all-ones exponent; an integer max-reduction over
        // the exponent bits vectorizes where a float sum cannot
        constexpr uint64_t expmask = 0x7FF0000000000000ull;
        uint64_t m0 = 0, m1 = 0, m2 = 0, m3 = 0;
        const double* p = data_.data();
        size_t i = 0;
        const size_t n = data_.size();
        for (; i + 4 <= n; i += 4) {
            m0 = std::max(m0, std::bit_cast<uint64_t>(p[i]) & expmask);
            m1 = std::max(m1, std::bit_cast<uint64_t>(p[i + 1]) & expmask);
            m2 = std::max(m2, std::bit_cast<uint64_t>(p[i + 2]) & expmask);
            m3 = std::max(m3, std::bit_cast<uint64_t>(p[i + 3]) & expmask);
        }
        for (; i < n; ++i) m0 = std::max(m0, std::bit_cast<uint64_t>(p[i]) & expmask);
        return std::max(std::max(m0, m1), std::max(m2, m3)) != expmask;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::fabs(v));
        return m;
    }

    std::string dims_str() const {
        std::string s = "[";
        for (size_t i = 0; i < dims_.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(dims_[i]);
        }
        return s + "]";
    }

    static int count(const std::vector<int>& dims) {
        long long n = 1;
        for (int d : dims) {
            if (d <= 0) throw ShapeError("tensor dims must be positive");
            n *= d;
        }
        return static_cast<int>(n);
    }

private:
    std::vector<int> dims_;
    std::vector<double> data_;
};

}  // namespace planeq
