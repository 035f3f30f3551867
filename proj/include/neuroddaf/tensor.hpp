#pragma once
// Row-major dense matrix of doubles. Vectors are 1xN or Nx1 matrices;
// time-indexed fields are stored as std::vector<Tensor>.

#include "neuroddaf/kernels.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace neuroddaf {

class Tensor {
public:
    Tensor() = default;
    Tensor(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {}
    Tensor(int rows, int cols, double fill)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        Tensor t(static_cast<int>(rows.size()), rows.size() ? static_cast<int>(rows.begin()->size()) : 0);
        int i = 0;
        for (const auto& r : rows) {
            int j = 0;
            for (double v : r) t(i, j++) = v;
            ++i;
        }
        return t;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    void fill(double v) { data_.assign(data_.size(), v); }
    void resize(int r, int c) {
        rows_ = r;
        cols_ = c;
        data_.assign(static_cast<std::size_t>(r) * c, 0.0);
    }

    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_abs() const { return kernels::max_abs(data_.data(), data_.size()); }
    double sum() const { return kernels::sum(data_.data(), data_.size()); }
    double norm() const { return std::sqrt(kernels::sumsq(data_.data(), data_.size())); }

    Tensor transposed() const {
        Tensor t(cols_, rows_);
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    assert(a.cols() == b.rows());
    Tensor c(a.rows(), b.cols());
    kernels::gemm_nn(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
    return c;
}

inline Tensor operator+(const Tensor& a, const Tensor& b) {
    assert(a.same_shape(b));
    Tensor c(a.rows(), a.cols());
    kernels::add(a.data(), b.data(), c.data(), a.size());
    return c;
}

inline Tensor operator-(const Tensor& a, const Tensor& b) {
    assert(a.same_shape(b));
    Tensor c(a.rows(), a.cols());
    kernels::sub(a.data(), b.data(), c.data(), a.size());
    return c;
}

inline Tensor operator*(double s, const Tensor& a) {
    Tensor c(a.rows(), a.cols());
    kernels::scale(a.data(), s, c.data(), a.size());
    return c;
}

} // namespace neuroddaf
