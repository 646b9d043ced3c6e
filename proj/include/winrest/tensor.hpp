// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "winrest/error.hpp"
#include "winrest/rng.hpp"

namespace winrest {

/// Dense row-major tensor of rank 1..4. Rank-3 tensors follow the
/// height x width x channels layout used throughout the model code.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
        data_.assign(numel_of(dims_), T(0));
    }

    static Tensor zeros(std::vector<std::size_t> dims) { return Tensor(std::move(dims)); }

    static Tensor full(std::vector<std::size_t> dims, T value) {
        Tensor t(std::move(dims));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor random_uniform(std::vector<std::size_t> dims, Rng& rng, T lo = T(0), T hi = T(1)) {
        Tensor t(std::move(dims));
        for (auto& v : t.data_) v = static_cast<T>(rng.uniform(double(lo), double(hi)));
        return t;
    }

    static Tensor random_normal(std::vector<std::size_t> dims, Rng& rng, T stddev = T(1)) {
        Tensor t(std::move(dims));
        for (auto& v : t.data_) v = static_cast<T>(rng.normal() * double(stddev));
        return t;
    }

    std::size_t rank() const { return dims_.size(); }
    std::size_t dim(std::size_t i) const { return dims_[i]; }
    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // Rank-3 feature-map accessors.
    std::size_t height() const { assert(rank() == 3); return dims_[0]; }
    std::size_t width() const { assert(rank() == 3); return dims_[1]; }
    std::size_t channels() const { assert(rank() == 3); return dims_[2]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& operator()(std::size_t i) { assert(rank() == 1); return data_[i]; }
    const T& operator()(std::size_t i) const { assert(rank() == 1); return data_[i]; }

    T& operator()(std::size_t i, std::size_t j) {
        assert(rank() == 2);
        return data_[i * dims_[1] + j];
    }
    const T& operator()(std::size_t i, std::size_t j) const {
        assert(rank() == 2);
        return data_[i * dims_[1] + j];
    }

    T& operator()(std::size_t i, std::size_t j, std::size_t k) {
        assert(rank() == 3);
        return data_[(i * dims_[1] + j) * dims_[2] + k];
    }
    const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
        assert(rank() == 3);
        return data_[(i * dims_[1] + j) * dims_[2] + k];
    }

    T& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        assert(rank() == 4);
        return data_[((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
    }
    const T& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        assert(rank() == 4);
        return data_[((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    /// Reinterprets the buffer with new dims of identical element count.
    Tensor reshaped(std::vector<std::size_t> dims) const {
        require(numel_of(dims) == numel(), ErrorKind::shape,
                "reshape element count mismatch: have ", numel(), ", want ", numel_of(dims));
        Tensor t;
        t.dims_ = std::move(dims);
        t.data_ = data_;
        return t;
    }

    bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

    Tensor& operator+=(const Tensor& other) {
        assert(same_shape(other));
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    Tensor& operator-=(const Tensor& other) {
        assert(same_shape(other));
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
        return *this;
    }

    Tensor& operator*=(T s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    static std::size_t numel_of(const std::vector<std::size_t>& dims) {
        std::size_t n = 1;
        for (std::size_t d : dims) n *= d;
        return dims.empty() ? 0 : n;
    }

private:
    std::vector<std::size_t> dims_;
    std::vector<T> data_;
};

template <typename T>
using EigenRowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<EigenRowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const EigenRowMat<T>>;

/// Views a contiguous tensor as a rows x cols row-major matrix.
template <typename T>
MatMap<T> as_matrix(Tensor<T>& t, std::size_t rows, std::size_t cols) {
    assert(rows * cols == t.numel());
    return MatMap<T>(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
ConstMatMap<T> as_matrix(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
    assert(rows * cols == t.numel());
    return ConstMatMap<T>(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
        if (!std::isfinite(static_cast<double>(t[i]))) return false;
    }
    return true;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    assert(a.same_shape(b));
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return m;
}

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        if (a[i] != b[i]) return false;  // exact compare on purpose
    }
    return true;
}

template <typename T>
void clamp01(Tensor<T>& t) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = std::clamp(t[i], T(0), T(1));
}

}  // namespace winrest
