// Copyright (c) 2026, The modbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensor of doubles.

#pragma once

#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace modbench {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::size_t b) { return a * b; });
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
        check_shape();
    }

    Tensor(Shape shape, std::vector<double> values)
        : shape_(std::move(shape)), data_(std::move(values)) {
        check_shape();
        if (shape_numel(shape_) != data_.size()) {
            throw Error("tensor: shape " + shape_str(shape_) + " does not match " +
                        std::to_string(data_.size()) + " values");
        }
    }

    static Tensor vector(std::vector<double> values) {
        const std::size_t n = values.size();
        return Tensor({n}, std::move(values));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
        return Tensor({rows, cols}, std::move(values));
    }

    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }

    /// Size of the last axis.
    std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
    /// Product of all axes but the last.
    std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Same values under a new shape with identical element count.
    Tensor reshaped(Shape shape) const {
        Tensor t;
        t.shape_ = std::move(shape);
        t.check_shape();
        if (shape_numel(t.shape_) != size()) {
            throw Error("reshape: " + shape_str(shape_) + " -> " + shape_str(t.shape_));
        }
        t.data_ = data_;
        return t;
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void check_shape() const {
        if (shape_.empty()) throw Error("tensor: empty shape");
        for (std::size_t d : shape_) {
            if (d == 0) throw Error("tensor: zero-sized dimension in " + shape_str(shape_));
        }
    }

    Shape shape_;
    std::vector<double> data_;
};

}  // namespace modbench
