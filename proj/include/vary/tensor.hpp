#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vary/common.hpp"
#include "vary/rng.hpp"

namespace vary {

// Dense row-major double tensor. Shapes are small vectors of ints; most ops
// view a tensor as a matrix [rows, cols] where cols is the last dimension
// and rows is everything before it collapsed.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(numel_of(shape_), 0.0);
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static Tensor from(std::vector<int> shape, std::vector<double> values);

    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = rng.normal(0.0, stddev);
        return t;
    }

    bool empty() const { return data_.empty(); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    size_t numel() const { return data_.size(); }

    // matrix view: last dim = cols, the rest = rows
    int rows() const;
    int cols() const { return shape_.empty() ? 0 : shape_.back(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& at2(int r, int c) { return data_[static_cast<size_t>(r) * cols() + c]; }
    double at2(int r, int c) const { return data_[static_cast<size_t>(r) * cols() + c]; }

    Tensor reshaped(std::vector<int> new_shape) const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    double max_abs() const;
    double max_abs_diff(const Tensor& o) const;

    std::string shape_str() const;

    static size_t numel_of(const std::vector<int>& shape);

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace vary
