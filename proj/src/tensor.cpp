#include "vary/tensor.hpp"

#include <cmath>
#include <sstream>

namespace vary {

size_t Tensor::numel_of(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative dimension in tensor shape");
        n *= static_cast<size_t>(d);
    }
    return shape.empty() ? 0 : n;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (numel_of(t.shape_) != values.size())
        throw ShapeError("value count does not match shape");
    t.data_ = std::move(values);
    return t;
}

int Tensor::rows() const {
    if (shape_.empty()) return 0;
    size_t r = 1;
    for (size_t i = 0; i + 1 < shape_.size(); ++i) r *= static_cast<size_t>(shape_[i]);
    return static_cast<int>(r);
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
    if (numel_of(new_shape) != data_.size())
        throw ShapeError("reshape changes element count: " + shape_str());
    Tensor t = *this;
    t.shape_ = std::move(new_shape);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

double Tensor::max_abs_diff(const Tensor& o) const {
    if (!same_shape(o)) throw ShapeError("max_abs_diff on mismatched shapes");
    double m = 0.0;
    for (size_t i = 0; i < data_.size(); ++i) m = std::max(m, std::fabs(data_[i] - o.data_[i]));
    return m;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ",";
        os << shape_[i];
    }
    os << "]";
    return os.str();
}

}  // namespace vary
