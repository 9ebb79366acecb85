#include "glamap/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace glamap::nn {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
        n *= d;
    }
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    numel_ = shape_numel(shape_);
    data_ = std::make_shared<std::vector<double>>(static_cast<size_t>(numel_), 0.0);
}

Tensor::Tensor(Shape shape, double fill) : Tensor(std::move(shape)) {
    std::fill(data_->begin(), data_->end(), fill);
}

Tensor Tensor::from(std::vector<double> values, Shape shape) {
    if (static_cast<int64_t>(values.size()) != shape_numel(shape))
        throw std::invalid_argument("Tensor::from: value count does not match shape");
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = static_cast<int64_t>(values.size());
    t.data_ = std::make_shared<std::vector<double>>(std::move(values));
    return t;
}

Tensor Tensor::clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.numel_ = numel_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    return t;
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel_)
        throw std::invalid_argument("Tensor::reshaped: numel mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = numel_;
    t.data_ = data_;
    return t;
}

void Tensor::fill(double v) { std::fill(data_->begin(), data_->end(), v); }

void Tensor::add_inplace(const Tensor& other) {
    if (!same_shape(other)) throw std::invalid_argument("Tensor::add_inplace: shape mismatch");
    const double* o = other.data();
    double* d = data();
    for (int64_t i = 0; i < numel_; ++i) d[i] += o[i];
}

void Tensor::scale_inplace(double s) {
    for (auto& v : *data_) v *= s;
}

double Tensor::min() const {
    double m = std::numeric_limits<double>::infinity();
    for (double v : *data_) m = std::min(m, v);
    return m;
}

double Tensor::max() const {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : *data_) m = std::max(m, v);
    return m;
}

double Tensor::sum() const { return std::accumulate(data_->begin(), data_->end(), 0.0); }

bool Tensor::all_finite() const {
    for (double v : *data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
}

}  // namespace glamap::nn
