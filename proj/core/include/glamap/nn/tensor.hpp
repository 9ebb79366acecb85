#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace glamap::nn {

using Shape = std::vector<int>;

/// Dense double tensor with shared storage (copies are shallow, like views
/// over the same buffer; use clone() for an independent copy). Row-major.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, double fill);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor from(std::vector<double> values, Shape shape);
    static Tensor scalar(double v) { return from({v}, {1}); }

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int64_t numel() const { return numel_; }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }

    double& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

    // Convenience indexers for the shapes the model uses.
    double& at2(int a, int b) { return (*data_)[static_cast<size_t>(a) * shape_[1] + b]; }
    double at2(int a, int b) const { return (*data_)[static_cast<size_t>(a) * shape_[1] + b]; }
    double& at3(int a, int b, int c) {
        return (*data_)[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
    }
    double at3(int a, int b, int c) const {
        return (*data_)[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
    }

    /// Deep copy.
    Tensor clone() const;
    /// Shared-storage view with a different shape (numel must match).
    Tensor reshaped(Shape shape) const;

    void fill(double v);
    void add_inplace(const Tensor& other);
    void scale_inplace(double s);

    double min() const;
    double max() const;
    double sum() const;
    bool all_finite() const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;

private:
    std::shared_ptr<std::vector<double>> data_;
    Shape shape_;
    int64_t numel_ = 0;
};

int64_t shape_numel(const Shape& s);

}  // namespace glamap::nn
