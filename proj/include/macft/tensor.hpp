#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace macft {

// Dense fp64 tensor, row-major. Carries a same-shape gradient buffer when
// requires_grad is on; activations normally leave it off and parameters turn
// it on while they are being trained.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);
    static Tensor from(std::vector<int> shape, std::vector<double> data);

    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    // 2-d accessors (rows x cols).
    int rows() const { return shape_[0]; }
    int cols() const { return shape_[1]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
    double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

    bool requires_grad() const { return requires_grad_; }
    bool has_grad() const { return !grad_.empty(); }
    void set_requires_grad(bool on);
    double* grad() { return grad_.data(); }
    const double* grad() const { return grad_.data(); }
    std::vector<double>& grad_values() { return grad_; }
    void zero_grad();

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

    // Throws if any element is NaN/Inf; `what` names the offending value.
    void ensure_finite(const char* what) const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
    std::vector<double> grad_;
    bool requires_grad_ = false;
};

std::size_t shape_numel(const std::vector<int>& shape);

}  // namespace macft
