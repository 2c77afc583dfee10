#include "macft/tensor.hpp"

#include <cmath>
#include <sstream>

#include "macft/common.hpp"

namespace macft {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        check(d > 0, "tensor dims must be positive, got ", d);
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data) {
    Tensor t;
    const std::size_t n = shape_numel(shape);
    check(n == data.size(), "tensor data length ", data.size(), " does not match shape product ", n);
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

void Tensor::set_requires_grad(bool on) {
    requires_grad_ = on;
    if (on) {
        grad_.assign(data_.size(), 0.0);
    } else {
        grad_.clear();
        grad_.shrink_to_fit();
    }
}

void Tensor::zero_grad() {
    if (requires_grad_) grad_.assign(data_.size(), 0.0);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << "x";
        os << shape_[i];
    }
    os << "]";
    return os.str();
}

void Tensor::ensure_finite(const char* what) const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(strcat_msg("non-finite value in ", what, " ", shape_str()));
        }
    }
}

}  // namespace macft
