#include "drugrec/tensor.hpp"

#include <cmath>
#include <numeric>

namespace drugrec {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

} // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::vector<double> data(product(shape), 0.0);
    return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    std::vector<double> data(product(shape), value);
    return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::scalar(double value) {
    return Tensor({1}, {value});
}

Tensor Tensor::vector(std::vector<double> values) {
    std::vector<std::size_t> shape{values.size()};
    return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    if (values.size() != rows * cols) {
        throw ShapeError("matrix: " + std::to_string(values.size()) + " values for " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
    return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows() on tensor of shape " + shape_str());
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols() on tensor of shape " + shape_str());
    return shape_[1];
}

bool Tensor::finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
    }
}

} // namespace drugrec
