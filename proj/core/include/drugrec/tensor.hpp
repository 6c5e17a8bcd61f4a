#ifndef DRUGREC_TENSOR_HPP
#define DRUGREC_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "drugrec/error.hpp"

namespace drugrec {

/// Multi-hot indicator over a code vocabulary.
using BitVec = std::vector<std::uint8_t>;

/// Dense row-major byte matrix; used for binary masks and DDI matrices.
struct ByteMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> data;

    ByteMatrix() = default;
    ByteMatrix(std::size_t r, std::size_t c, std::uint8_t fill = 0)
        : rows(r), cols(c), data(r * c, fill) {}

    std::uint8_t& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    std::uint8_t at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::size_t nnz() const {
        std::size_t n = 0;
        for (auto v : data) n += (v != 0);
        return n;
    }

    bool operator==(const ByteMatrix& o) const {
        return rows == o.rows && cols == o.cols && data == o.data;
    }
};

/// Dense row-major tensor of doubles, rank 1 or 2. Rank 1 with a single
/// element doubles as a scalar.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }

    std::size_t rows() const;
    std::size_t cols() const;

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool finite() const;
    std::string shape_str() const;

    bool operator==(const Tensor& o) const {
        return shape_ == o.shape_ && data_ == o.data_;
    }

private:
    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {}

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

/// Throws ShapeError naming both operands when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

} // namespace drugrec

#endif
