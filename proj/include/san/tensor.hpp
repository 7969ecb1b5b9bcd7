#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "san/errors.hpp"

namespace san {

// Dense row-major 64-bit float array. Values are immutable by convention
// once a tensor has entered a differentiation tape; gradients live in the
// tape nodes, not here.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> values)
        : shape_(std::move(shape)), data_(std::move(values)) {
        if (count(shape_) != data_.size()) {
            throw dimension_error("tensor shape " + shape_string(shape_) +
                                  " does not match value count " + std::to_string(data_.size()));
        }
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor vector(std::vector<double> v) {
        std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        return Tensor({rows, cols}, std::move(v));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    std::size_t rows() const { return shape_.at(0); }
    std::size_t cols() const { return shape_.at(1); }

    bool is_scalar() const { return data_.size() == 1; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

  private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace san
