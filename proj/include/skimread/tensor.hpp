#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "skimread/errors.hpp"

namespace skimread {

/// Dense row-major tensor of doubles. Everything in the toolkit (weights,
/// activations, gradients, moment buffers) lives in one of these.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> dims)
      : shape(std::move(dims)), data(count(shape), 0.0) {}

  Tensor(std::vector<std::size_t> dims, std::vector<double> values)
      : shape(std::move(dims)), data(std::move(values)) {
    if (count(shape) != data.size())
      throw DimensionError("tensor data length does not match shape");
  }

  static Tensor vector(std::initializer_list<double> values) {
    std::vector<double> v(values);
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape); }

  std::size_t size() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  /// Rows/cols of a 2-D tensor.
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  double* row_ptr(std::size_t r) { return data.data() + r * cols(); }
  const double* row_ptr(std::size_t r) const { return data.data() + r * cols(); }

  void fill(double value) {
    for (double& x : data) x = value;
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool all_finite() const {
    for (double x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }

  static std::size_t count(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }
};

inline void require_shape(const Tensor& t, std::size_t ndim, const std::string& what) {
  if (t.ndim() != ndim)
    throw DimensionError(what + ": expected " + std::to_string(ndim) +
                         "-d tensor, got " + std::to_string(t.ndim()) + "-d");
}

}  // namespace skimread
