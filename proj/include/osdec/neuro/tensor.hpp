#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "osdec/errors.hpp"

namespace osdec::neuro {

// Shape-tagged row-major array of doubles.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::vector<size_t> s, std::vector<double> v)
      : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != count())
      throw ShapeError("tensor value count does not match shape");
  }

  static Tensor zeros(std::vector<size_t> shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return Tensor{std::move(shape), std::vector<double>(n, 0.0)};
  }
  static Tensor scalar(double v) { return Tensor{{1, 1}, {v}}; }
  static Tensor row(std::vector<double> v) {
    const size_t n = v.size();
    return Tensor{{1, n}, std::move(v)};
  }
  static Tensor matrix(size_t rows, size_t cols, std::vector<double> v) {
    return Tensor{{rows, cols}, std::move(v)};
  }
  static Tensor matrix(const std::vector<std::vector<double>>& rows) {
    const size_t r = rows.size();
    const size_t c = r == 0 ? 0 : rows[0].size();
    std::vector<double> flat;
    flat.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c)
        throw ShapeError("tensor rows must have equal length");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return Tensor{{r, c}, std::move(flat)};
  }

  size_t count() const {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
  }
  size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(size_t r, size_t c) { return values[r * cols() + c]; }
  double at(size_t r, size_t c) const { return values[r * cols() + c]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i)
      s += (i ? "x" : "") + std::to_string(shape[i]);
    return s + "]";
  }
};

}  // namespace osdec::neuro
