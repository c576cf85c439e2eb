#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "neuronet/errors.hpp"

namespace neuronet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s);

// Dense row-major array of doubles. Deliberately minimal: layout is always
// contiguous and the last dimension is the fastest-varying one.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(shape_numel(shape), fill) {}
  Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_numel(shape)) throw ShapeError("tensor data/shape mismatch");
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  // Negative indices count from the back.
  std::size_t dim(int i) const {
    const int r = static_cast<int>(shape.size());
    return shape.at(static_cast<std::size_t>(i < 0 ? r + i : i));
  }
  // Product of all but the last dimension.
  std::size_t rows() const { return shape.empty() ? 1 : size() / shape.back(); }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool all_finite() const;
};

}  // namespace neuronet
