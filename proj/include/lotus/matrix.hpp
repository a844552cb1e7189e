#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lotus {

// Dense row-major matrix of doubles. Vectors are 1 x n matrices.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

} // namespace lotus
