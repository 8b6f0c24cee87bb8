#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace fedse::nn {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity_embedding(std::size_t rows, std::size_t cols);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;
  void fill(double v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// y += m * x. Zero entries of x are skipped (features are mostly one-hot).
void multiply_add(const Matrix& m, std::span<const double> x, std::span<double> y);

/// y += mᵀ * g.
void multiply_transposed_add(const Matrix& m, std::span<const double> g, std::span<double> y);

/// m += scale * u vᵀ. Zero entries of v are skipped.
void add_outer(Matrix& m, double scale, std::span<const double> u, std::span<const double> v);

Matrix matmul(const Matrix& a, const Matrix& b);

}  // namespace fedse::nn
