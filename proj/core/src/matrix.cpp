#include "fedse/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "fedse/errors.hpp"

namespace fedse::nn {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ContractViolation("Matrix::from_rows: ragged rows");
    std::copy(row.begin(), row.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
    ++i;
  }
  return m;
}

Matrix Matrix::identity_embedding(std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < std::min(rows, cols); ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void multiply_add(const Matrix& m, std::span<const double> x, std::span<double> y) {
  if (x.size() != m.cols() || y.size() != m.rows())
    throw ContractViolation("multiply_add: dimension mismatch");
  const std::size_t cols = m.cols();
  const double* w = m.data().data();
  for (std::size_t j = 0; j < cols; ++j) {
    const double xj = x[j];
    if (xj == 0.0) continue;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += w[i * cols + j] * xj;
  }
}

void multiply_transposed_add(const Matrix& m, std::span<const double> g, std::span<double> y) {
  if (g.size() != m.rows() || y.size() != m.cols())
    throw ContractViolation("multiply_transposed_add: dimension mismatch");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double gi = g[i];
    if (gi == 0.0) continue;
    const auto row = m.row(i);
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += row[j] * gi;
  }
}

void add_outer(Matrix& m, double scale, std::span<const double> u, std::span<const double> v) {
  if (u.size() != m.rows() || v.size() != m.cols())
    throw ContractViolation("add_outer: dimension mismatch");
  const std::size_t cols = m.cols();
  double* w = m.data().data();
  for (std::size_t j = 0; j < cols; ++j) {
    const double vj = v[j];
    if (vj == 0.0) continue;
    for (std::size_t i = 0; i < u.size(); ++i) w[i * cols + j] += scale * u[i] * vj;
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ContractViolation("matmul: dimension mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

}  // namespace fedse::nn
