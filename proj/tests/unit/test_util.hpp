// SPDX-License-Identifier: Apache-2.0
// Shared helpers for unit tests: random tensors and straight-loop scalar
// oracles that do not go through the tape.
#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "padmae/autodiff/tensor.hpp"
#include "padmae/core/rng.hpp"

namespace padmae::testing {

inline ad::Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                                double hi = 1.0) {
  ad::Tensor t({rows, cols});
  for (double& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const ad::Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

inline ad::Tensor from_matrix(const Matrix& m) {
  ad::Tensor t({m.size(), m[0].size()});
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[0].size(); ++c) t.at(r, c) = m[r][c];
  return t;
}

inline Matrix ref_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k) s += a[i][k] * b[k][j];
      c[i][j] = s;
    }
  return c;
}

inline Matrix ref_add_row(Matrix a, const std::vector<double>& b) {
  for (auto& row : a)
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
  return a;
}

inline Matrix ref_layer_norm(const Matrix& x, const std::vector<double>& g,
                             const std::vector<double>& b, double eps = 1e-6) {
  Matrix y = x;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double n = static_cast<double>(x[r].size());
    double mean = 0.0;
    for (double v : x[r]) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x[r]) var += (v - mean) * (v - mean);
    var /= n;
    for (std::size_t c = 0; c < x[r].size(); ++c)
      y[r][c] = (x[r][c] - mean) / std::sqrt(var + eps) * g[c] + b[c];
  }
  return y;
}

inline double ref_gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
inline double ref_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <typename F>
Matrix ref_map(Matrix m, F f) {
  for (auto& row : m)
    for (double& v : row) v = f(v);
  return m;
}

inline Matrix ref_softmax_rows(Matrix m) {
  for (auto& row : m) {
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double s = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      s += v;
    }
    for (double& v : row) v /= s;
  }
  return m;
}

inline Matrix ref_transpose(const Matrix& m) {
  Matrix t(m[0].size(), std::vector<double>(m.size()));
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[0].size(); ++c) t[c][r] = m[r][c];
  return t;
}

inline std::vector<double> row_of(const ad::Tensor& t) {
  return std::vector<double>(t.storage().begin(), t.storage().end());
}

inline double max_rel(const Matrix& a, const ad::Tensor& b, double floor = 1e-300) {
  return ad::max_relative_difference(from_matrix(a), b, floor);
}

}  // namespace padmae::testing
