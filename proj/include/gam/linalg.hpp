#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gam/errors.hpp"

namespace gam {

using Vec = std::vector<double>;

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  Vec& data() { return data_; }
  const Vec& data() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

inline void matvec_into(const Matrix& m, const Vec& x, Vec& out) {
  if (m.cols() != x.size()) {
    throw DimensionError("matvec: matrix has " + std::to_string(m.cols()) +
                         " columns, vector has " + std::to_string(x.size()));
  }
  out.assign(m.rows(), 0.0);
  const double* p = m.data().data();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) acc += p[i * m.cols() + j] * x[j];
    out[i] = acc;
  }
}

inline Vec matvec(const Matrix& m, const Vec& x) {
  Vec out;
  matvec_into(m, x, out);
  return out;
}

// out = m^T * y
inline void matvec_transpose_into(const Matrix& m, const Vec& y, Vec& out) {
  if (m.rows() != y.size()) {
    throw DimensionError("matvec_transpose: matrix has " + std::to_string(m.rows()) +
                         " rows, vector has " + std::to_string(y.size()));
  }
  out.assign(m.cols(), 0.0);
  const double* p = m.data().data();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double yi = y[i];
    if (yi == 0.0) continue;
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += p[i * m.cols() + j] * yi;
  }
}

// acc += a * b^T
inline void add_outer(Matrix& acc, const Vec& a, const Vec& b) {
  if (acc.rows() != a.size() || acc.cols() != b.size()) {
    throw DimensionError("add_outer: shape mismatch");
  }
  double* p = acc.data().data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ai = a[i];
    for (std::size_t j = 0; j < b.size(); ++j) p[i * b.size() + j] += ai * b[j];
  }
}

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// y += alpha * x
inline void axpy(double alpha, const Vec& x, Vec& y) {
  if (x.size() != y.size()) throw DimensionError("axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Shifted softmax; stable for any finite input.
inline Vec softmax(const Vec& x) {
  if (x.empty()) throw DimensionError("softmax: empty input");
  const double mx = *std::max_element(x.begin(), x.end());
  Vec out(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace gam
