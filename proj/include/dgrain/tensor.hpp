// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "dgrain/error.hpp"

namespace dgrain {

/// Dense row-major rank-2 array of doubles. A row vector is 1 x n and a
/// scalar is 1 x 1. `grad` is empty unless the tensor is a trainable
/// parameter, in which case it mirrors the shape of `data`.
class Tensor {
public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw DimensionError("tensor data length " +
                           std::to_string(data_.size()) + " != " +
                           std::to_string(rows_) + "x" + std::to_string(cols_));
  }
  Tensor(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto &r : rows) {
      if (r.size() != cols_)
        throw DimensionError("ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor row(std::span<const double> v) {
    return Tensor(1, v.size(), std::vector<double>(v.begin(), v.end()));
  }
  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i)
      t(i, i) = 1.0;
    return t;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool is_scalar() const noexcept { return rows_ == 1 && cols_ == 1; }

  double &operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  double item() const {
    if (!is_scalar())
      throw ContractError("item() on non-scalar tensor");
    return data_[0];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double> &storage() noexcept { return data_; }
  const std::vector<double> &storage() const noexcept { return data_; }

  std::span<const double> row_span(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row_span(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on) {
    requires_grad_ = on;
    if (on)
      grad_.assign(data_.size(), 0.0);
    else
      grad_.clear();
  }
  std::span<double> grad() noexcept { return grad_; }
  std::span<const double> grad() const noexcept { return grad_; }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

  bool same_shape(const Tensor &o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  friend bool operator==(const Tensor &a, const Tensor &b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
  bool requires_grad_ = false;
  std::vector<double> grad_;
};

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline void require_finite(const Tensor &t, const char *where) {
  if (!all_finite(t.data()))
    throw NonFiniteError(std::string(where) + ": non-finite value");
}

// Plain kernels. The differentiable ops in graph.hpp use these for their
// forward pass.

inline Tensor matmul(const Tensor &a, const Tensor &b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul " + a.shape_str() + " x " + b.shape_str());
  Tensor out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double *o = out.data().data() + i * n;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0)
        continue;
      const double *brow = b.data().data() + k * n;
      for (std::size_t j = 0; j < n; ++j)
        o[j] += aik * brow[j];
    }
  }
  return out;
}

inline Tensor transpose(const Tensor &a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      out(j, i) = a(i, j);
  return out;
}

/// Row-wise softmax, stabilised by subtracting each row's maximum.
inline Tensor row_softmax(const Tensor &a) {
  require_finite(a, "row_softmax");
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row_span(i);
    auto o = out.row_span(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (double &x : o)
      x /= sum;
  }
  return out;
}

inline Tensor row_log_softmax(const Tensor &a) {
  require_finite(a, "row_log_softmax");
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row_span(i);
    auto o = out.row_span(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (double x : in)
      sum += std::exp(x - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < in.size(); ++j)
      o[j] = in[j] - lse;
  }
  return out;
}

inline constexpr double kDefaultNormEps = 1e-12;

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v)
    s += x * x;
  return std::sqrt(s);
}

/// Scales every row to unit Euclidean norm. A row with norm <= eps is a
/// DegenerateVectorError; there is no silent clamping.
inline Tensor l2_normalize(const Tensor &v, double eps = kDefaultNormEps) {
  if (v.cols() == 0)
    throw DimensionError("l2_normalize on empty row");
  Tensor out = v;
  for (std::size_t i = 0; i < v.rows(); ++i) {
    const double n = l2_norm(v.row_span(i));
    if (!(n > eps))
      throw DegenerateVectorError("row norm " + std::to_string(n) +
                                  " <= eps");
    for (double &x : out.row_span(i))
      x /= n;
  }
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DimensionError("dot of unequal lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += a[i] * b[i];
  return s;
}

} // namespace dgrain
