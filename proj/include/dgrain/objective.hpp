// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "dgrain/graph.hpp"
#include "dgrain/random.hpp"

namespace dgrain {

/// v.t / (|v| |t|).
inline double cosine_similarity(std::span<const double> v,
                                std::span<const double> t,
                                double eps = kDefaultNormEps) {
  if (v.size() != t.size())
    throw DimensionError("cosine_similarity: dims " + std::to_string(v.size()) +
                         " vs " + std::to_string(t.size()));
  const double nv = l2_norm(v), nt = l2_norm(t);
  if (!(nv > eps) || !(nt > eps))
    throw DegenerateVectorError("cosine_similarity: zero-norm input");
  return dot(v, t) / (nv * nt);
}

// InfoNCE -------------------------------------------------------------------

namespace detail {
inline void check_contrastive_inputs(const Tensor &V, const Tensor &T) {
  if (V.rows() == 0 || V.rows() != T.rows())
    throw ParameterError("info_nce: batch sizes " + std::to_string(V.rows()) +
                         " vs " + std::to_string(T.rows()));
  if (V.cols() != T.cols())
    throw DimensionError("info_nce: embedding widths differ");
  for (const Tensor *M : {&V, &T})
    for (std::size_t i = 0; i < M->rows(); ++i)
      if (std::abs(l2_norm(M->row_span(i)) - 1.0) > 1e-6)
        throw ParameterError("info_nce: rows must be unit-norm");
}
} // namespace detail

/// Symmetric InfoNCE over an N x N similarity matrix S (S_ij = sim(v_i, t_j)):
/// -(1/2N) sum_i [log softmax_j(S_ij / tau)_i + log softmax_j(S_ji / tau)_i].
inline double info_nce_from_similarities(const Tensor &S, double tau) {
  if (!(tau > 0.0))
    throw ParameterError("info_nce: tau must be positive");
  if (S.rows() == 0 || S.rows() != S.cols())
    throw ParameterError("info_nce: similarity matrix must be square");
  Tensor logits = S;
  for (double &x : logits.data())
    x /= tau;
  const Tensor rows = row_log_softmax(logits);
  const Tensor cols = row_log_softmax(transpose(logits));
  double acc = 0.0;
  for (std::size_t i = 0; i < S.rows(); ++i)
    acc += rows(i, i) + cols(i, i);
  return -acc / (2.0 * static_cast<double>(S.rows()));
}

/// InfoNCE for unit-norm image rows V and text rows T (row i of each is a
/// matched pair).
inline double info_nce(const Tensor &V, const Tensor &T, double tau) {
  detail::check_contrastive_inputs(V, T);
  return info_nce_from_similarities(matmul(V, transpose(T)), tau);
}

/// Differentiable InfoNCE; the temperature enters as log(tau) so that it
/// can be a trainable scalar.
inline Var info_nce(Var V, Var T, Var log_tau) {
  detail::check_contrastive_inputs(V.value(), T.value());
  if (!log_tau.value().is_scalar())
    throw ParameterError("info_nce: log_tau must be 1x1");
  if (!std::isfinite(log_tau.value().item()))
    throw ParameterError("info_nce: tau must be positive and finite");
  const double n = static_cast<double>(V.rows());
  Var logits = mul_scalar(matmul(V, transpose(T)), exp(scale(log_tau, -1.0)));
  Var by_row = diag_sum(row_log_softmax(logits));
  Var by_col = diag_sum(row_log_softmax(transpose(logits)));
  return scale(add(by_row, by_col), -1.0 / (2.0 * n));
}

// Dual-granularity loss -----------------------------------------------------

struct BatchLoss {
  double loss_long = 0.0;
  double loss_short = 0.0;
  double alpha = 0.0;
  double total = 0.0;
};

inline void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ParameterError("alpha " + std::to_string(alpha) + " outside [0,1]");
}

/// total = alpha * loss_long + (1 - alpha) * loss_short.
inline BatchLoss dual_loss(double loss_long, double loss_short, double alpha) {
  check_alpha(alpha);
  if (!std::isfinite(loss_long) || !std::isfinite(loss_short))
    throw NonFiniteError("dual_loss: non-finite loss");
  return {loss_long, loss_short, alpha,
          alpha * loss_long + (1.0 - alpha) * loss_short};
}

/// Graph form of dual_loss; produces the same bits as the scalar form. A zero
/// weight detaches its branch from backpropagation.
inline Var dual_loss(Var loss_long, Var loss_short, double alpha) {
  check_alpha(alpha);
  return add(scale(loss_long, alpha), scale(loss_short, 1.0 - alpha));
}

// Alpha schedule ------------------------------------------------------------

enum class CurriculumOrder { LongToShort, ShortToLong };

inline const char *to_string(CurriculumOrder o) {
  return o == CurriculumOrder::LongToShort ? "long-to-short" : "short-to-long";
}
inline CurriculumOrder parse_order(const std::string &s) {
  if (s == "long-to-short")
    return CurriculumOrder::LongToShort;
  if (s == "short-to-long")
    return CurriculumOrder::ShortToLong;
  throw ParameterError("unknown curriculum order '" + s + "'");
}

/// Three-phase weight on the long-text loss: held at alpha_start on [0, t1),
/// cosine-annealed to alpha_min on [t1, t2], then alpha_min plus a uniform
/// perturbation whose amplitude decays linearly to zero at T.
struct ScheduleConfig {
  double alpha_start = 1.0;
  double alpha_min = 0.2;
  double t1 = 0;
  double t2 = 0;
  double total = 0; // T
  double delta = 0.05;
  CurriculumOrder order = CurriculumOrder::LongToShort;
  std::uint64_t seed = 0;

  /// Phase boundaries at 30% / 70% of `steps`.
  static ScheduleConfig for_steps(std::size_t steps, std::uint64_t seed = 0) {
    ScheduleConfig c;
    c.total = static_cast<double>(steps);
    c.t1 = std::floor(0.3 * c.total);
    c.t2 = std::floor(0.7 * c.total);
    c.seed = seed;
    return c;
  }

  void validate() const {
    if (!(0.0 <= alpha_min && alpha_min <= alpha_start && alpha_start <= 1.0))
      throw ParameterError("schedule: need 0 <= alpha_min <= alpha_start <= 1");
    if (!(delta >= 0.0 && delta <= alpha_min && alpha_min + delta <= 1.0))
      throw ParameterError("schedule: need 0 <= delta <= alpha_min and "
                           "alpha_min + delta <= 1");
    if (!(0.0 <= t1 && t1 < t2 && t2 < total))
      throw ParameterError("schedule: need 0 <= t1 < t2 < T");
  }
};

/// Perturbation draw in [-1, 1), a pure function of (seed, t).
inline double schedule_noise(std::uint64_t seed, double t) {
  return 2.0 * unit_double(mix64(seed, std::bit_cast<std::uint64_t>(t))) - 1.0;
}

/// Weight of the long-text loss at step t. With order short-to-long the two
/// losses trade roles under the same trajectory, i.e. the result is
/// 1 - alpha_long_to_short(t).
inline double alpha_schedule(double t, const ScheduleConfig &c) {
  c.validate();
  if (!(t >= 0.0 && t <= c.total))
    throw ParameterError("alpha_schedule: t=" + std::to_string(t) +
                         " outside [0, T]");
  double a;
  if (t < c.t1) {
    a = c.alpha_start;
  } else if (t <= c.t2) {
    const double phase = (t - c.t1) / (c.t2 - c.t1);
    a = c.alpha_min + 0.5 * (c.alpha_start - c.alpha_min) *
                          (1.0 + std::cos(std::numbers::pi * phase));
  } else {
    const double progress = (t - c.t2) / (c.total - c.t2);
    const double amplitude = c.delta * (1.0 - progress);
    a = c.alpha_min + amplitude * schedule_noise(c.seed, t);
  }
  return c.order == CurriculumOrder::LongToShort ? a : 1.0 - a;
}

} // namespace dgrain
