// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dgrain/graph.hpp"
#include "dgrain/grid.hpp"
#include "dgrain/random.hpp"

namespace dgrain {

// Positional-embedding stretching ------------------------------------------

enum class StretchMode {
  /// Source index m(p) = theta + (p - theta) / lambda: the tail is
  /// interpolated over the original tail only.
  OffsetMapped,
  /// Source index m(p) = p / lambda. For p > theta this can land inside the
  /// preserved prefix.
  Proportional,
};

inline const char *to_string(StretchMode m) {
  return m == StretchMode::OffsetMapped ? "offset-mapped" : "proportional";
}
inline StretchMode parse_stretch_mode(const std::string &s) {
  if (s == "offset-mapped")
    return StretchMode::OffsetMapped;
  if (s == "proportional")
    return StretchMode::Proportional;
  throw ParameterError("unknown stretch mode '" + s + "'");
}

/// Position-embedding table: one row per position. `theta` is the last
/// position kept verbatim by stretching and `lambda` the stretch ratio that
/// produced the table (1 for an unstretched table).
struct PETable {
  Tensor entries;
  std::size_t theta = 0;
  std::size_t lambda = 1;

  std::size_t length() const noexcept { return entries.rows(); }
  std::size_t dim() const noexcept { return entries.cols(); }
};

/// Length of a table of `length` positions after stretching.
constexpr std::size_t stretched_length(std::size_t length, std::size_t theta,
                                       std::size_t lambda) {
  return theta + lambda * (length - theta);
}

/// Where output position p > theta reads from, and with what weight.
struct StretchSource {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double omega = 0.0; // weight of `hi`
};

inline StretchSource stretch_source(std::size_t p, std::size_t theta,
                                    std::size_t lambda, StretchMode mode,
                                    std::size_t length) {
  double m =
      mode == StretchMode::OffsetMapped
          ? static_cast<double>(theta) +
                static_cast<double>(p - theta) / static_cast<double>(lambda)
          : static_cast<double>(p) / static_cast<double>(lambda);
  // The last lambda - 1 offset-mapped positions fall past the final entry;
  // they hold it.
  m = std::min(m, static_cast<double>(length - 1));
  const double lo = std::floor(m);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::ceil(m)),
          m - lo};
}

/// Knowledge-preserving stretch: positions 0..theta are copied verbatim and
/// every later position is the convex combination (1-w) PE(lo) + w PE(hi) of
/// two original entries.
inline PETable kps_stretch(const PETable &pe, std::size_t theta,
                           std::size_t lambda,
                           StretchMode mode = StretchMode::OffsetMapped) {
  const std::size_t len = pe.length();
  if (theta >= len)
    throw ParameterError("kps_stretch: theta " + std::to_string(theta) +
                         " >= length " + std::to_string(len));
  if (lambda < 1)
    throw ParameterError("kps_stretch: lambda must be >= 1");
  const std::size_t out_len = stretched_length(len, theta, lambda);
  const std::size_t d = pe.dim();
  PETable out{Tensor(out_len, d), theta, lambda};
  for (std::size_t p = 0; p < out_len; ++p) {
    auto dst = out.entries.row_span(p);
    if (p <= theta) {
      auto src = pe.entries.row_span(p);
      std::copy(src.begin(), src.end(), dst.begin());
      continue;
    }
    const StretchSource s = stretch_source(p, theta, lambda, mode, len);
    auto a = pe.entries.row_span(s.lo);
    auto b = pe.entries.row_span(s.hi);
    for (std::size_t j = 0; j < d; ++j)
      dst[j] = (1.0 - s.omega) * a[j] + s.omega * b[j];
  }
  return out;
}

// Parameters ----------------------------------------------------------------

enum class Pooling { Mean, LastToken };

inline const char *to_string(Pooling p) {
  return p == Pooling::Mean ? "mean" : "last";
}
inline Pooling parse_pooling(const std::string &s) {
  if (s == "mean")
    return Pooling::Mean;
  if (s == "last")
    return Pooling::LastToken;
  throw ParameterError("unknown pooling '" + s + "'");
}

struct TextEncoderParams {
  Tensor token_table; // V x d
  PETable pe;         // L x d
  bool attention = true;
  Tensor wq, wk, wv; // d x d, empty when attention is off
  Tensor proj;       // d x e
  Pooling pool = Pooling::Mean;
};

struct ImageEncoderParams {
  Tensor cell_table; // C x d
  Tensor proj;       // d x e
};

struct ModelParams {
  TextEncoderParams text;
  ImageEncoderParams image;
  Tensor log_tau = Tensor::scalar(std::log(0.07));

  /// Every learnable tensor, in checkpoint declaration order.
  std::vector<std::pair<std::string, Tensor *>> named_tensors() {
    std::vector<std::pair<std::string, Tensor *>> out{
        {"token_table", &text.token_table}, {"pe", &text.pe.entries}};
    if (text.attention) {
      out.emplace_back("attn_q", &text.wq);
      out.emplace_back("attn_k", &text.wk);
      out.emplace_back("attn_v", &text.wv);
    }
    out.emplace_back("text_proj", &text.proj);
    out.emplace_back("cell_table", &image.cell_table);
    out.emplace_back("image_proj", &image.proj);
    out.emplace_back("log_tau", &log_tau);
    return out;
  }
  std::vector<std::pair<std::string, const Tensor *>> named_tensors() const {
    auto mut = const_cast<ModelParams *>(this)->named_tensors();
    return {mut.begin(), mut.end()};
  }

  double tau() const { return std::exp(log_tau.item()); }
  std::size_t embed_dim() const { return text.proj.cols(); }
  std::size_t vocab_size() const { return text.token_table.rows(); }
  std::size_t num_cell_codes() const { return image.cell_table.rows(); }

  void zero_grad() {
    for (auto &[name, t] : named_tensors())
      if (t->requires_grad())
        t->zero_grad();
  }
};

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t num_cell_codes = 0;
  std::size_t model_dim = 32;
  std::size_t embed_dim = 32;
  std::size_t pe_origin_length = 77;
  std::size_t kps_theta = 20;
  std::size_t kps_lambda = 4;
  StretchMode kps_mode = StretchMode::OffsetMapped;
  bool attention = true;
  Pooling pool = Pooling::Mean;
  double tau_init = 0.07;
  double token_init_scale = 0.02;
  double cell_init_scale = 0.02;
  double pe_init_scale = 0.01;
};

/// Random initial parameters. The positional table is drawn at the original
/// length and then stretched, so the trainable table starts out with the
/// stretched structure.
inline ModelParams init_model(const ModelConfig &cfg, std::uint64_t seed) {
  if (cfg.vocab_size == 0 || cfg.num_cell_codes == 0 || cfg.model_dim == 0 ||
      cfg.embed_dim == 0)
    throw ParameterError("init_model: zero-sized dimension");
  if (!(cfg.tau_init > 0.0))
    throw ParameterError("init_model: tau_init must be positive");
  Rng rng(seed);
  auto gaussian = [&](std::size_t r, std::size_t c, double sd) {
    Tensor t(r, c);
    for (double &x : t.data())
      x = sd * rng.normal();
    return t;
  };
  const std::size_t d = cfg.model_dim, e = cfg.embed_dim;
  const double wsd = 1.0 / std::sqrt(static_cast<double>(d));
  ModelParams m;
  m.text.token_table = gaussian(cfg.vocab_size, d, cfg.token_init_scale);
  PETable base{gaussian(cfg.pe_origin_length, d, cfg.pe_init_scale),
               cfg.kps_theta, 1};
  m.text.pe = kps_stretch(base, cfg.kps_theta, cfg.kps_lambda, cfg.kps_mode);
  m.text.attention = cfg.attention;
  if (cfg.attention) {
    m.text.wq = gaussian(d, d, wsd);
    m.text.wk = gaussian(d, d, wsd);
    m.text.wv = gaussian(d, d, wsd);
  }
  m.text.proj = gaussian(d, e, wsd);
  m.text.pool = cfg.pool;
  m.image.cell_table = gaussian(cfg.num_cell_codes, d, cfg.cell_init_scale);
  m.image.proj = gaussian(d, e, wsd);
  m.log_tau = Tensor::scalar(std::log(cfg.tau_init));
  return m;
}

// Encoders ------------------------------------------------------------------

/// Model parameters registered on one graph, either as trainable leaves or
/// as read-only constants.
struct BoundModel {
  const ModelParams *params = nullptr;
  Var token_table, pe, wq, wk, wv, text_proj, cell_table, image_proj, log_tau;
};

inline BoundModel bind_model(Graph &g, ModelParams &m, bool trainable) {
  auto bind = [&](Tensor &t) {
    return trainable ? g.parameter(t) : g.constant_ref(t);
  };
  BoundModel b;
  b.params = &m;
  b.token_table = bind(m.text.token_table);
  b.pe = bind(m.text.pe.entries);
  if (m.text.attention) {
    b.wq = bind(m.text.wq);
    b.wk = bind(m.text.wk);
    b.wv = bind(m.text.wv);
  }
  b.text_proj = bind(m.text.proj);
  b.cell_table = bind(m.image.cell_table);
  b.image_proj = bind(m.image.proj);
  b.log_tau = bind(m.log_tau);
  return b;
}

inline BoundModel bind_model(Graph &g, const ModelParams &m) {
  BoundModel b;
  b.params = &m;
  b.token_table = g.constant_ref(m.text.token_table);
  b.pe = g.constant_ref(m.text.pe.entries);
  if (m.text.attention) {
    b.wq = g.constant_ref(m.text.wq);
    b.wk = g.constant_ref(m.text.wk);
    b.wv = g.constant_ref(m.text.wv);
  }
  b.text_proj = g.constant_ref(m.text.proj);
  b.cell_table = g.constant_ref(m.image.cell_table);
  b.image_proj = g.constant_ref(m.image.proj);
  b.log_tau = g.constant_ref(m.log_tau);
  return b;
}

/// Unit-norm text embedding (1 x e):
/// normalize(proj(pool(contextualize(tokens + positions)))).
inline Var encode_text(const BoundModel &b, std::span<const TokenId> tokens) {
  const TextEncoderParams &p = b.params->text;
  if (tokens.empty())
    throw InputError("encode_text: empty token sequence");
  if (tokens.size() > p.pe.length())
    throw LengthExceededError("encode_text: " + std::to_string(tokens.size()) +
                              " tokens > positional table length " +
                              std::to_string(p.pe.length()));
  std::vector<std::size_t> ids(tokens.begin(), tokens.end());
  for (auto id : ids)
    if (id >= p.token_table.rows())
      throw InputError("encode_text: token id " + std::to_string(id) +
                       " outside vocabulary of " +
                       std::to_string(p.token_table.rows()));
  const std::size_t n = ids.size();
  Var x = add(gather_rows(b.token_table, ids), slice_rows(b.pe, 0, n));
  if (p.attention) {
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(x.cols()));
    Var q = matmul(x, b.wq);
    Var k = matmul(x, b.wk);
    Var v = matmul(x, b.wv);
    Var attn = row_softmax(scale(matmul(q, transpose(k)), inv_sqrt_d));
    x = add(x, matmul(attn, v));
  }
  Var pooled = p.pool == Pooling::Mean ? mean_rows(x) : slice_rows(x, n - 1, 1);
  return l2_normalize(matmul(pooled, b.text_proj));
}

/// Unit-norm image embedding (1 x e): normalize(proj(mean of cell rows)).
/// The mean is taken as a code histogram times the cell table.
inline Var encode_image(const BoundModel &b, const Grid &grid) {
  if (grid.height == 0 || grid.width == 0 || grid.codes.empty())
    throw InputError("encode_image: empty grid");
  if (grid.codes.size() != grid.height * grid.width)
    throw InputError("encode_image: grid size mismatch");
  const std::size_t C = b.cell_table.rows();
  Tensor hist(1, C);
  const double w = 1.0 / static_cast<double>(grid.codes.size());
  for (CellCode c : grid.codes) {
    if (c >= C)
      throw InputError("encode_image: cell code " + std::to_string(c) +
                       " >= " + std::to_string(C));
    hist(0, c) += w;
  }
  Graph &g = *b.cell_table.graph;
  Var mean = matmul(g.constant(std::move(hist)), b.cell_table);
  return l2_normalize(matmul(mean, b.image_proj));
}

inline Tensor encode_text(const ModelParams &m, std::span<const TokenId> tokens) {
  Graph g;
  return encode_text(bind_model(g, m), tokens).value();
}

inline Tensor encode_image(const ModelParams &m, const Grid &grid) {
  Graph g;
  return encode_image(bind_model(g, m), grid).value();
}

} // namespace dgrain
