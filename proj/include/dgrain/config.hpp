// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration file: one `key = value` per line, '#' starts a comment,
// blank lines are ignored, unknown keys are errors. Keys:
//
//   lr, momentum, dampening          SGD hyperparameters (5e-4, 0.9, 0.1)
//   batch_size, epochs               16, 3
//   granularity                      short | long | dual
//   order                            long-to-short | short-to-long
//   alpha_start, alpha_min, delta    1.0, 0.2, 0.05
//   t1_fraction, t2_fraction         decay phase bounds as fractions of T (0.3, 0.7)
//   seeds                            comma-separated list (first one drives `train`)
//   model_dim, embed_dim             32, 32
//   attention                        true | false
//   pooling                          mean | last
//   pe_origin_length                 77
//   kps_theta, kps_lambda, kps_mode  20, 4, offset-mapped | proportional
//   tau_init                         0.07
//   token_init_scale, cell_init_scale, pe_init_scale
//   eval_each_epoch                  true | false
#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "dgrain/model.hpp"
#include "dgrain/objective.hpp"
#include "dgrain/optim.hpp"

namespace dgrain {

enum class Granularity { Short, Long, Dual };

inline const char *to_string(Granularity g) {
  switch (g) {
  case Granularity::Short: return "short";
  case Granularity::Long: return "long";
  case Granularity::Dual: return "dual";
  }
  return "";
}
inline Granularity parse_granularity(const std::string &s) {
  if (s == "short") return Granularity::Short;
  if (s == "long") return Granularity::Long;
  if (s == "dual") return Granularity::Dual;
  throw ConfigError("unknown granularity '" + s + "'");
}

struct TrainConfig {
  SgdConfig sgd;
  std::size_t batch_size = 16;
  std::size_t epochs = 3;
  Granularity granularity = Granularity::Dual;
  /// Schedule shape; t1/t2/total are filled in from the fractions once the
  /// number of steps is known.
  ScheduleConfig schedule;
  double t1_fraction = 0.3;
  double t2_fraction = 0.7;
  std::vector<std::uint64_t> seeds{1};
  ModelConfig model;
  bool eval_each_epoch = false;

  void validate() const {
    if (!(sgd.lr > 0.0) || batch_size == 0 || epochs == 0)
      throw ConfigError("lr, batch_size and epochs must be positive");
    if (batch_size < 2)
      throw ConfigError("batch_size must be >= 2 for in-batch negatives");
    if (!(0.0 <= t1_fraction && t1_fraction < t2_fraction && t2_fraction < 1.0))
      throw ConfigError("need 0 <= t1_fraction < t2_fraction < 1");
    if (seeds.empty())
      throw ConfigError("seeds must not be empty");
    if (model.kps_theta >= model.pe_origin_length || model.kps_lambda < 1)
      throw ConfigError("need kps_theta < pe_origin_length and kps_lambda >= 1");
  }

  /// Schedule for a run of `steps` optimizer steps.
  ScheduleConfig schedule_for(std::size_t steps, std::uint64_t seed) const {
    ScheduleConfig s = schedule;
    s.total = static_cast<double>(steps);
    s.t1 = std::floor(t1_fraction * s.total);
    s.t2 = std::floor(t2_fraction * s.total);
    s.seed = seed;
    return s;
  }
};

namespace detail {
inline std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
inline double to_double(const std::string &v, std::size_t line) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size())
      throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error &) {
    throw ParseError(line, "expected a number, got '" + v + "'");
  }
}
inline std::uint64_t to_uint(const std::string &v, std::size_t line) {
  std::uint64_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw ParseError(line, "expected a non-negative integer, got '" + v + "'");
  return x;
}
inline bool to_bool(const std::string &v, std::size_t line) {
  if (v == "true" || v == "1")
    return true;
  if (v == "false" || v == "0")
    return false;
  throw ParseError(line, "expected true/false, got '" + v + "'");
}
} // namespace detail

inline void apply_config_entry(TrainConfig &c, const std::string &key, const std::string &v,
                               std::size_t line) {
  using namespace detail;
  auto &m = c.model;
  try {
    if (key == "lr") c.sgd.lr = to_double(v, line);
    else if (key == "momentum") c.sgd.momentum = to_double(v, line);
    else if (key == "dampening") c.sgd.dampening = to_double(v, line);
    else if (key == "batch_size") c.batch_size = to_uint(v, line);
    else if (key == "epochs") c.epochs = to_uint(v, line);
    else if (key == "granularity") c.granularity = parse_granularity(v);
    else if (key == "order") c.schedule.order = parse_order(v);
    else if (key == "alpha_start") c.schedule.alpha_start = to_double(v, line);
    else if (key == "alpha_min") c.schedule.alpha_min = to_double(v, line);
    else if (key == "delta") c.schedule.delta = to_double(v, line);
    else if (key == "t1_fraction") c.t1_fraction = to_double(v, line);
    else if (key == "t2_fraction") c.t2_fraction = to_double(v, line);
    else if (key == "seeds") {
      c.seeds.clear();
      std::istringstream in(v);
      std::string piece;
      while (std::getline(in, piece, ','))
        c.seeds.push_back(to_uint(trim(piece), line));
    } else if (key == "model_dim") m.model_dim = to_uint(v, line);
    else if (key == "embed_dim") m.embed_dim = to_uint(v, line);
    else if (key == "attention") m.attention = to_bool(v, line);
    else if (key == "pooling") m.pool = parse_pooling(v);
    else if (key == "pe_origin_length") m.pe_origin_length = to_uint(v, line);
    else if (key == "kps_theta") m.kps_theta = to_uint(v, line);
    else if (key == "kps_lambda") m.kps_lambda = to_uint(v, line);
    else if (key == "kps_mode") m.kps_mode = parse_stretch_mode(v);
    else if (key == "tau_init") m.tau_init = to_double(v, line);
    else if (key == "token_init_scale") m.token_init_scale = to_double(v, line);
    else if (key == "cell_init_scale") m.cell_init_scale = to_double(v, line);
    else if (key == "pe_init_scale") m.pe_init_scale = to_double(v, line);
    else if (key == "eval_each_epoch") c.eval_each_epoch = to_bool(v, line);
    else throw ConfigError("line " + std::to_string(line) + ": unknown key '" + key + "'");
  } catch (const ParameterError &e) {
    throw ConfigError("line " + std::to_string(line) + ": " + e.what());
  }
}

inline TrainConfig parse_config(std::istream &in, TrainConfig base = {}) {
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos)
      raw.erase(hash);
    const std::string s = detail::trim(raw);
    if (s.empty())
      continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ParseError(line, "expected 'key = value'");
    apply_config_entry(base, detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)), line);
  }
  base.validate();
  return base;
}

inline TrainConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open config '" + path + "'");
  return parse_config(in);
}

} // namespace dgrain
