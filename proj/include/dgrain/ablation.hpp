// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Ablation table CSV: header
//   variant,LT2I_R1,I2LT_R1,ST2I_R1,I2ST_R1,MeanAcc,R_mi
// then one row per variant; each metric cell is "<mean>+-<spread>" where
// spread is the sample standard deviation across seeds. Cells of a variant
// whose runs all failed read "failed".
#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "dgrain/train.hpp"

namespace dgrain {

struct Variant {
  std::string name;
  Granularity granularity = Granularity::Dual;
  CurriculumOrder order = CurriculumOrder::LongToShort;
};

/// Variant names: short, long, dual (long-to-short curriculum) and
/// dual-s2l (short-to-long curriculum).
inline Variant parse_variant(const std::string &name) {
  if (name == "short") return {name, Granularity::Short, CurriculumOrder::LongToShort};
  if (name == "long") return {name, Granularity::Long, CurriculumOrder::LongToShort};
  if (name == "dual" || name == "dual-l2s") return {name, Granularity::Dual, CurriculumOrder::LongToShort};
  if (name == "dual-s2l") return {name, Granularity::Dual, CurriculumOrder::ShortToLong};
  throw ParameterError("unknown variant '" + name + "'");
}

inline std::vector<Variant> parse_variants(const std::string &csv) {
  std::vector<Variant> out;
  std::istringstream in(csv);
  std::string piece;
  while (std::getline(in, piece, ','))
    if (!piece.empty())
      out.push_back(parse_variant(piece));
  return out;
}

struct AblationCell {
  bool ok = false;
  std::string error;
  EvalSnapshot eval;
};

inline constexpr std::array<const char *, 6> kAblationColumns = {
    "LT2I_R1", "I2LT_R1", "ST2I_R1", "I2ST_R1", "MeanAcc", "R_mi"};

inline std::array<double, 6> ablation_metrics(const EvalSnapshot &e) {
  return {e.long_retrieval.text_to_image[0], e.long_retrieval.image_to_text[0],
          e.short_retrieval.text_to_image[0], e.short_retrieval.image_to_text[0],
          e.classification_accuracy, e.selo.r_mi};
}

struct AblationResult {
  std::vector<Variant> variants;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<AblationCell>> cells; // [variant][seed]

  /// Per-seed value of `metric` for variant v; failed runs are skipped.
  std::vector<double> values(std::size_t v,
                             const std::function<double(const EvalSnapshot &)> &metric) const {
    std::vector<double> out;
    for (const auto &c : cells[v])
      if (c.ok)
        out.push_back(metric(c.eval));
    return out;
  }
};

inline void mean_spread(const std::vector<double> &xs, double &mean, double &spread) {
  mean = 0.0;
  for (double x : xs)
    mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs)
    ss += (x - mean) * (x - mean);
  spread = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
}

/// Trains every variant on every seed and evaluates on the test split.
/// A failing run is recorded in its cell and does not stop the table.
inline AblationResult run_ablation(const TrainConfig &base, const std::vector<Variant> &variants,
                                   const std::vector<std::uint64_t> &seeds,
                                   std::span<const SceneRecord> records,
                                   const std::function<void(const std::string &)> &progress = {}) {
  if (variants.size() < 2)
    throw ParameterError("run_ablation: need at least two variants");
  if (seeds.empty())
    throw ParameterError("run_ablation: need at least one seed");
  std::vector<SceneRecord> test;
  for (const auto &r : records)
    if (r.split == Split::Test)
      test.push_back(r);
  if (test.empty())
    throw ProtocolError("run_ablation: dataset has no test split");

  AblationResult res{variants, seeds, {}};
  for (const auto &v : variants) {
    std::vector<AblationCell> row;
    TrainConfig cfg = base;
    cfg.granularity = v.granularity;
    cfg.schedule.order = v.order;
    cfg.eval_each_epoch = false;
    for (auto seed : seeds) {
      AblationCell cell;
      try {
        const TrainResult tr = train(cfg, records, seed);
        cell.eval = evaluate(tr.model, test, Vocabulary::standard());
        cell.ok = true;
      } catch (const std::exception &e) {
        cell.error = e.what();
      }
      if (progress)
        progress(v.name + " seed " + std::to_string(seed) +
                 (cell.ok ? " ok" : " failed: " + cell.error));
      row.push_back(std::move(cell));
    }
    res.cells.push_back(std::move(row));
  }
  return res;
}

inline void write_ablation_table(std::ostream &os, const AblationResult &res) {
  os << "variant";
  for (auto c : kAblationColumns)
    os << ',' << c;
  os << '\n';
  for (std::size_t v = 0; v < res.variants.size(); ++v) {
    os << res.variants[v].name;
    for (std::size_t k = 0; k < kAblationColumns.size(); ++k) {
      const auto xs = res.values(v, [k](const EvalSnapshot &e) { return ablation_metrics(e)[k]; });
      if (xs.empty()) {
        os << ",failed";
        continue;
      }
      double mean, spread;
      mean_spread(xs, mean, spread);
      char buf[64];
      std::snprintf(buf, sizeof buf, ",%.4f+-%.4f", mean, spread);
      os << buf;
    }
    os << '\n';
  }
}

} // namespace dgrain
