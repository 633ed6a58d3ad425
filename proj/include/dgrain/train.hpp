// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "dgrain/checkpoint.hpp"
#include "dgrain/config.hpp"
#include "dgrain/eval.hpp"
#include "dgrain/objective.hpp"
#include "dgrain/optim.hpp"
#include "dgrain/records.hpp"

namespace dgrain {

struct StepLog {
  std::size_t step = 0;
  BatchLoss loss;
};

struct EpochLog {
  std::size_t epoch = 0;
  EvalSnapshot eval;
};

struct RunLog {
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
};

struct TrainResult {
  ModelParams model;
  RunLog log;
};

/// Model shape for the standard vocabulary and cell codebook.
inline ModelConfig resolve_model_config(ModelConfig m, const Vocabulary &vocab) {
  m.vocab_size = vocab.size();
  m.num_cell_codes = world::kNumCellCodes;
  return m;
}

/// Long-loss weight at step t for the configured granularity: fixed at 0 or
/// 1 for single-granularity runs, the curriculum schedule otherwise.
inline double step_alpha(const TrainConfig &cfg, const ScheduleConfig &sched, std::size_t t) {
  switch (cfg.granularity) {
  case Granularity::Short: return 0.0;
  case Granularity::Long: return 1.0;
  case Granularity::Dual: return alpha_schedule(static_cast<double>(t), sched);
  }
  return 0.0;
}

/// Train split shuffled for `epoch`; a pure function of (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix64(seed, 0xe90c0000ULL + epoch));
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

/// Trains both towers on the train split of `records`. Every step encodes a
/// batch of images with both of their captions, so the long and short
/// InfoNCE terms share in-batch negatives; the incomplete last batch of an
/// epoch is dropped.
inline TrainResult train(const TrainConfig &cfg, std::span<const SceneRecord> records,
                         std::uint64_t seed, const Vocabulary &vocab = Vocabulary::standard()) {
  cfg.validate();
  std::vector<const SceneRecord *> train_set, test_set;
  for (const auto &r : records)
    (r.split == Split::Train ? train_set : test_set).push_back(&r);
  const std::size_t per_epoch = train_set.size() / cfg.batch_size;
  if (per_epoch == 0)
    throw ConfigError("train split (" + std::to_string(train_set.size()) +
                      " records) smaller than one batch of " + std::to_string(cfg.batch_size));
  const std::size_t total_steps = per_epoch * cfg.epochs;
  const ScheduleConfig sched = cfg.schedule_for(total_steps, mix64(seed, 0xa1fa));
  if (cfg.granularity == Granularity::Dual)
    sched.validate();

  TrainResult out;
  out.model = init_model(resolve_model_config(cfg.model, vocab), seed);
  ModelParams &m = out.model;
  OptimState state = OptimState::zeros_like(m);
  std::vector<SceneRecord> test_copy;
  if (cfg.eval_each_epoch)
    for (auto *r : test_set)
      test_copy.push_back(*r);

  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(train_set.size(), seed, epoch);
    for (std::size_t b = 0; b < per_epoch; ++b, ++t) {
      const double alpha = step_alpha(cfg, sched, t);
      Graph g;
      const BoundModel bm = bind_model(g, m, /*trainable=*/true);
      std::vector<Var> img, lng, shrt;
      try {
        for (std::size_t i = 0; i < cfg.batch_size; ++i) {
          const SceneRecord &r = *train_set[order[b * cfg.batch_size + i]];
          img.push_back(encode_image(bm, r.grid));
          lng.push_back(encode_text(bm, r.long_tokens));
          shrt.push_back(encode_text(bm, r.short_tokens));
        }
      } catch (const DegenerateVectorError &e) {
        throw DegenerateVectorError("step " + std::to_string(t) + " batch " +
                                    std::to_string(b) + " of epoch " + std::to_string(epoch) +
                                    ": " + e.what());
      }
      Var images = concat_rows(img);
      Var loss_long = info_nce(images, concat_rows(lng), bm.log_tau);
      Var loss_short = info_nce(images, concat_rows(shrt), bm.log_tau);
      Var total = dual_loss(loss_long, loss_short, alpha);
      const BatchLoss logged =
          dual_loss(loss_long.value().item(), loss_short.value().item(), alpha);
      m.zero_grad();
      g.backward(total);
      sgd_step(m, state, cfg.sgd, t);
      for (const auto &[name, p] : m.named_tensors())
        if (!all_finite(p->data()))
          throw DivergenceError("non-finite parameter '" + name + "' after step " +
                                std::to_string(t));
      out.log.steps.push_back({t, logged});
    }
    if (cfg.eval_each_epoch && !test_copy.empty())
      out.log.epochs.push_back({epoch, evaluate(m, test_copy, vocab)});
  }
  return out;
}

inline TrainResult train(const TrainConfig &cfg, const std::string &dataset_path,
                         std::uint64_t seed) {
  const auto records = read_records(dataset_path);
  return train(cfg, records, seed);
}

inline TrainResult train(const TrainConfig &cfg, const std::string &dataset_path) {
  cfg.validate();
  return train(cfg, dataset_path, cfg.seeds.front());
}

/// Step log as CSV: step,alpha,loss_long,loss_short,loss_total with
/// round-trippable (%.17g) values.
inline void write_run_log(std::ostream &os, const RunLog &log) {
  os << "step,alpha,loss_long,loss_short,loss_total\n";
  char buf[160];
  for (const auto &s : log.steps) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", s.step, s.loss.alpha,
                  s.loss.loss_long, s.loss.loss_short, s.loss.total);
    os << buf;
  }
}

inline void write_run_log(const std::string &path, const RunLog &log) {
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw IoError("cannot write log '" + path + "'");
  write_run_log(os, log);
}

inline RunLog read_run_log(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open log '" + path + "'");
  RunLog log;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (n == 1) {
      if (line != "step,alpha,loss_long,loss_short,loss_total")
        throw ParseError(1, "unexpected log header");
      continue;
    }
    StepLog s;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf", &s.step, &s.loss.alpha,
                    &s.loss.loss_long, &s.loss.loss_short, &s.loss.total) != 5)
      throw ParseError(n, "malformed log row");
    log.steps.push_back(s);
  }
  return log;
}

} // namespace dgrain
