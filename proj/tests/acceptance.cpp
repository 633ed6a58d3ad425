// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dgrain/dgrain.hpp"
#include "geometry_oracle.hpp"
#include "test_support.hpp"

namespace {

using namespace dgrain;
using testing::numeric_grad;
using testing::random_dim;
using testing::random_tensor;
using testing::relative_error;

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Records a failed sub-check without stopping the criterion.
void require(Outcome &o, bool ok, const std::string &what) {
  if (!ok) {
    o.pass = false;
    if (o.detail.size() < 400)
      o.detail += (o.detail.empty() ? "" : "; ") + what;
  }
}

std::string fmt(const char *f, double a, double b = 0, double c = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 -----------------------------------------------------------------------------

Outcome kps_arithmetic() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(77);
  const PETable pe{random_tensor(gen, 77, 32), 0, 1};
  const PETable out = kps_stretch(pe, 20, 4);
  require(o, out.length() == 248, "length " + std::to_string(out.length()));
  for (std::size_t p = 0; p <= 20; ++p)
    for (std::size_t j = 0; j < 32; ++j)
      require(o, out.entries(p, j) == pe.entries(p, j), "prefix row " + std::to_string(p));
  double worst = 0.0;
  for (std::size_t p = 21; p < out.length(); ++p) {
    const auto s = stretch_source(p, 20, 4, StretchMode::OffsetMapped, 77);
    // Least-squares weight between the two source rows, then the residual.
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < 32; ++j) {
      const double d = pe.entries(s.hi, j) - pe.entries(s.lo, j);
      num += (out.entries(p, j) - pe.entries(s.lo, j)) * d;
      den += d * d;
    }
    const double w = den > 0 ? num / den : 0.0;
    require(o, w >= -1e-9 && w <= 1 + 1e-9, "weight outside [0,1] at " + std::to_string(p));
    for (std::size_t j = 0; j < 32; ++j)
      worst = std::max(worst, std::abs(out.entries(p, j) - ((1 - w) * pe.entries(s.lo, j) +
                                                            w * pe.entries(s.hi, j))));
  }
  require(o, worst < 1e-9, fmt("residual %.3g", worst));
  const double secs = seconds_since(t0);
  require(o, secs < 1.0, fmt("runtime %.2fs", secs));
  if (o.pass)
    o.detail = "248 positions, max residual " + fmt("%.2g", worst);
  return o;
}

// 2 -----------------------------------------------------------------------------

Outcome schedule_exactness() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  ScheduleConfig c;
  c.t1 = 300;
  c.t2 = 700;
  c.total = 1000;
  c.seed = 42;
  for (double t = 0; t < c.t1; t += 1)
    require(o, alpha_schedule(t, c) == 1.0, fmt("warm-up t=%g", t));
  require(o, std::abs(alpha_schedule(c.t1, c) - c.alpha_start) < 1e-12, "alpha(t1)");
  require(o, std::abs(alpha_schedule(c.t2, c) - c.alpha_min) < 1e-12, "alpha(t2)");
  require(o,
          std::abs(alpha_schedule(0.5 * (c.t1 + c.t2), c) - 0.5 * (c.alpha_start + c.alpha_min)) <
              1e-12,
          "midpoint");
  require(o, alpha_schedule(c.total, c) == c.alpha_min, "alpha(T)");
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0.0, c.total);
  for (int i = 0; i < 100000; ++i) {
    const double t = u(gen), a = alpha_schedule(t, c);
    double lo, hi;
    if (t < c.t1) {
      lo = hi = c.alpha_start;
    } else if (t <= c.t2) {
      lo = c.alpha_min;
      hi = c.alpha_start;
    } else {
      const double amp = c.delta * (1 - (t - c.t2) / (c.total - c.t2));
      lo = c.alpha_min - amp;
      hi = c.alpha_min + amp;
    }
    if (!(a >= lo - 1e-15 && a <= hi + 1e-15 && a >= 0.0 && a <= 1.0)) {
      require(o, false, fmt("alpha(%g)=%g out of bounds", t, a));
      break;
    }
  }
  const double secs = seconds_since(t0);
  require(o, secs < 5.0, fmt("runtime %.2fs", secs));
  if (o.pass)
    o.detail = "endpoints exact, 1e5 draws in bounds";
  return o;
}

// 3 -----------------------------------------------------------------------------

Outcome infonce_correctness() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const Tensor one{{0.6, 0.8}};
  require(o, info_nce(one, one, 0.07) == 0.0, "N=1 not zero");
  for (std::size_t n : {2, 4, 8}) {
    const Tensor same = l2_normalize(Tensor(n, 3, 1.0));
    const double l = info_nce(same, same, 0.07);
    require(o, std::abs(l - std::log(static_cast<double>(n))) < 1e-9,
            fmt("uniform N=%g gives %.12g", static_cast<double>(n), l));
  }
  std::mt19937_64 gen(3);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = random_dim(gen, 1, 6), e = random_dim(gen, 2, 8);
    Tensor X = random_tensor(gen, n, e), Y = random_tensor(gen, n, e);
    Tensor lt = Tensor::scalar(std::log(std::uniform_real_distribution<double>(0.05, 1.0)(gen)));
    auto loss = [&](bool grad) {
      Graph g;
      Var x = grad ? g.parameter(X) : g.constant(X);
      Var y = grad ? g.parameter(Y) : g.constant(Y);
      Var t = grad ? g.parameter(lt) : g.constant(lt);
      Var l = info_nce(l2_normalize(x), l2_normalize(y), t);
      if (grad)
        g.backward(l);
      return l.value().item();
    };
    X.zero_grad();
    Y.zero_grad();
    lt.zero_grad();
    loss(true);
    for (Tensor *p : {&X, &Y, &lt}) {
      const std::vector<double> analytic(p->grad().begin(), p->grad().end());
      worst = std::max(worst, relative_error(analytic, numeric_grad([&] { return loss(false); }, *p)));
    }
  }
  require(o, worst < 1e-4, fmt("gradient rel err %.3g", worst));
  const double secs = seconds_since(t0);
  require(o, secs < 30.0, fmt("runtime %.2fs", secs));
  if (o.pass)
    o.detail = "worst gradient rel err " + fmt("%.2g", worst);
  return o;
}

// 4 -----------------------------------------------------------------------------

Outcome loss_identity() {
  Outcome o;
  std::vector<SceneRecord> train_only;
  for (auto &r : generate_records(4, 1000))
    if (r.split == Split::Train && train_only.size() < 800)
      train_only.push_back(r);
  TrainConfig cfg;
  cfg.epochs = 4; // 800 / 16 = 50 steps per epoch
  const auto res = train(cfg, train_only, 1);
  require(o, res.log.steps.size() == 200, "steps " + std::to_string(res.log.steps.size()));
  double worst = 0.0;
  for (const auto &s : res.log.steps) {
    const auto &l = s.loss;
    worst = std::max(worst, std::abs(l.total - (l.alpha * l.loss_long + (1 - l.alpha) * l.loss_short)));
  }
  require(o, worst <= 1e-12, fmt("max deviation %.3g", worst));
  if (o.pass)
    o.detail = "200 rows, max deviation " + fmt("%.2g", worst);
  return o;
}

// 5 -----------------------------------------------------------------------------

std::array<double, 3> sort_oracle(const Tensor &q, const Tensor &gallery,
                                  const std::vector<std::vector<std::size_t>> &answers) {
  std::array<double, 3> hits{};
  const std::size_t ks[] = {1, 5, 10};
  for (std::size_t i = 0; i < q.rows(); ++i) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t g = 0; g < gallery.rows(); ++g) {
      double s = 0;
      for (std::size_t j = 0; j < q.cols(); ++j)
        s += q(i, j) * gallery(g, j);
      scored.push_back({-s, g});
    }
    std::sort(scored.begin(), scored.end());
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t r = 0; r < std::min(ks[k], scored.size()); ++r)
        if (std::count(answers[i].begin(), answers[i].end(), scored[r].second)) {
          hits[k] += 1;
          break;
        }
  }
  for (double &h : hits)
    h = 100.0 * h / static_cast<double>(q.rows());
  return hits;
}

Outcome retrieval_oracle() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = random_dim(gen, 1, 20), m = random_dim(gen, n, 30),
                      e = random_dim(gen, 2, 8);
    Tensor imgs = l2_normalize(random_tensor(gen, n, e));
    Tensor txts = l2_normalize(random_tensor(gen, m, e));
    if (trial % 2)
      for (Tensor *t : {&imgs, &txts})
        for (double &v : t->data())
          v = std::round(v * 2) / 2 + 1e-3;
    std::vector<std::vector<std::size_t>> t2i(m), i2t(n);
    for (std::size_t t = 0; t < m; ++t) {
      t2i[t].push_back(t < n ? t : random_dim(gen, 0, n - 1));
      if (gen() % 3 == 0)
        t2i[t].push_back(random_dim(gen, 0, n - 1));
      for (auto i : t2i[t])
        i2t[i].push_back(t);
    }
    const RecallReport r = retrieval_eval(imgs, txts, t2i);
    require(o, r.text_to_image == sort_oracle(txts, imgs, t2i) &&
                   r.image_to_text == sort_oracle(imgs, txts, i2t),
            "instance " + std::to_string(trial) + " differs");
  }
  const Tensor x = l2_normalize(random_tensor(gen, 30, 8));
  require(o, retrieval_eval(x, x, paired_answers(30)).mean_recall == 100.0, "self-retrieval");
  const double secs = seconds_since(t0);
  require(o, secs < 10.0, fmt("runtime %.2fs", secs));
  if (o.pass)
    o.detail = "50 instances identical, self mR=100";
  return o;
}

// 6 -----------------------------------------------------------------------------

Outcome rmi_composition() {
  Outcome o;
  std::mt19937_64 gen(6);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t h = random_dim(gen, 2, 8), w = random_dim(gen, 2, 8);
    std::vector<double> v(h * w);
    for (double &x : v)
      x = std::uniform_real_distribution<double>(0, 1)(gen);
    const std::size_t r0 = random_dim(gen, 0, h - 1), c0 = random_dim(gen, 0, w - 1);
    const Box gt{r0, c0, random_dim(gen, r0 + 1, h), random_dim(gen, c0 + 1, w)};
    const SeLoReport rep = selo_metrics(AttentionMap{h, w, v, {}, {}}, gt);
    worst = std::max(worst,
                     std::abs(rep.r_mi - (0.4 * rep.r_su + 0.35 * (1 - rep.r_as) + 0.25 * rep.r_da)));
  }
  require(o, worst <= 1e-12, fmt("max deviation %.3g", worst));
  std::vector<double> ideal(64, 0.0);
  for (std::size_t r = 2; r < 4; ++r)
    for (std::size_t c = 3; c < 5; ++c)
      ideal[r * 8 + c] = 0.25;
  const double rmi = selo_metrics(AttentionMap{8, 8, ideal, {}, {}}, Box{2, 3, 4, 5}).r_mi;
  require(o, std::abs(rmi - 1.0) < 1e-12, fmt("ideal r_mi %.15g", rmi));
  if (o.pass)
    o.detail = "1000 reports, max deviation " + fmt("%.2g", worst) + ", ideal r_mi=1";
  return o;
}

// 7 -----------------------------------------------------------------------------

Outcome optimizer_recurrence() {
  Outcome o;
  std::mt19937_64 gen(7);
  Tensor p = random_tensor(gen, 8, 8);
  const Tensor p0 = p, g = random_tensor(gen, 8, 8, -5, 5);
  OptimState st;
  st.velocity.emplace_back(8, 8);
  Tensor *ps[] = {&p};
  std::span<const double> gs[] = {g.data()};
  sgd_step(ps, gs, st, SgdConfig{});
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    worst = std::max(worst, std::abs((p.data()[i] - p0.data()[i]) - (-4.5e-4 * g.data()[i])));
  require(o, worst <= 1e-15, fmt("first step deviation %.3g", worst));

  Tensor q = random_tensor(gen, 4, 4);
  const Tensor q0 = q, zero(4, 4);
  OptimState st2;
  st2.velocity.emplace_back(4, 4);
  Tensor *qs[] = {&q};
  std::span<const double> zs[] = {zero.data()};
  for (int i = 0; i < 10; ++i)
    sgd_step(qs, zs, st2, SgdConfig{});
  require(o, q == q0 && st2.velocity[0] == zero, "zero gradient moved parameters");
  if (o.pass)
    o.detail = "first step deviation " + fmt("%.2g", worst) + ", fixed point holds";
  return o;
}

// 8, 9 --------------------------------------------------------------------------

struct AblationRuns {
  std::vector<double> long_mr[4], short_mr[4]; // short, long, dual, dual-s2l
  double seconds = 0.0;
  std::string error;
};

const AblationRuns &ablation_runs() {
  static const AblationRuns runs = [] {
    AblationRuns a;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto records = generate_records(2024, 2000);
      const auto res = run_ablation(TrainConfig{}, parse_variants("short,long,dual,dual-s2l"),
                                    {1, 2, 3, 4, 5}, records,
                                    [](const std::string &m) { std::cerr << "  " << m << '\n'; });
      for (std::size_t v = 0; v < 4; ++v) {
        for (const auto &c : res.cells[v])
          if (!c.ok)
            a.error += res.variants[v].name + ": " + c.error + "; ";
        a.long_mr[v] = res.values(v, [](const EvalSnapshot &e) { return e.long_retrieval.mean_recall; });
        a.short_mr[v] = res.values(v, [](const EvalSnapshot &e) { return e.short_retrieval.mean_recall; });
      }
    } catch (const std::exception &e) {
      a.error = e.what();
    }
    a.seconds = seconds_since(t0);
    return a;
  }();
  return runs;
}

std::string series(const std::vector<double> &xs) {
  std::string s;
  for (double x : xs)
    s += (s.empty() ? "" : "/") + fmt("%.1f", x);
  return s;
}

Outcome granularity_ablation() {
  Outcome o;
  const auto &a = ablation_runs();
  if (!a.error.empty()) {
    require(o, false, "runs failed: " + a.error);
    return o;
  }
  enum { kShort, kLong, kDual };
  int wins_a = 0, wins_b = 0, wins_c = 0;
  double mean = 0.0, band = 0.0;
  mean_spread(a.short_mr[kShort], mean, band);
  for (std::size_t s = 0; s < 5; ++s) {
    wins_a += a.long_mr[kDual][s] > a.long_mr[kShort][s];
    wins_b += a.long_mr[kLong][s] > a.long_mr[kShort][s];
    wins_c += a.short_mr[kDual][s] >= a.short_mr[kShort][s] - band;
  }
  require(o, wins_a >= 4, "(a) dual>short on long mR " + std::to_string(wins_a) + "/5");
  require(o, wins_b >= 4, "(b) long>short on long mR " + std::to_string(wins_b) + "/5");
  require(o, wins_c >= 3, "(c) dual~short on short mR " + std::to_string(wins_c) + "/5");
  require(o, a.seconds < 900.0, fmt("runtime %.0fs", a.seconds));
  o.detail += (o.detail.empty() ? "" : " | ") + std::string("(a) ") + std::to_string(wins_a) +
              "/5 (b) " + std::to_string(wins_b) + "/5 (c) " + std::to_string(wins_c) +
              "/5 band " + fmt("%.2f", band) + "; long mR short=" + series(a.long_mr[kShort]) +
              " long=" + series(a.long_mr[kLong]) + " dual=" + series(a.long_mr[kDual]) +
              "; short mR short=" + series(a.short_mr[kShort]) + " dual=" +
              series(a.short_mr[kDual]) + fmt("; %.0fs", a.seconds);
  return o;
}

Outcome order_ablation() {
  Outcome o;
  const auto &a = ablation_runs();
  if (!a.error.empty()) {
    require(o, false, "runs failed: " + a.error);
    return o;
  }
  int wins = 0;
  for (std::size_t s = 0; s < 5; ++s)
    wins += a.long_mr[2][s] > a.long_mr[3][s];
  require(o, wins >= 4, "long-to-short > short-to-long " + std::to_string(wins) + "/5");
  o.detail += (o.detail.empty() ? "" : " | ") + std::to_string(wins) + "/5; long mR l2s=" +
              series(a.long_mr[2]) + " s2l=" + series(a.long_mr[3]);
  return o;
}

// 10 ----------------------------------------------------------------------------

Outcome generator_statistics() {
  Outcome o;
  std::size_t n = 0, bad = 0;
  double long_sum = 0, short_sum = 0;
  generate_corpus(10, 5000, CorpusConfig{}, Vocabulary::standard(), [&](GeneratedRecord &&g) {
    long_sum += static_cast<double>(g.record.long_tokens.size());
    short_sum += static_cast<double>(g.record.short_tokens.size());
    bad += testing::count_violations(g.scene);
    ++n;
  });
  const double lm = long_sum / static_cast<double>(n), sm = short_sum / static_cast<double>(n);
  require(o, n == 5000, "record count");
  require(o, std::abs(lm - 86.0) <= 10.0, fmt("long mean %.2f", lm));
  require(o, std::abs(sm - 32.0) <= 6.0, fmt("short mean %.2f", sm));
  require(o, bad == 0, "violations " + std::to_string(bad));
  if (o.pass)
    o.detail = fmt("long mean %.2f, short mean %.2f, 0 violations", lm, sm);
  return o;
}

// 11 ----------------------------------------------------------------------------

Outcome determinism() {
  Outcome o;
  const auto records = generate_records(11, 300);
  TrainConfig cfg;
  std::string ckpt[2], log[2];
  for (int i = 0; i < 2; ++i) {
    const auto res = train(cfg, records, 17);
    std::ostringstream c, l;
    save_checkpoint(res.model, c);
    write_run_log(l, res.log);
    ckpt[i] = c.str();
    log[i] = l.str();
  }
  require(o, ckpt[0] == ckpt[1], "checkpoints differ");
  require(o, log[0] == log[1], "logs differ");
  if (o.pass)
    o.detail = "checkpoint " + std::to_string(ckpt[0].size()) + " bytes and log identical";
  return o;
}

} // namespace

int main() {
  const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria = {
      {"kps-arithmetic", kps_arithmetic},
      {"schedule-exactness", schedule_exactness},
      {"infonce-correctness", infonce_correctness},
      {"dual-loss-identity", loss_identity},
      {"retrieval-oracle", retrieval_oracle},
      {"rmi-composition", rmi_composition},
      {"optimizer-recurrence", optimizer_recurrence},
      {"granularity-ablation", granularity_ablation},
      {"order-ablation", order_ablation},
      {"generator-statistics", generator_statistics},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << ' ' << (i + 1) << ' ' << criteria[i].first
              << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << '/' << criteria.size()
            << " criteria passed" << std::endl;
  return failed ? 1 : 0;
}
