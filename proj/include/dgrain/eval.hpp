// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Downstream protocols: cross-modal retrieval (long and short queries),
// zero-shot classification and semantic localisation.
//
// Report CSV layouts (one header row, then data rows):
//   retrieval: task,t2i_r1,t2i_r5,t2i_r10,i2t_r1,i2t_r5,i2t_r10,mr
//   classification: task,accuracy,n
//   selo: task,r_su,r_as,r_da,r_mi
// Heatmaps export as H lines of W space-separated values.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dgrain/model.hpp"
#include "dgrain/objective.hpp"
#include "dgrain/records.hpp"

namespace dgrain {

// Retrieval -------------------------------------------------------------------

inline constexpr std::array<std::size_t, 3> kRecallKs = {1, 5, 10};

/// Recall percentages per direction for k in `ks`, and their mean.
struct RecallReport {
  std::array<std::size_t, 3> ks = kRecallKs;
  std::array<double, 3> text_to_image{};
  std::array<double, 3> image_to_text{};
  double mean_recall = 0.0;

  friend bool operator==(const RecallReport &, const RecallReport &) = default;
};

namespace detail {
/// 0-based rank of gallery item `target` in row `sims`: items with a higher
/// score, or an equal score and a lower index, come first.
inline std::size_t rank_of(std::span<const double> sims, std::size_t target) {
  std::size_t r = 0;
  const double s = sims[target];
  for (std::size_t j = 0; j < sims.size(); ++j)
    if (sims[j] > s || (sims[j] == s && j < target))
      ++r;
  return r;
}

inline std::array<double, 3>
recall_for(const Tensor &sims, const std::vector<std::vector<std::size_t>> &answers,
           const std::array<std::size_t, 3> &ks) {
  std::array<std::size_t, 3> hits{};
  for (std::size_t q = 0; q < sims.rows(); ++q) {
    std::size_t best = sims.cols();
    for (auto a : answers[q])
      best = std::min(best, rank_of(sims.row_span(q), a));
    for (std::size_t k = 0; k < ks.size(); ++k)
      hits[k] += best < ks[k];
  }
  std::array<double, 3> out{};
  for (std::size_t k = 0; k < ks.size(); ++k)
    out[k] = 100.0 * static_cast<double>(hits[k]) / static_cast<double>(sims.rows());
  return out;
}
} // namespace detail

/// `text_to_images[t]` lists the images matching text t; the image-to-text
/// answer sets are its inverse. Similarity is the dot product of the
/// (unit-norm) rows.
inline RecallReport
retrieval_eval(const Tensor &image_embs, const Tensor &text_embs,
               const std::vector<std::vector<std::size_t>> &text_to_images,
               const std::array<std::size_t, 3> &ks = kRecallKs) {
  const std::size_t n = image_embs.rows(), m = text_embs.rows();
  if (n == 0 || m == 0)
    throw ProtocolError("retrieval_eval: empty gallery");
  if (image_embs.cols() != text_embs.cols())
    throw DimensionError("retrieval_eval: embedding widths differ");
  if (text_to_images.size() != m)
    throw ProtocolError("retrieval_eval: need one answer set per text");
  std::vector<std::vector<std::size_t>> image_to_texts(n);
  for (std::size_t t = 0; t < m; ++t) {
    if (text_to_images[t].empty())
      throw ProtocolError("retrieval_eval: text " + std::to_string(t) +
                          " has an empty answer set");
    for (auto i : text_to_images[t]) {
      if (i >= n)
        throw ProtocolError("retrieval_eval: answer index out of range");
      image_to_texts[i].push_back(t);
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (image_to_texts[i].empty())
      throw ProtocolError("retrieval_eval: image " + std::to_string(i) +
                          " has an empty answer set");
  const Tensor t2i = matmul(text_embs, transpose(image_embs));
  RecallReport r;
  r.ks = ks;
  r.text_to_image = detail::recall_for(t2i, text_to_images, ks);
  r.image_to_text = detail::recall_for(transpose(t2i), image_to_texts, ks);
  double s = 0.0;
  for (double v : r.text_to_image)
    s += v;
  for (double v : r.image_to_text)
    s += v;
  r.mean_recall = s / 6.0;
  return r;
}

/// One-to-one pairing: text i matches image i.
inline std::vector<std::vector<std::size_t>> paired_answers(std::size_t n) {
  std::vector<std::vector<std::size_t>> a(n);
  for (std::size_t i = 0; i < n; ++i)
    a[i] = {i};
  return a;
}

// Zero-shot classification ------------------------------------------------------

inline constexpr std::string_view kClassPlaceholder = "{class_name}";
inline constexpr std::string_view kDefaultPromptTemplate =
    "a satellite photo of {class_name}";

inline std::string fill_template(std::string_view tmpl, std::string_view class_name) {
  const auto at = tmpl.find(kClassPlaceholder);
  if (at == std::string_view::npos)
    throw TemplateError("prompt template lacks " + std::string(kClassPlaceholder));
  std::string out(tmpl.substr(0, at));
  out += class_name;
  out += tmpl.substr(at + kClassPlaceholder.size());
  return out;
}

/// Prompt embeddings, one row per class.
inline Tensor class_prompt_embeddings(const ModelParams &m, const Vocabulary &vocab,
                                      std::span<const std::string> class_names,
                                      std::string_view tmpl = kDefaultPromptTemplate) {
  if (class_names.empty())
    throw ParameterError("zero_shot_classify: no classes");
  Tensor out(class_names.size(), m.embed_dim());
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    const auto ids = vocab.encode(fill_template(tmpl, class_names[c]));
    const Tensor e = encode_text(m, ids);
    std::copy(e.data().begin(), e.data().end(), out.row_span(c).begin());
  }
  return out;
}

/// Index of the highest score; the lowest index wins ties.
inline std::size_t argmax_first(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best])
      best = i;
  return best;
}

inline std::size_t classify_with_prompts(const ModelParams &m, const Grid &grid,
                                         const Tensor &prompts) {
  const Tensor img = encode_image(m, grid);
  std::vector<double> scores(prompts.rows());
  for (std::size_t c = 0; c < prompts.rows(); ++c)
    scores[c] = cosine_similarity(img.row_span(0), prompts.row_span(c));
  return argmax_first(scores);
}

inline std::size_t zero_shot_classify(const ModelParams &m, const Vocabulary &vocab,
                                      const Grid &grid,
                                      std::span<const std::string> class_names,
                                      std::string_view tmpl = kDefaultPromptTemplate) {
  fill_template(tmpl, ""); // placeholder check before any encoding
  return classify_with_prompts(m, grid, class_prompt_embeddings(m, vocab, class_names, tmpl));
}

// Semantic localisation ---------------------------------------------------------

struct SeloWindow {
  std::size_t height = 3;
  std::size_t width = 3;
  std::size_t stride = 1;
};

/// H x W non-negative weights summing to one.
struct AttentionMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  SeloWindow window;
  std::string query_id;

  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

/// Top-left corners of every window position, row-major.
inline std::vector<Box> window_positions(std::size_t h, std::size_t w, const SeloWindow &win) {
  if (win.stride < 1)
    throw ParameterError("selo: stride must be >= 1");
  if (win.height < 1 || win.width < 1 || win.height > h || win.width > w)
    throw ParameterError("selo: window " + std::to_string(win.height) + "x" +
                         std::to_string(win.width) + " does not fit the " +
                         std::to_string(h) + "x" + std::to_string(w) + " grid");
  std::vector<Box> out;
  for (std::size_t r = 0; r + win.height <= h; r += win.stride)
    for (std::size_t c = 0; c + win.width <= w; c += win.stride)
      out.push_back({r, c, r + win.height, c + win.width});
  return out;
}

/// Shift similarities to be non-negative, spread each onto the cells its
/// window covers, average by coverage count and normalise to sum one. When
/// every shifted similarity is zero the map is uniform over covered cells.
inline AttentionMap selo_accumulate(std::size_t h, std::size_t w, const SeloWindow &win,
                                    std::span<const double> window_sims) {
  const auto boxes = window_positions(h, w, win);
  if (boxes.size() != window_sims.size())
    throw ParameterError("selo: one similarity per window position required");
  const double lo = *std::min_element(window_sims.begin(), window_sims.end());
  std::vector<double> acc(h * w, 0.0), cover(h * w, 0.0);
  for (std::size_t k = 0; k < boxes.size(); ++k)
    for (std::size_t r = boxes[k].r0; r < boxes[k].r1; ++r)
      for (std::size_t c = boxes[k].c0; c < boxes[k].c1; ++c) {
        acc[r * w + c] += window_sims[k] - lo;
        cover[r * w + c] += 1.0;
      }
  AttentionMap map{h, w, std::vector<double>(h * w, 0.0), win, {}};
  double total = 0.0;
  for (std::size_t i = 0; i < acc.size(); ++i)
    if (cover[i] > 0.0) {
      map.values[i] = acc[i] / cover[i];
      total += map.values[i];
    }
  if (total > 0.0) {
    for (double &v : map.values)
      v /= total;
  } else {
    double covered = 0.0;
    for (double c : cover)
      covered += c > 0.0;
    for (std::size_t i = 0; i < cover.size(); ++i)
      map.values[i] = cover[i] > 0.0 ? 1.0 / covered : 0.0;
  }
  return map;
}

/// Window similarities for `query_embedding` against every crop of `grid`.
inline std::vector<double> selo_window_similarities(const ModelParams &m, const Grid &grid,
                                                    const Tensor &query_embedding,
                                                    const SeloWindow &win) {
  std::vector<double> sims;
  for (const Box &b : window_positions(grid.height, grid.width, win)) {
    const Tensor e = encode_image(m, crop(grid, b));
    sims.push_back(cosine_similarity(e.row_span(0), query_embedding.row_span(0)));
  }
  return sims;
}

inline AttentionMap selo_heatmap(const ModelParams &m, const Grid &grid,
                                 std::span<const TokenId> query, const SeloWindow &win,
                                 std::string query_id = {}) {
  window_positions(grid.height, grid.width, win);
  const Tensor q = encode_text(m, query);
  AttentionMap map = selo_accumulate(grid.height, grid.width, win,
                                     selo_window_similarities(m, grid, q, win));
  map.query_id = std::move(query_id);
  return map;
}

struct SeloWeights {
  double su = 0.4;
  double as = 0.35;
  double da = 0.25;
};

struct SeLoReport {
  double r_su = 0.0;
  double r_as = 0.0;
  double r_da = 0.0;
  double r_mi = 0.0;
  SeloWeights weights;
};

inline double compose_rmi(double r_su, double r_as, double r_da, const SeloWeights &w) {
  return w.su * r_su + w.as * (1.0 - r_as) + w.da * r_da;
}

/// Linear-interpolation percentile, q in [0, 1].
inline double percentile(std::vector<double> v, double q) {
  if (v.empty())
    throw ParameterError("percentile of empty set");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline constexpr double kDefaultPeakQuantile = 0.9;

/// Localisation metrics (definitions are this library's own):
///  r_su: mean attention inside gt / (mean inside + mean outside); 1 when gt
///        is the whole map.
///  r_as: distance from the gt centre to the nearest peak cell (cells are
///        unit squares, distance to the closest point of the square) over
///        the map diagonal; 1 without peaks.
///  r_da: 1 - (components - 1) / (cells - 1) over 4-connected peak regions.
/// A peak cell has value >= peak_threshold and above the map minimum;
/// peak_threshold defaults to the 90th percentile of the map.
inline SeLoReport selo_metrics(const AttentionMap &map, const Box &gt,
                               const SeloWeights &weights = {},
                               std::optional<double> peak_threshold = std::nullopt) {
  const std::size_t h = map.height, w = map.width, n = h * w;
  if (gt.area() == 0)
    throw ParameterError("selo_metrics: degenerate ground-truth box");
  if (!gt.fits(h, w))
    throw ParameterError("selo_metrics: ground-truth box outside the map");
  if (map.values.size() != n || n == 0)
    throw DimensionError("selo_metrics: map size mismatch");

  double in_sum = 0.0, out_sum = 0.0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      (gt.contains(r, c) ? in_sum : out_sum) += map.at(r, c);
  const double in_mean = in_sum / static_cast<double>(gt.area());
  const double out_cells = static_cast<double>(n - gt.area());
  const double out_mean = out_cells > 0 ? out_sum / out_cells : 0.0;
  SeLoReport rep;
  rep.weights = weights;
  rep.r_su = in_mean + out_mean > 0.0 ? in_mean / (in_mean + out_mean) : 0.0;

  const double thr = peak_threshold ? *peak_threshold : percentile(map.values, kDefaultPeakQuantile);
  const double floor_v = *std::min_element(map.values.begin(), map.values.end());
  std::vector<char> peak(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    peak[i] = map.values[i] >= thr && map.values[i] > floor_v;

  const double cy = 0.5 * static_cast<double>(gt.r0 + gt.r1);
  const double cx = 0.5 * static_cast<double>(gt.c0 + gt.c1);
  double best = -1.0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      if (!peak[r * w + c])
        continue;
      const double dy = std::max({static_cast<double>(r) - cy, 0.0, cy - static_cast<double>(r + 1)});
      const double dx = std::max({static_cast<double>(c) - cx, 0.0, cx - static_cast<double>(c + 1)});
      const double d = std::hypot(dy, dx);
      if (best < 0.0 || d < best)
        best = d;
    }
  const double diag = std::hypot(static_cast<double>(h), static_cast<double>(w));
  rep.r_as = best < 0.0 ? 1.0 : best / diag;

  std::size_t components = 0;
  std::vector<char> seen(n, 0);
  std::deque<std::size_t> todo;
  for (std::size_t i = 0; i < n; ++i) {
    if (!peak[i] || seen[i])
      continue;
    ++components;
    seen[i] = 1;
    todo.push_back(i);
    while (!todo.empty()) {
      const std::size_t k = todo.front();
      todo.pop_front();
      const std::size_t r = k / w, c = k % w;
      auto visit = [&](std::size_t rr, std::size_t cc) {
        const std::size_t j = rr * w + cc;
        if (peak[j] && !seen[j]) {
          seen[j] = 1;
          todo.push_back(j);
        }
      };
      if (r > 0) visit(r - 1, c);
      if (r + 1 < h) visit(r + 1, c);
      if (c > 0) visit(r, c - 1);
      if (c + 1 < w) visit(r, c + 1);
    }
  }
  components = std::max<std::size_t>(components, 1);
  rep.r_da = n > 1 ? 1.0 - static_cast<double>(components - 1) / static_cast<double>(n - 1) : 1.0;
  rep.r_mi = compose_rmi(rep.r_su, rep.r_as, rep.r_da, weights);
  return rep;
}

// Report files ------------------------------------------------------------------

inline void write_recall_csv_header(std::ostream &os) {
  os << "task,t2i_r1,t2i_r5,t2i_r10,i2t_r1,i2t_r5,i2t_r10,mr\n";
}
inline void write_recall_csv_row(std::ostream &os, const std::string &task,
                                 const RecallReport &r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n", task.c_str(),
                r.text_to_image[0], r.text_to_image[1], r.text_to_image[2],
                r.image_to_text[0], r.image_to_text[1], r.image_to_text[2], r.mean_recall);
  os << buf;
}
inline void write_selo_csv_header(std::ostream &os) { os << "task,r_su,r_as,r_da,r_mi\n"; }
inline void write_selo_csv_row(std::ostream &os, const std::string &task, const SeLoReport &r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f\n", task.c_str(), r.r_su, r.r_as,
                r.r_da, r.r_mi);
  os << buf;
}
inline void write_heatmap(std::ostream &os, const AttentionMap &m) {
  char buf[32];
  for (std::size_t r = 0; r < m.height; ++r) {
    for (std::size_t c = 0; c < m.width; ++c) {
      std::snprintf(buf, sizeof buf, "%s%.9g", c ? " " : "", m.at(r, c));
      os << buf;
    }
    os << '\n';
  }
}

// Full evaluation over a record set ---------------------------------------------

struct EvalOptions {
  SeloWindow window{3, 3, 1};
  SeloWeights weights{};
  std::string prompt_template = std::string(kDefaultPromptTemplate);
};

struct EvalSnapshot {
  RecallReport long_retrieval;  // LTCR
  RecallReport short_retrieval; // STCR
  double classification_accuracy = 0.0; // percent
  SeLoReport selo;              // mean over records
  std::size_t num_records = 0;
};

/// Scene class of a generated grid: its most frequent background code.
inline std::size_t scene_class_of(const Grid &g) {
  std::array<std::size_t, world::kNumSceneClasses> counts{};
  for (CellCode c : g.codes)
    if (world::is_background(c))
      ++counts[c];
  return argmax_first(std::vector<double>(counts.begin(), counts.end()));
}

/// "a <attr> <category>" for the object occupying the record's gt box.
inline std::vector<TokenId> selo_query(const SceneRecord &r, const Vocabulary &vocab) {
  const CellCode code = r.grid.at(r.gt_region.r0, r.gt_region.c0);
  if (world::is_background(code))
    throw ProtocolError("selo_query: gt box of " + r.id + " starts on background");
  return vocab.encode("a " + std::string(world::kAttributes[world::code_attribute(code)]) +
                      " " + std::string(world::kCategories[world::code_category(code)]));
}

inline std::vector<std::string> scene_class_names() {
  return {world::kSceneClasses.begin(), world::kSceneClasses.end()};
}

inline EvalSnapshot evaluate(const ModelParams &m, std::span<const SceneRecord> records,
                             const Vocabulary &vocab, const EvalOptions &opt = {}) {
  if (records.empty())
    throw ProtocolError("evaluate: no records");
  const std::size_t n = records.size(), e = m.embed_dim();
  Tensor images(n, e), longs(n, e), shorts(n, e);
  auto put = [](Tensor &dst, std::size_t i, const Tensor &row) {
    std::copy(row.data().begin(), row.data().end(), dst.row_span(i).begin());
  };
  for (std::size_t i = 0; i < n; ++i) {
    put(images, i, encode_image(m, records[i].grid));
    put(longs, i, encode_text(m, records[i].long_tokens));
    put(shorts, i, encode_text(m, records[i].short_tokens));
  }
  EvalSnapshot s;
  s.num_records = n;
  s.long_retrieval = retrieval_eval(images, longs, paired_answers(n));
  s.short_retrieval = retrieval_eval(images, shorts, paired_answers(n));

  const auto names = scene_class_names();
  const Tensor prompts = class_prompt_embeddings(m, vocab, names, opt.prompt_template);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> scores(prompts.rows());
    for (std::size_t c = 0; c < prompts.rows(); ++c)
      scores[c] = cosine_similarity(images.row_span(i), prompts.row_span(c));
    correct += argmax_first(scores) == scene_class_of(records[i].grid);
  }
  s.classification_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(n);

  SeLoReport acc;
  acc.weights = opt.weights;
  for (const auto &r : records) {
    const auto map = selo_heatmap(m, r.grid, selo_query(r, vocab), opt.window, r.id);
    const auto rep = selo_metrics(map, r.gt_region, opt.weights);
    acc.r_su += rep.r_su;
    acc.r_as += rep.r_as;
    acc.r_da += rep.r_da;
  }
  const double dn = static_cast<double>(n);
  acc.r_su /= dn;
  acc.r_as /= dn;
  acc.r_da /= dn;
  acc.r_mi = compose_rmi(acc.r_su, acc.r_as, acc.r_da, acc.weights);
  s.selo = acc;
  return s;
}

} // namespace dgrain
