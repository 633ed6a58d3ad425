// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Dataset file format, one record per '\n'-terminated line:
//
//   v1 id=<id> split=<train|test> h=<H> w=<W> grid=<c,c,...> gt=<r0,c0,r1,c1>
//      long=<t,t,...> short=<t,t,...>
//
// (shown wrapped; on disk it is a single line). Fields are separated by one
// space and appear in exactly this order. `grid` holds H*W cell codes in
// row-major order, `gt` is the half-open ground-truth box used for semantic
// localisation, and `long`/`short` are token ids of the standard vocabulary
// including the <start>/<end> markers. A first token of the form v<digits>
// other than v1 is a version error; any other deviation is a parse error
// naming the line. A final line without its '\n' is treated as truncated.
#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "dgrain/captions.hpp"

namespace dgrain {

enum class Split { Train, Test };

inline const char *to_string(Split s) { return s == Split::Train ? "train" : "test"; }

struct SceneRecord {
  std::string id;
  Split split = Split::Train;
  Grid grid;
  Box gt_region;
  std::vector<TokenId> long_tokens;
  std::vector<TokenId> short_tokens;

  friend bool operator==(const SceneRecord &, const SceneRecord &) = default;
};

inline constexpr std::string_view kRecordVersion = "v1";

namespace detail {

template <class T> void put_list(std::string &out, const std::vector<T> &v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i)
      out += ',';
    out += std::to_string(v[i]);
  }
}

inline std::uint64_t parse_uint(std::string_view s, std::size_t line,
                                std::string_view field) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw ParseError(line, "bad number '" + std::string(s) + "' in field " +
                               std::string(field));
  return v;
}

template <class T>
std::vector<T> parse_list(std::string_view s, std::size_t line,
                          std::string_view field) {
  std::vector<T> out;
  if (s.empty())
    return out;
  std::size_t i = 0;
  while (true) {
    const std::size_t j = s.find(',', i);
    const auto piece = s.substr(i, j == std::string_view::npos ? s.npos : j - i);
    const auto v = parse_uint(piece, line, field);
    if (v > std::numeric_limits<T>::max())
      throw ParseError(line, "value out of range in field " + std::string(field));
    out.push_back(static_cast<T>(v));
    if (j == std::string_view::npos)
      break;
    i = j + 1;
  }
  return out;
}

inline bool looks_like_version(std::string_view tok) {
  if (tok.size() < 2 || tok[0] != 'v')
    return false;
  for (char c : tok.substr(1))
    if (c < '0' || c > '9')
      return false;
  return true;
}

} // namespace detail

inline std::string format_record(const SceneRecord &r) {
  std::string out(kRecordVersion);
  out += " id=" + r.id;
  out += std::string(" split=") + to_string(r.split);
  out += " h=" + std::to_string(r.grid.height);
  out += " w=" + std::to_string(r.grid.width);
  out += " grid=";
  detail::put_list(out, r.grid.codes);
  out += " gt=" + std::to_string(r.gt_region.r0) + "," +
         std::to_string(r.gt_region.c0) + "," + std::to_string(r.gt_region.r1) +
         "," + std::to_string(r.gt_region.c1);
  out += " long=";
  detail::put_list(out, r.long_tokens);
  out += " short=";
  detail::put_list(out, r.short_tokens);
  return out;
}

/// Parses one line (without its newline). `line_no` is reported in errors.
inline SceneRecord parse_record(std::string_view line, std::size_t line_no) {
  std::vector<std::string_view> toks;
  for (std::size_t i = 0; i <= line.size();) {
    const std::size_t j = std::min(line.find(' ', i), line.size());
    toks.push_back(line.substr(i, j - i));
    i = j + 1;
  }
  if (toks.empty() || toks[0] != kRecordVersion) {
    if (!toks.empty() && detail::looks_like_version(toks[0]))
      throw VersionError("line " + std::to_string(line_no) +
                         ": unsupported record version '" + std::string(toks[0]) + "'");
    throw ParseError(line_no, "missing record version tag");
  }
  static constexpr std::array<std::string_view, 8> keys = {
      "id", "split", "h", "w", "grid", "gt", "long", "short"};
  if (toks.size() != keys.size() + 1)
    throw ParseError(line_no, "expected " + std::to_string(keys.size()) +
                                  " fields, found " + std::to_string(toks.size() - 1));
  std::array<std::string_view, 8> val;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const auto t = toks[k + 1];
    if (t.size() <= keys[k].size() || t.substr(0, keys[k].size()) != keys[k] ||
        t[keys[k].size()] != '=')
      throw ParseError(line_no, "expected field '" + std::string(keys[k]) + "='");
    val[k] = t.substr(keys[k].size() + 1);
  }
  SceneRecord r;
  r.id = std::string(val[0]);
  if (r.id.empty())
    throw ParseError(line_no, "empty id");
  if (val[1] == "train")
    r.split = Split::Train;
  else if (val[1] == "test")
    r.split = Split::Test;
  else
    throw ParseError(line_no, "bad split '" + std::string(val[1]) + "'");
  r.grid.height = detail::parse_uint(val[2], line_no, "h");
  r.grid.width = detail::parse_uint(val[3], line_no, "w");
  r.grid.codes = detail::parse_list<CellCode>(val[4], line_no, "grid");
  if (r.grid.codes.size() != r.grid.height * r.grid.width || r.grid.codes.empty())
    throw ParseError(line_no, "grid has " + std::to_string(r.grid.codes.size()) +
                                  " codes, expected h*w");
  const auto gt = detail::parse_list<std::size_t>(val[5], line_no, "gt");
  if (gt.size() != 4)
    throw ParseError(line_no, "gt needs 4 values");
  r.gt_region = {gt[0], gt[1], gt[2], gt[3]};
  if (!r.gt_region.fits(r.grid.height, r.grid.width) || r.gt_region.area() == 0)
    throw ParseError(line_no, "gt box outside grid or empty");
  r.long_tokens = detail::parse_list<TokenId>(val[6], line_no, "long");
  r.short_tokens = detail::parse_list<TokenId>(val[7], line_no, "short");
  if (r.long_tokens.empty() || r.short_tokens.empty())
    throw ParseError(line_no, "empty caption");
  return r;
}

/// Appends records to a stream, one line each.
class RecordWriter {
public:
  explicit RecordWriter(const std::string &path) : os_(path, std::ios::binary) {
    if (!os_)
      throw IoError("cannot write '" + path + "'");
  }
  void write(const SceneRecord &r) { os_ << format_record(r) << '\n'; }
  void close() {
    os_.flush();
    if (!os_)
      throw IoError("write failed");
    os_.close();
  }

private:
  std::ofstream os_;
};

/// Streaming reader: holds one line at a time.
class RecordReader {
public:
  explicit RecordReader(const std::string &path) : is_(path, std::ios::binary), path_(path) {
    if (!is_)
      throw IoError("cannot open dataset '" + path + "'");
  }

  std::optional<SceneRecord> next() {
    if (!std::getline(is_, line_))
      return std::nullopt;
    ++line_no_;
    if (is_.eof())
      throw ParseError(line_no_, "truncated final line (no newline)");
    return parse_record(line_, line_no_);
  }
  std::size_t line() const noexcept { return line_no_; }

private:
  std::ifstream is_;
  std::string path_;
  std::string line_;
  std::size_t line_no_ = 0;
};

inline void write_records(const std::vector<SceneRecord> &records,
                          const std::string &path) {
  RecordWriter w(path);
  for (const auto &r : records)
    w.write(r);
  w.close();
}

inline std::vector<SceneRecord> read_records(const std::string &path) {
  RecordReader reader(path);
  std::vector<SceneRecord> out;
  while (auto r = reader.next())
    out.push_back(*std::move(r));
  return out;
}

// Corpus generation -----------------------------------------------------------

struct CorpusConfig {
  GeneratorConfig generator;
  /// Every `test_every`-th record (index % test_every == test_every - 1) goes
  /// to the test split.
  std::size_t test_every = 10;
};

inline std::uint64_t grid_hash(const Grid &g) {
  std::uint64_t h = mix64(g.height, g.width);
  for (CellCode c : g.codes)
    h = mix64(h, c);
  return h;
}

struct GeneratedRecord {
  Scene scene;
  SceneRecord record;
};

/// Generates `count` records deterministically from `master_seed`, calling
/// `sink` for each in order. Grids are unique across the whole corpus, so
/// no grid appears in both splits.
inline void generate_corpus(std::uint64_t master_seed, std::size_t count,
                            const CorpusConfig &cfg, const Vocabulary &vocab,
                            const std::function<void(GeneratedRecord &&)> &sink) {
  if (cfg.test_every == 0)
    throw ParameterError("test_every must be positive");
  std::unordered_set<std::uint64_t> seen;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (attempt > 1000)
        throw GenerationError("cannot find a fresh grid for record " + std::to_string(i));
      const std::uint64_t seed = mix64(master_seed, (attempt << 32) | i);
      Scene scene = generate_scene(seed, cfg.generator);
      if (!seen.insert(grid_hash(scene.grid)).second)
        continue;
      Captions caps = render_captions(scene, vocab, cfg.generator, seed);
      char id[32];
      std::snprintf(id, sizeof id, "scene-%06zu", i);
      SceneRecord rec{id,
                      i % cfg.test_every == cfg.test_every - 1 ? Split::Test : Split::Train,
                      scene.grid,
                      scene.objects.front().region,
                      std::move(caps.long_tokens),
                      std::move(caps.short_tokens)};
      sink(GeneratedRecord{std::move(scene), std::move(rec)});
      break;
    }
  }
}

inline std::vector<SceneRecord> generate_records(std::uint64_t master_seed,
                                                 std::size_t count,
                                                 const CorpusConfig &cfg = {},
                                                 const Vocabulary &vocab = Vocabulary::standard()) {
  std::vector<SceneRecord> out;
  out.reserve(count);
  generate_corpus(master_seed, count, cfg, vocab,
                  [&](GeneratedRecord &&g) { out.push_back(std::move(g.record)); });
  return out;
}

} // namespace dgrain
