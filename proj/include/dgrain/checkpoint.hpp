// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout:
//
//   DGRAIN1 <name>=<rows>x<cols> <name>=<rows>x<cols> ...\n
//   <payload>
//
// The header is a single ASCII line. Tensor names, in declaration order, are
// token_table, pe, [attn_q, attn_k, attn_v], text_proj, cell_table,
// image_proj, log_tau; the attn_* entries are present only for models with
// attention. The payload is every tensor's values in header order, each
// tensor row-major, each value an IEEE-754 binary64 in little-endian byte
// order. Nothing follows the payload.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "dgrain/model.hpp"

namespace dgrain {

inline constexpr const char *kCheckpointMagic = "DGRAIN1";

namespace detail {
inline void put_le_f64(std::ostream &os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i)
    b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(b, 8);
}
inline double get_le_f64(std::istream &is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char *>(b), 8))
    throw ParseError(2, "checkpoint payload truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}
} // namespace detail

/// "DGRAIN1 name=RxC ..." for `m`, without the newline.
inline std::string checkpoint_header(const ModelParams &m) {
  std::string h = kCheckpointMagic;
  for (const auto &[name, t] : m.named_tensors())
    h += " " + name + "=" + t->shape_str();
  return h;
}

inline void save_checkpoint(const ModelParams &m, std::ostream &os) {
  os << checkpoint_header(m) << '\n';
  for (const auto &[name, t] : m.named_tensors())
    for (double v : t->data())
      detail::put_le_f64(os, v);
}

inline void save_checkpoint(const ModelParams &m, const std::string &path) {
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw IoError("cannot write checkpoint '" + path + "'");
  save_checkpoint(m, os);
  if (!os)
    throw IoError("write failed for '" + path + "'");
}

/// Parsed header: tensor name -> (rows, cols), in file order.
struct CheckpointHeader {
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> tensors;
};

inline CheckpointHeader parse_checkpoint_header(const std::string &line) {
  std::istringstream in(line);
  std::string magic;
  in >> magic;
  if (magic.rfind("DGRAIN", 0) != 0)
    throw ParseError(1, "not a checkpoint (magic '" + magic + "')");
  if (magic != kCheckpointMagic)
    throw VersionError("unsupported checkpoint version '" + magic + "'");
  CheckpointHeader h;
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    const auto x = tok.find('x', eq == std::string::npos ? 0 : eq);
    if (eq == std::string::npos || x == std::string::npos)
      throw ParseError(1, "bad header entry '" + tok + "'");
    try {
      std::size_t used = 0;
      const std::string rs = tok.substr(eq + 1, x - eq - 1);
      const std::string cs = tok.substr(x + 1);
      const auto r = std::stoul(rs, &used);
      if (used != rs.size())
        throw std::invalid_argument(rs);
      const auto c = std::stoul(cs, &used);
      if (used != cs.size())
        throw std::invalid_argument(cs);
      h.tensors.push_back({tok.substr(0, eq), {r, c}});
    } catch (const std::logic_error &) {
      throw ParseError(1, "bad header entry '" + tok + "'");
    }
  }
  return h;
}

/// Reads a checkpoint. Structural metadata that is not stored in the file
/// (pooling, KPS theta/lambda) is left at its defaults for the caller to
/// set from its run configuration.
inline ModelParams load_checkpoint(std::istream &is) {
  std::string line;
  if (!std::getline(is, line))
    throw ParseError(1, "empty checkpoint");
  const CheckpointHeader h = parse_checkpoint_header(line);
  std::map<std::string, Tensor> found;
  for (const auto &[name, shape] : h.tensors) {
    if (found.count(name))
      throw ParseError(1, "duplicate tensor '" + name + "'");
    Tensor t(shape.first, shape.second);
    for (double &v : t.data())
      v = detail::get_le_f64(is);
    found.emplace(name, std::move(t));
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw ParseError(2, "trailing bytes after checkpoint payload");

  ModelParams m;
  m.text.attention = found.count("attn_q") > 0;
  for (auto &[name, slot] : m.named_tensors()) {
    auto it = found.find(name);
    if (it == found.end())
      throw ParseError(1, "missing tensor '" + name + "'");
    *slot = std::move(it->second);
    found.erase(it);
  }
  if (!found.empty())
    throw ParseError(1, "unknown tensor '" + found.begin()->first + "'");
  const std::size_t d = m.text.token_table.cols();
  if (m.text.pe.entries.cols() != d || m.text.proj.rows() != d ||
      m.image.cell_table.cols() != d || m.image.proj.rows() != d ||
      m.image.proj.cols() != m.text.proj.cols() || !m.log_tau.is_scalar())
    throw DimensionError("checkpoint tensor shapes are inconsistent");
  if (m.text.attention &&
      (m.text.wq.rows() != d || m.text.wq.cols() != d || m.text.wk.rows() != d ||
       m.text.wk.cols() != d || m.text.wv.rows() != d || m.text.wv.cols() != d))
    throw DimensionError("checkpoint attention shapes are inconsistent");
  return m;
}

inline ModelParams load_checkpoint(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw IoError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(is);
}

} // namespace dgrain
