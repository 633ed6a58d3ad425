// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dgrain/error.hpp"

namespace dgrain {

using CellCode = std::uint32_t;
using TokenId = std::uint32_t;

/// Symbolic image: H x W cell codes, row-major.
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<CellCode> codes;

  Grid() = default;
  Grid(std::size_t h, std::size_t w, CellCode fill = 0)
      : height(h), width(w), codes(h * w, fill) {}
  Grid(std::size_t h, std::size_t w, std::vector<CellCode> cells)
      : height(h), width(w), codes(std::move(cells)) {
    if (codes.size() != h * w)
      throw DimensionError("grid " + std::to_string(h) + "x" + std::to_string(w) + " given " +
                           std::to_string(codes.size()) + " cells");
  }

  CellCode &at(std::size_t r, std::size_t c) { return codes[r * width + c]; }
  CellCode at(std::size_t r, std::size_t c) const { return codes[r * width + c]; }
  std::size_t cells() const noexcept { return codes.size(); }

  friend bool operator==(const Grid &, const Grid &) = default;
};

/// Half-open cell rectangle [r0, r1) x [c0, c1).
struct Box {
  std::size_t r0 = 0, c0 = 0, r1 = 0, c1 = 0;

  std::size_t height() const noexcept { return r1 > r0 ? r1 - r0 : 0; }
  std::size_t width() const noexcept { return c1 > c0 ? c1 - c0 : 0; }
  std::size_t area() const noexcept { return height() * width(); }
  bool contains(std::size_t r, std::size_t c) const noexcept {
    return r >= r0 && r < r1 && c >= c0 && c < c1;
  }
  bool overlaps(const Box &o) const noexcept {
    return r0 < o.r1 && o.r0 < r1 && c0 < o.c1 && o.c0 < c1;
  }
  bool fits(std::size_t h, std::size_t w) const noexcept {
    return r1 <= h && c1 <= w;
  }
  friend bool operator==(const Box &, const Box &) = default;
};

/// Copy of the window `box` of `g`.
inline Grid crop(const Grid &g, const Box &box) {
  if (!box.fits(g.height, g.width) || box.area() == 0)
    throw ParameterError("crop window outside grid");
  Grid out(box.height(), box.width());
  for (std::size_t r = 0; r < out.height; ++r)
    for (std::size_t c = 0; c < out.width; ++c)
      out.at(r, c) = g.at(box.r0 + r, box.c0 + c);
  return out;
}

} // namespace dgrain
