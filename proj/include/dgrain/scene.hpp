// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dgrain/grid.hpp"
#include "dgrain/random.hpp"
#include "dgrain/vocab.hpp"

namespace dgrain {

enum class RelationKind { LeftOf, RightOf, Above, Below, Between, SurroundedBy };

inline constexpr std::array<RelationKind, 6> kAllRelations = {
    RelationKind::LeftOf, RelationKind::RightOf, RelationKind::Above,
    RelationKind::Below,  RelationKind::Between, RelationKind::SurroundedBy};

/// Caption surface phrase of each relation.
inline const char *relation_phrase(RelationKind k) {
  switch (k) {
  case RelationKind::LeftOf: return "to the left of";
  case RelationKind::RightOf: return "to the right of";
  case RelationKind::Above: return "above";
  case RelationKind::Below: return "below";
  case RelationKind::Between: return "between";
  case RelationKind::SurroundedBy: return "surrounded by";
  }
  return "";
}

struct SceneObject {
  std::size_t category = 0;
  std::size_t attribute = 0;
  Box region;
  int count = 1;
  /// For a ring object: index of the object it encloses. Its cells are the
  /// region minus the enclosed object's region.
  std::optional<std::size_t> ring_of;

  bool covers(std::size_t r, std::size_t c, const std::vector<SceneObject> &all) const {
    if (!region.contains(r, c))
      return false;
    return !ring_of || !all[*ring_of].region.contains(r, c);
  }
};

struct Relation {
  std::size_t subject = 0;
  RelationKind kind = RelationKind::LeftOf;
  std::vector<std::size_t> objects; // two for Between, otherwise one

  friend bool operator==(const Relation &, const Relation &) = default;
};

struct Scene {
  std::size_t scene_class = 0;
  Grid grid;
  std::vector<SceneObject> objects; // objects[0] is the primary object
  std::vector<Relation> relations;
};

// Geometry ------------------------------------------------------------------

inline bool box_left_of(const Box &a, const Box &b) { return a.c1 <= b.c0; }
inline bool box_above(const Box &a, const Box &b) { return a.r1 <= b.r0; }
inline bool rows_share(const Box &a, const Box &b, const Box &c) {
  return std::max({a.r0, b.r0, c.r0}) < std::min({a.r1, b.r1, c.r1});
}
inline bool cols_share(const Box &a, const Box &b, const Box &c) {
  return std::max({a.c0, b.c0, c.c0}) < std::min({a.c1, b.c1, c.c1});
}

/// Subject strictly inside the span of the outer pair along a common row
/// band (or column band), all three regions collinear.
inline bool box_between(const Box &s, const Box &a, const Box &b) {
  const bool horiz = rows_share(s, a, b) &&
                     ((box_left_of(a, s) && box_left_of(s, b)) ||
                      (box_left_of(b, s) && box_left_of(s, a)));
  const bool vert = cols_share(s, a, b) &&
                    ((box_above(a, s) && box_above(s, b)) ||
                     (box_above(b, s) && box_above(s, a)));
  return horiz || vert;
}

/// `outer` contains `inner` with at least one cell of margin on every side.
inline bool box_surrounds(const Box &outer, const Box &inner) {
  return outer.r0 < inner.r0 && outer.c0 < inner.c0 && inner.r1 < outer.r1 &&
         inner.c1 < outer.c1;
}

inline bool relation_holds(const Scene &s, const Relation &rel) {
  const auto n = s.objects.size();
  if (rel.subject >= n)
    return false;
  for (auto o : rel.objects)
    if (o >= n || o == rel.subject)
      return false;
  const Box &a = s.objects[rel.subject].region;
  const std::size_t want = rel.kind == RelationKind::Between ? 2 : 1;
  if (rel.objects.size() != want)
    return false;
  const Box &b = s.objects[rel.objects[0]].region;
  switch (rel.kind) {
  case RelationKind::LeftOf: return box_left_of(a, b);
  case RelationKind::RightOf: return box_left_of(b, a);
  case RelationKind::Above: return box_above(a, b);
  case RelationKind::Below: return box_above(b, a);
  case RelationKind::Between:
    return rel.objects[0] != rel.objects[1] &&
           box_between(a, b, s.objects[rel.objects[1]].region);
  case RelationKind::SurroundedBy: return box_surrounds(b, a);
  }
  return false;
}

/// Object cell count; ring objects exclude the region they enclose.
inline std::size_t object_cells(const Scene &s, std::size_t i) {
  const auto &o = s.objects[i];
  std::size_t area = o.region.area();
  if (o.ring_of)
    area -= s.objects[*o.ring_of].region.area();
  return area;
}

/// Number of instances a caption reports for an object of `cells` cells.
constexpr int count_for_cells(std::size_t cells) {
  return cells <= 2 ? 1 : cells <= 4 ? 2 : 3;
}

// Generation ----------------------------------------------------------------

struct GeneratorConfig {
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t min_objects = 3;
  std::size_t max_objects = 5;
  std::size_t max_object_side = 3;
  double between_prob = 0.35;
  double surround_prob = 0.3;
  /// Indices into world::kCategories / kAttributes / kSceneClasses.
  std::vector<std::size_t> categories;
  std::vector<std::size_t> attributes;
  std::vector<std::size_t> scene_classes;
  /// Caption length targets (tokens, including <start>/<end>).
  double long_mean = 86.0;
  double long_sd = 12.0;
  double short_mean = 32.0;
  double short_sd = 5.0;

  const std::vector<std::size_t> &category_pool() const { return pool(categories, world::kNumCategories, all_cat_); }
  const std::vector<std::size_t> &attribute_pool() const { return pool(attributes, world::kNumAttributes, all_attr_); }
  const std::vector<std::size_t> &scene_pool() const { return pool(scene_classes, world::kNumSceneClasses, all_scene_); }

private:
  static const std::vector<std::size_t> &pool(const std::vector<std::size_t> &given,
                                              std::size_t n,
                                              std::vector<std::size_t> &cache) {
    if (!given.empty())
      return given;
    if (cache.empty())
      for (std::size_t i = 0; i < n; ++i)
        cache.push_back(i);
    return cache;
  }
  mutable std::vector<std::size_t> all_cat_, all_attr_, all_scene_;
};

/// Categories a scene class prefers for its primary object.
inline std::array<std::size_t, 2> preferred_categories(std::size_t scene_class) {
  // building house tree road pond ship airplane car tank field court pool
  static constexpr std::array<std::array<std::size_t, 2>, 8> table = {{
      {1, 0},  // residential: house, building
      {8, 0},  // industrial: tank, building
      {5, 3},  // harbor: ship, road
      {9, 4},  // farmland: field, pond
      {2, 4},  // forest: tree, pond
      {6, 3},  // airport: airplane, road
      {7, 3},  // parking: car, road
      {10, 11} // park: court, pool
  }};
  return table[scene_class % table.size()];
}

namespace detail {

inline void validate(const GeneratorConfig &cfg) {
  if (cfg.height < 2 || cfg.width < 2)
    throw GenerationError("grid must be at least 2x2");
  if (cfg.category_pool().empty() || cfg.attribute_pool().empty() ||
      cfg.scene_pool().empty())
    throw GenerationError("category, attribute and scene pools must be non-empty");
  for (auto c : cfg.category_pool())
    if (c >= world::kNumCategories)
      throw GenerationError("category index out of range");
  for (auto a : cfg.attribute_pool())
    if (a >= world::kNumAttributes)
      throw GenerationError("attribute index out of range");
  for (auto s : cfg.scene_pool())
    if (s >= world::kNumSceneClasses)
      throw GenerationError("scene class index out of range");
  if (cfg.min_objects < 1 || cfg.min_objects > cfg.max_objects)
    throw GenerationError("need 1 <= min_objects <= max_objects");
  if (cfg.max_object_side < 1)
    throw GenerationError("max_object_side must be >= 1");
  if (cfg.min_objects > cfg.height * cfg.width)
    throw GenerationError("more objects (" + std::to_string(cfg.min_objects) +
                          ") than cells (" +
                          std::to_string(cfg.height * cfg.width) + ")");
  if (cfg.min_objects > cfg.category_pool().size() * cfg.attribute_pool().size())
    throw GenerationError("not enough distinct category/attribute pairs");
}

inline std::optional<Scene> try_generate(Rng &rng, const GeneratorConfig &cfg) {
  Scene s;
  const auto &scenes = cfg.scene_pool();
  const auto &cats = cfg.category_pool();
  const auto &attrs = cfg.attribute_pool();
  s.scene_class = scenes[rng.below(scenes.size())];

  const std::size_t target = static_cast<std::size_t>(
      rng.range(static_cast<int>(cfg.min_objects), static_cast<int>(cfg.max_objects)));
  std::vector<std::pair<std::size_t, std::size_t>> used;
  auto fresh_identity = [&](std::optional<std::size_t> want_cat)
      -> std::optional<std::pair<std::size_t, std::size_t>> {
    for (int attempt = 0; attempt < 64; ++attempt) {
      const std::size_t c = want_cat ? *want_cat : cats[rng.below(cats.size())];
      const std::size_t a = attrs[rng.below(attrs.size())];
      if (std::find(used.begin(), used.end(), std::pair{c, a}) == used.end()) {
        used.emplace_back(c, a);
        return std::pair{c, a};
      }
    }
    return std::nullopt;
  };
  auto random_box = [&](std::size_t min_side) {
    const std::size_t hmax = std::min(cfg.max_object_side, cfg.height);
    const std::size_t wmax = std::min(cfg.max_object_side, cfg.width);
    const std::size_t lo_h = std::min(min_side, hmax), lo_w = std::min(min_side, wmax);
    const auto h = static_cast<std::size_t>(rng.range(static_cast<int>(lo_h), static_cast<int>(hmax)));
    const auto w = static_cast<std::size_t>(rng.range(static_cast<int>(lo_w), static_cast<int>(wmax)));
    const auto r0 = rng.below(cfg.height - h + 1);
    const auto c0 = rng.below(cfg.width - w + 1);
    return Box{r0, c0, r0 + h, c0 + w};
  };

  // Primary object: a preferred category of the scene class when the pool
  // allows it, and at least 2x2 when the grid and side limit allow it.
  {
    std::optional<std::size_t> want;
    std::vector<std::size_t> pref;
    for (auto c : preferred_categories(s.scene_class))
      if (std::find(cats.begin(), cats.end(), c) != cats.end())
        pref.push_back(c);
    if (!pref.empty())
      want = pref[rng.below(pref.size())];
    auto id = fresh_identity(want);
    if (!id)
      return std::nullopt;
    s.objects.push_back({id->first, id->second, random_box(2), 1, std::nullopt});
  }
  while (s.objects.size() < target) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const Box b = random_box(1);
      bool clash = false;
      for (const auto &o : s.objects)
        clash = clash || o.region.overlaps(b);
      if (clash)
        continue;
      auto id = fresh_identity(std::nullopt);
      if (!id)
        return std::nullopt;
      s.objects.push_back({id->first, id->second, b, 1, std::nullopt});
      placed = true;
    }
    if (!placed)
      break;
  }
  if (s.objects.size() < cfg.min_objects)
    return std::nullopt;

  // Optional ring around one solid object.
  if (s.objects.size() < cfg.max_objects && rng.chance(cfg.surround_prob)) {
    const std::size_t inner = rng.below(s.objects.size());
    const Box &ib = s.objects[inner].region;
    if (ib.r0 >= 1 && ib.c0 >= 1 && ib.r1 + 1 <= cfg.height &&
        ib.c1 + 1 <= cfg.width) {
      const Box ring{ib.r0 - 1, ib.c0 - 1, ib.r1 + 1, ib.c1 + 1};
      bool clash = false;
      for (std::size_t i = 0; i < s.objects.size(); ++i)
        clash = clash || (i != inner && s.objects[i].region.overlaps(ring));
      if (!clash)
        if (auto id = fresh_identity(std::nullopt)) {
          s.objects.push_back({id->first, id->second, ring, 1, inner});
          s.relations.push_back(
              {inner, RelationKind::SurroundedBy, {s.objects.size() - 1}});
        }
    }
  }

  // Pairwise relations: each later solid object is placed relative to one
  // earlier solid object.
  std::vector<std::size_t> solid;
  for (std::size_t i = 0; i < s.objects.size(); ++i)
    if (!s.objects[i].ring_of)
      solid.push_back(i);
  for (std::size_t k = 1; k < solid.size(); ++k) {
    const std::size_t i = solid[k], j = solid[rng.below(k)];
    std::vector<RelationKind> holds;
    for (RelationKind kind : {RelationKind::LeftOf, RelationKind::RightOf,
                              RelationKind::Above, RelationKind::Below})
      if (relation_holds(s, Relation{i, kind, {j}}))
        holds.push_back(kind);
    if (!holds.empty())
      s.relations.push_back({i, holds[rng.below(holds.size())], {j}});
  }
  if (rng.chance(cfg.between_prob)) {
    std::vector<Relation> cands;
    for (auto a : solid)
      for (auto m : solid)
        for (auto b : solid)
          if (a < b && m != a && m != b &&
              relation_holds(s, Relation{m, RelationKind::Between, {a, b}}))
            cands.push_back({m, RelationKind::Between, {a, b}});
    if (!cands.empty())
      s.relations.push_back(cands[rng.below(cands.size())]);
  }

  for (std::size_t i = 0; i < s.objects.size(); ++i)
    s.objects[i].count = count_for_cells(object_cells(s, i));

  s.grid = Grid(cfg.height, cfg.width, world::background_code(s.scene_class));
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    const auto &o = s.objects[i];
    const CellCode code = world::object_code(o.category, o.attribute);
    for (std::size_t r = o.region.r0; r < o.region.r1; ++r)
      for (std::size_t c = o.region.c0; c < o.region.c1; ++c)
        if (o.covers(r, c, s.objects))
          s.grid.at(r, c) = code;
  }
  return s;
}

} // namespace detail

/// Deterministic scene for (seed, cfg). Object 0 is the primary object.
inline Scene generate_scene(std::uint64_t seed, const GeneratorConfig &cfg) {
  detail::validate(cfg);
  for (std::uint64_t attempt = 0; attempt < 32; ++attempt) {
    Rng rng(mix64(seed, attempt));
    if (auto s = detail::try_generate(rng, cfg))
      return *std::move(s);
  }
  throw GenerationError("could not place " + std::to_string(cfg.min_objects) +
                        " objects on a " + std::to_string(cfg.height) + "x" +
                        std::to_string(cfg.width) + " grid");
}

} // namespace dgrain
