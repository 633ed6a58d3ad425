// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dgrain/scene.hpp"
#include "dgrain/vocab.hpp"

namespace dgrain {

inline constexpr std::size_t kLongMinTokens = 40, kLongMaxTokens = 200;
inline constexpr std::size_t kShortMinTokens = 5, kShortMaxTokens = 40;

struct Captions {
  std::vector<TokenId> long_tokens;
  std::vector<TokenId> short_tokens;
};

namespace detail {

using Sentence = std::vector<std::string>;

inline void append_words(Sentence &s, std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ')
      ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ')
      ++j;
    if (j > i)
      s.emplace_back(text.substr(i, j - i));
    i = j;
  }
}

inline std::string noun(const SceneObject &o) {
  return std::string(o.count > 1 ? world::kCategoryPlurals[o.category]
                                 : world::kCategories[o.category]);
}

inline Sentence definite(const SceneObject &o) {
  return {"the", std::string(world::kAttributes[o.attribute]), noun(o)};
}

inline Sentence scene_intro(std::size_t scene_class) {
  const std::string name(world::kSceneClasses[scene_class]);
  const bool vowel = std::string_view("aeiou").find(name[0]) != std::string_view::npos;
  return {"a", "satellite", "photo", "of", vowel ? "an" : "a", name, "area"};
}

/// "a red house" / "two red houses".
inline Sentence indefinite(const SceneObject &o) {
  return {o.count > 1 ? std::string(world::kCountWords[o.count]) : "a",
          std::string(world::kAttributes[o.attribute]), noun(o)};
}

inline Sentence object_sentence(const SceneObject &o) {
  Sentence s{"there", o.count > 1 ? "are" : "is"};
  for (auto &w : indefinite(o))
    s.push_back(w);
  s.push_back(".");
  return s;
}

inline Sentence relation_sentence(const Scene &scene, const Relation &r) {
  const auto &subj = scene.objects[r.subject];
  Sentence s = definite(subj);
  s.push_back(subj.count > 1 ? "are" : "is");
  if (r.kind != RelationKind::SurroundedBy)
    s.push_back("located");
  append_words(s, relation_phrase(r.kind));
  for (auto &w : definite(scene.objects[r.objects[0]]))
    s.push_back(w);
  if (r.kind == RelationKind::Between) {
    s.push_back("and");
    for (auto &w : definite(scene.objects[r.objects[1]]))
      s.push_back(w);
  }
  s.push_back(".");
  return s;
}

inline std::size_t word_count(const std::vector<Sentence> &ss) {
  std::size_t n = 0;
  for (const auto &s : ss)
    n += s.size();
  return n;
}

/// Inserts filler sentences at random boundaries (never before the first
/// sentence) while doing so moves the token count closer to `target`.
inline void pad_to_target(std::vector<Sentence> &sentences, double target,
                          std::size_t max_tokens, Rng &rng) {
  std::vector<std::size_t> order(world::kFillerSentences.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));
  for (std::size_t f : order) {
    Sentence filler;
    append_words(filler, world::kFillerSentences[f]);
    const double now = static_cast<double>(word_count(sentences) + 2);
    const double next = now + static_cast<double>(filler.size());
    if (next > static_cast<double>(max_tokens) ||
        std::abs(next - target) >= std::abs(now - target))
      continue;
    const std::size_t at = 1 + rng.below(sentences.size());
    sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(at),
                     std::move(filler));
  }
}

inline std::vector<TokenId> to_tokens(const std::vector<Sentence> &ss,
                                      const Vocabulary &vocab) {
  std::vector<TokenId> out{Vocabulary::kStart};
  for (const auto &s : ss)
    for (const auto &w : s)
      out.push_back(vocab.id(w));
  out.push_back(Vocabulary::kEnd);
  return out;
}

inline double draw_target(Rng &rng, double mean, double sd, std::size_t lo,
                          std::size_t hi) {
  const double t = mean + sd * rng.normal();
  return std::clamp(t, static_cast<double>(lo), static_cast<double>(hi));
}

} // namespace detail

/// Long caption: scene class, every object with its attribute and count,
/// every declared relation. Short caption: scene class and the primary
/// object only ("a <attr> <category>" alone for a single-object scene).
/// Both are padded with scene-neutral sentences toward length targets drawn
/// around cfg.long_mean / cfg.short_mean. Token counts include <start> and
/// <end>.
inline Captions render_captions(const Scene &scene, const Vocabulary &vocab,
                                const GeneratorConfig &cfg, std::uint64_t seed) {
  if (scene.objects.empty())
    throw GenerationError("render_captions: scene has no objects");
  Rng rng(mix64(seed, 0xca97105ULL));
  using detail::Sentence;

  std::vector<Sentence> long_s{detail::scene_intro(scene.scene_class)};
  long_s.back().push_back(".");
  for (const auto &o : scene.objects)
    long_s.push_back(detail::object_sentence(o));
  for (const auto &r : scene.relations)
    long_s.push_back(detail::relation_sentence(scene, r));
  detail::pad_to_target(
      long_s,
      detail::draw_target(rng, cfg.long_mean, cfg.long_sd, kLongMinTokens, kLongMaxTokens),
      kLongMaxTokens, rng);

  std::vector<Sentence> short_s;
  const SceneObject &primary = scene.objects.front();
  if (scene.objects.size() == 1) {
    short_s.push_back({"a", std::string(world::kAttributes[primary.attribute]),
                       std::string(world::kCategories[primary.category])});
  } else {
    Sentence s = detail::scene_intro(scene.scene_class);
    s.push_back("with");
    for (auto &w : detail::indefinite(primary))
      s.push_back(w);
    s.push_back(".");
    short_s.push_back(std::move(s));
    detail::pad_to_target(
        short_s,
        detail::draw_target(rng, cfg.short_mean, cfg.short_sd, kShortMinTokens, kShortMaxTokens),
        kShortMaxTokens, rng);
  }

  Captions c{detail::to_tokens(long_s, vocab), detail::to_tokens(short_s, vocab)};
  if (c.long_tokens.size() < kLongMinTokens || c.long_tokens.size() > kLongMaxTokens)
    throw GenerationError("long caption length " +
                          std::to_string(c.long_tokens.size()) + " outside [40, 200]");
  if (c.short_tokens.size() < kShortMinTokens || c.short_tokens.size() > kShortMaxTokens)
    throw GenerationError("short caption length " +
                          std::to_string(c.short_tokens.size()) + " outside [5, 40]");
  return c;
}

} // namespace dgrain
