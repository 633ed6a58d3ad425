// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dgrain/grid.hpp"

namespace dgrain {

/// Symbolic world the generator draws from. Cell code layout: codes
/// [0, kNumSceneClasses) are scene backgrounds; object code is
/// kNumSceneClasses + category * kNumAttributes + attribute.
namespace world {

inline constexpr std::array<std::string_view, 8> kSceneClasses = {
    "residential", "industrial", "harbor",  "farmland",
    "forest",      "airport",    "parking", "park"};
inline constexpr std::array<std::string_view, 12> kCategories = {
    "building", "house", "tree", "road",  "pond",  "ship",
    "airplane", "car",   "tank", "field", "court", "pool"};
inline constexpr std::array<std::string_view, 12> kCategoryPlurals = {
    "buildings", "houses", "trees", "roads",  "ponds",  "ships",
    "airplanes", "cars",   "tanks", "fields", "courts", "pools"};
inline constexpr std::array<std::string_view, 8> kAttributes = {
    "white", "red", "gray", "green", "blue", "large", "small", "dark"};
inline constexpr std::array<std::string_view, 4> kCountWords = {"", "a", "two",
                                                                 "three"};

inline constexpr std::size_t kNumSceneClasses = kSceneClasses.size();
inline constexpr std::size_t kNumCategories = kCategories.size();
inline constexpr std::size_t kNumAttributes = kAttributes.size();
inline constexpr std::size_t kNumCellCodes =
    kNumSceneClasses + kNumCategories * kNumAttributes;

constexpr CellCode background_code(std::size_t scene_class) {
  return static_cast<CellCode>(scene_class);
}
constexpr CellCode object_code(std::size_t category, std::size_t attribute) {
  return static_cast<CellCode>(kNumSceneClasses + category * kNumAttributes +
                               attribute);
}
constexpr bool is_background(CellCode c) { return c < kNumSceneClasses; }
constexpr std::size_t code_category(CellCode c) {
  return (c - kNumSceneClasses) / kNumAttributes;
}
constexpr std::size_t code_attribute(CellCode c) {
  return (c - kNumSceneClasses) % kNumAttributes;
}

/// Scene-neutral sentences used to pad captions to their target lengths.
/// None of them names a class, category, attribute or spatial relation.
inline constexpr std::array<std::string_view, 14> kFillerSentences = {
    "the image is captured from a high altitude .",
    "this remote sensing image has a high resolution .",
    "the overall scene looks clear and well organized .",
    "the picture was taken on a sunny day .",
    "the colors in the picture look natural and bright .",
    "no clouds can be seen in this view .",
    "the details are sharp and easy to recognize .",
    "it is a typical overhead view .",
    "the lighting is even across the whole scene .",
    "shadows are short because the sun is high .",
    "the texture of the ground is fine .",
    "the layout of the scene is regular .",
    "overall the view is calm and quiet .",
    "this is an ordinary scene .",
};

inline constexpr std::string_view kTemplateWords =
    "a an the of satellite photo area with there is are located to left "
    "right above below between and surrounded by two three . ,";

} // namespace world

inline constexpr const char *kPadToken = "<pad>";
inline constexpr const char *kStartToken = "<start>";
inline constexpr const char *kEndToken = "<end>";

/// Token <-> id bijection. Ids 0, 1, 2 are reserved for <pad>, <start> and
/// <end>.
class Vocabulary {
public:
  static constexpr TokenId kPad = 0, kStart = 1, kEnd = 2;

  explicit Vocabulary(const std::vector<std::string> &words) {
    for (const char *r : {kPadToken, kStartToken, kEndToken})
      add(r);
    for (const auto &w : words)
      add(w);
  }

  /// The frozen vocabulary every dataset of this version is written with.
  static const Vocabulary &standard() {
    static const Vocabulary v(standard_words());
    return v;
  }
  static constexpr const char *kVersion = "dgrain-vocab-1";

  static std::vector<std::string> standard_words() {
    std::vector<std::string> words;
    auto split_into = [&](std::string_view text) {
      std::istringstream in{std::string(text)};
      std::string w;
      while (in >> w)
        words.push_back(w);
    };
    split_into(world::kTemplateWords);
    for (auto s : world::kSceneClasses)
      words.emplace_back(s);
    for (auto s : world::kCategories)
      words.emplace_back(s);
    for (auto s : world::kCategoryPlurals)
      words.emplace_back(s);
    for (auto s : world::kAttributes)
      words.emplace_back(s);
    for (auto s : world::kFillerSentences)
      split_into(s);
    return words;
  }

  std::size_t size() const noexcept { return words_.size(); }
  bool contains(const std::string &w) const { return ids_.count(w) > 0; }

  TokenId id(const std::string &w) const {
    auto it = ids_.find(w);
    if (it == ids_.end())
      throw VocabError("word '" + w + "' not in vocabulary");
    return it->second;
  }
  const std::string &word(TokenId id) const {
    if (id >= words_.size())
      throw VocabError("token id " + std::to_string(id) + " out of range");
    return words_[id];
  }

  /// Whitespace tokenisation wrapped in <start> ... <end>.
  std::vector<TokenId> encode(std::string_view text) const {
    std::vector<TokenId> out{kStart};
    std::istringstream in{std::string(text)};
    std::string w;
    while (in >> w)
      out.push_back(id(w));
    out.push_back(kEnd);
    return out;
  }

  /// Space-joined words, without the <start>/<end> markers.
  std::string decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId t : ids) {
      if (t == kStart || t == kEnd || t == kPad)
        continue;
      if (!out.empty())
        out += ' ';
      out += word(t);
    }
    return out;
  }

private:
  void add(const std::string &w) {
    if (ids_.count(w))
      return;
    ids_.emplace(w, static_cast<TokenId>(words_.size()));
    words_.push_back(w);
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> ids_;
};

} // namespace dgrain
