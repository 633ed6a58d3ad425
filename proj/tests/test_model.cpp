// Copyright 2026 The dgrain Authors.
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "dgrain/checkpoint.hpp"
#include "dgrain/objective.hpp"
#include "test_support.hpp"

namespace dgrain {
namespace {

using testing::numeric_grad;
using testing::random_dim;
using testing::random_tensor;
using testing::relative_error;

PETable random_pe(std::mt19937_64 &gen, std::size_t len, std::size_t dim) {
  return PETable{random_tensor(gen, len, dim), 0, 1};
}

/// Least-squares weight w minimising |p - ((1-w) a + w b)| and its residual.
std::pair<double, double> recover_weight(std::span<const double> p, std::span<const double> a,
                                         std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    num += (p[j] - a[j]) * (b[j] - a[j]);
    den += (b[j] - a[j]) * (b[j] - a[j]);
  }
  const double w = den > 0.0 ? num / den : 0.0;
  double res = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j)
    res = std::max(res, std::abs(p[j] - ((1.0 - w) * a[j] + w * b[j])));
  return {w, res};
}

TEST(KpsStretch, ClipLengthTo248) {
  std::mt19937_64 gen(1);
  const PETable pe = random_pe(gen, 77, 8);
  const PETable out = kps_stretch(pe, 20, 4);
  EXPECT_EQ(out.length(), 248u);
  EXPECT_EQ(out.dim(), 8u);
}

TEST(KpsStretch, LambdaOneIsIdentity) {
  std::mt19937_64 gen(2);
  const PETable pe = random_pe(gen, 30, 5);
  for (auto mode : {StretchMode::OffsetMapped, StretchMode::Proportional})
    EXPECT_EQ(kps_stretch(pe, 7, 1, mode).entries, pe.entries);
}

TEST(KpsStretch, PrefixCopiedVerbatim) {
  std::mt19937_64 gen(3);
  const PETable pe = random_pe(gen, 77, 6);
  for (auto mode : {StretchMode::OffsetMapped, StretchMode::Proportional}) {
    const PETable out = kps_stretch(pe, 20, 4, mode);
    for (std::size_t p = 0; p <= 20; ++p)
      for (std::size_t j = 0; j < 6; ++j)
        EXPECT_EQ(out.entries(p, j), pe.entries(p, j));
  }
}

TEST(KpsStretch, OffsetMappedHitsOriginalEntries) {
  std::mt19937_64 gen(4);
  const PETable pe = random_pe(gen, 77, 6);
  const PETable out = kps_stretch(pe, 20, 4);
  // m(24) = 20 + 4/4 = 21 exactly.
  for (std::size_t j = 0; j < 6; ++j)
    EXPECT_EQ(out.entries(24, j), pe.entries(21, j));
  const auto s = stretch_source(24, 20, 4, StretchMode::OffsetMapped, 77);
  EXPECT_EQ(s.lo, 21u);
  EXPECT_EQ(s.omega, 0.0);
  // m(22) = 20.5: halfway between 20 and 21.
  const auto h = stretch_source(22, 20, 4, StretchMode::OffsetMapped, 77);
  EXPECT_EQ(h.lo, 20u);
  EXPECT_EQ(h.hi, 21u);
  EXPECT_EQ(h.omega, 0.5);
  // Last output position maps inside the table.
  EXPECT_LE(stretch_source(247, 20, 4, StretchMode::OffsetMapped, 77).hi, 76u);
  // Positions past m = 76 hold the final entry.
  for (std::size_t p = 244; p < 248; ++p)
    for (std::size_t j = 0; j < 6; ++j)
      EXPECT_EQ(out.entries(p, j), pe.entries(76, j));
}

TEST(KpsStretch, ProportionalReentersPrefix) {
  const auto s = stretch_source(21, 20, 4, StretchMode::Proportional, 77);
  EXPECT_EQ(s.lo, 5u);
  EXPECT_EQ(s.hi, 6u);
  EXPECT_DOUBLE_EQ(s.omega, 0.25);
}

TEST(KpsStretch, Errors) {
  std::mt19937_64 gen(5);
  const PETable pe = random_pe(gen, 10, 2);
  EXPECT_THROW(kps_stretch(pe, 10, 2), ParameterError);
  EXPECT_THROW(kps_stretch(pe, 3, 0), ParameterError);
}

TEST(KpsStretch, PropertyLengthsAndConvexity) {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = random_dim(gen, 1, 40);
    const std::size_t theta = random_dim(gen, 0, len - 1);
    const std::size_t lambda = random_dim(gen, 1, 8);
    const PETable pe = random_pe(gen, len, random_dim(gen, 2, 6));
    for (auto mode : {StretchMode::OffsetMapped, StretchMode::Proportional}) {
      const PETable out = kps_stretch(pe, theta, lambda, mode);
      ASSERT_EQ(out.length(), theta + lambda * (len - theta));
      std::size_t prev_lo = 0;
      for (std::size_t p = theta + 1; p < out.length(); ++p) {
        const auto s = stretch_source(p, theta, lambda, mode, len);
        ASSERT_LT(s.hi, len);
        ASSERT_LE(s.hi - s.lo, 1u);
        const auto [w, res] =
            recover_weight(out.entries.row_span(p), pe.entries.row_span(s.lo),
                           pe.entries.row_span(s.hi));
        EXPECT_LT(res, 1e-9);
        EXPECT_GE(w, -1e-9);
        EXPECT_LE(w, 1.0 + 1e-9);
        if (mode == StretchMode::OffsetMapped) {
          EXPECT_GE(s.lo, theta);
          EXPECT_GE(s.lo, prev_lo);
          prev_lo = s.lo;
        }
      }
    }
  }
}

// Encoders -----------------------------------------------------------------

ModelConfig small_config(bool attention) {
  ModelConfig c;
  c.vocab_size = 20;
  c.num_cell_codes = 12;
  c.model_dim = 6;
  c.embed_dim = 5;
  c.pe_origin_length = 12;
  c.kps_theta = 4;
  c.kps_lambda = 2;
  c.attention = attention;
  c.token_init_scale = 1.0;
  c.cell_init_scale = 1.0;
  c.pe_init_scale = 0.5;
  return c;
}

double cosine(const Tensor &a, const Tensor &b) {
  return cosine_similarity(a.data(), b.data());
}

TEST(EncodeText, Errors) {
  const ModelParams m = init_model(small_config(true), 1);
  EXPECT_THROW(encode_text(m, std::vector<TokenId>{}), InputError);
  EXPECT_THROW(encode_text(m, std::vector<TokenId>(m.text.pe.length() + 1, 3)),
               LengthExceededError);
  EXPECT_NO_THROW(encode_text(m, std::vector<TokenId>(m.text.pe.length(), 3)));
  EXPECT_THROW(encode_text(m, std::vector<TokenId>{1, 20}), InputError);
}

TEST(EncodeText, ZeroParamsAreDegenerate) {
  ModelParams m = init_model(small_config(true), 1);
  for (auto &[name, t] : m.named_tensors())
    if (name != "log_tau")
      std::fill(t->data().begin(), t->data().end(), 0.0);
  EXPECT_THROW(encode_text(m, std::vector<TokenId>{1, 2}), DegenerateVectorError);
  EXPECT_THROW(encode_image(m, Grid{1, 1, {0}}), DegenerateVectorError);
}

TEST(EncodeText, HandTracedSingleToken) {
  ModelConfig c = small_config(false);
  c.embed_dim = c.model_dim;
  ModelParams m = init_model(c, 2);
  m.text.proj = Tensor::identity(c.model_dim);
  std::fill(m.text.pe.entries.data().begin(), m.text.pe.entries.data().end(), 0.0);
  const std::size_t k = 7;
  const Tensor emb = encode_text(m, std::vector<TokenId>{static_cast<TokenId>(k)});
  const Tensor want = l2_normalize(Tensor::row(m.text.token_table.row_span(k)));
  for (std::size_t j = 0; j < emb.size(); ++j)
    EXPECT_NEAR(emb.data()[j], want.data()[j], 1e-15);
}

TEST(EncodeText, AttentionMakesItOrderSensitive) {
  std::mt19937_64 gen(3);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const ModelParams m = init_model(small_config(true), seed);
    std::vector<TokenId> toks{3, 9, 4, 15, 11};
    const Tensor base = encode_text(m, toks);
    bool changed = false;
    for (int k = 0; k < 20 && !changed; ++k) {
      std::shuffle(toks.begin(), toks.end(), gen);
      changed = cosine(base, encode_text(m, toks)) < 1.0 - 1e-6;
    }
    EXPECT_TRUE(changed) << "seed " << seed;
  }
}

TEST(EncodeText, MeanPoolWithoutAttentionIsOrderInvariant) {
  std::mt19937_64 gen(4);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ModelParams m = init_model(small_config(false), seed);
    std::fill(m.text.pe.entries.data().begin(), m.text.pe.entries.data().end(), 0.0);
    std::vector<TokenId> toks{3, 9, 4, 15, 11};
    const Tensor base = encode_text(m, toks);
    for (int k = 0; k < 10; ++k) {
      std::shuffle(toks.begin(), toks.end(), gen);
      EXPECT_NEAR(cosine(base, encode_text(m, toks)), 1.0, 1e-12);
    }
  }
}

TEST(EncodeText, LastTokenPooling) {
  ModelConfig c = small_config(false);
  c.pool = Pooling::LastToken;
  c.embed_dim = c.model_dim;
  ModelParams m = init_model(c, 5);
  m.text.proj = Tensor::identity(c.model_dim);
  const Tensor emb = encode_text(m, std::vector<TokenId>{4, 8});
  std::vector<double> x(c.model_dim);
  for (std::size_t j = 0; j < x.size(); ++j)
    x[j] = m.text.token_table(8, j) + m.text.pe.entries(1, j);
  const Tensor want = l2_normalize(Tensor::row(x));
  for (std::size_t j = 0; j < x.size(); ++j)
    EXPECT_NEAR(emb.data()[j], want.data()[j], 1e-15);
}

TEST(EncodeImage, SingleCellAndMeanInvariance) {
  ModelConfig c = small_config(true);
  c.embed_dim = c.model_dim;
  ModelParams m = init_model(c, 6);
  m.image.proj = Tensor::identity(c.model_dim);
  const Tensor one = encode_image(m, Grid{1, 1, {5}});
  const Tensor want = l2_normalize(Tensor::row(m.image.cell_table.row_span(5)));
  for (std::size_t j = 0; j < one.size(); ++j)
    EXPECT_NEAR(one.data()[j], want.data()[j], 1e-15);
  for (std::size_t h : {2u, 3u, 7u}) {
    const Tensor big = encode_image(m, Grid{h, h + 1, std::vector<CellCode>(h * (h + 1), 5)});
    for (std::size_t j = 0; j < one.size(); ++j)
      EXPECT_NEAR(big.data()[j], one.data()[j], 1e-12);
  }
}

TEST(EncodeImage, Errors) {
  const ModelParams m = init_model(small_config(true), 1);
  EXPECT_THROW(encode_image(m, Grid{0, 0, {}}), InputError);
  EXPECT_THROW(encode_image(m, Grid{1, 1, {12}}), InputError);
}

TEST(Encoders, UnitNormOutputs) {
  std::mt19937_64 gen(7);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const ModelParams m = init_model(small_config(seed % 2 == 0), seed);
    std::vector<TokenId> toks(random_dim(gen, 1, m.text.pe.length()));
    for (auto &t : toks)
      t = static_cast<TokenId>(random_dim(gen, 0, 19));
    EXPECT_NEAR(l2_norm(encode_text(m, toks).data()), 1.0, 1e-9);
    Grid g{3, 4, std::vector<CellCode>(12)};
    for (auto &code : g.codes)
      code = static_cast<CellCode>(random_dim(gen, 0, 11));
    EXPECT_NEAR(l2_norm(encode_image(m, g).data()), 1.0, 1e-9);
  }
}

double cosine_to_target(ModelParams &m, const Grid &grid, const Tensor &target, bool train) {
  Graph g;
  BoundModel b = train ? bind_model(g, m, true) : bind_model(g, std::as_const(m));
  Var emb = encode_image(b, grid);
  Var c = sum(matmul(emb, transpose(g.constant(target))));
  if (train)
    g.backward(c);
  return c.value().item();
}

TEST(EncodeImage, ProjectionGradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(8);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ModelParams m = init_model(small_config(false), seed);
    Grid grid{3, 3, std::vector<CellCode>(9)};
    for (auto &code : grid.codes)
      code = static_cast<CellCode>(random_dim(gen, 0, 11));
    const Tensor target = l2_normalize(random_tensor(gen, 1, m.embed_dim()));
    m.zero_grad();
    cosine_to_target(m, grid, target, true);
    const std::vector<double> analytic(m.image.proj.grad().begin(), m.image.proj.grad().end());
    const auto numeric =
        numeric_grad([&] { return cosine_to_target(m, grid, target, false); }, m.image.proj);
    EXPECT_LT(relative_error(analytic, numeric), 1e-4);
  }
}

TEST(EncodeText, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(9);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ModelParams m = init_model(small_config(true), seed);
    const std::vector<TokenId> toks{1, 5, 7, 2, 9, 9};
    const Tensor target = l2_normalize(random_tensor(gen, 1, m.embed_dim()));
    auto f = [&](bool train) {
      Graph g;
      BoundModel b = train ? bind_model(g, m, true) : bind_model(g, std::as_const(m));
      Var c = sum(matmul(encode_text(b, toks), transpose(g.constant(target))));
      if (train)
        g.backward(c);
      return c.value().item();
    };
    m.zero_grad();
    f(true);
    for (auto &[name, t] : m.named_tensors()) {
      if (name == "log_tau" || name == "cell_table" || name == "image_proj")
        continue;
      const std::vector<double> analytic(t->grad().begin(), t->grad().end());
      const auto numeric = numeric_grad([&] { return f(false); }, *t);
      EXPECT_LT(relative_error(analytic, numeric), 1e-4) << name;
    }
  }
}

// Checkpoints ----------------------------------------------------------------

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  for (bool attention : {true, false}) {
    const ModelParams m = init_model(small_config(attention), 11);
    std::ostringstream a;
    save_checkpoint(m, a);
    std::istringstream in(a.str());
    const ModelParams back = load_checkpoint(in);
    EXPECT_EQ(back.text.attention, attention);
    std::ostringstream b;
    save_checkpoint(back, b);
    EXPECT_EQ(a.str(), b.str());
    const auto na = m.named_tensors(), nb = back.named_tensors();
    ASSERT_EQ(na.size(), nb.size());
    for (std::size_t i = 0; i < na.size(); ++i)
      EXPECT_EQ(*na[i].second, *nb[i].second);
  }
}

TEST(Checkpoint, HeaderAndLayout) {
  const ModelParams m = init_model(small_config(true), 12);
  std::ostringstream os;
  save_checkpoint(m, os);
  const std::string s = os.str();
  const std::string header = s.substr(0, s.find('\n'));
  EXPECT_EQ(header, "DGRAIN1 token_table=20x6 pe=20x6 attn_q=6x6 attn_k=6x6 attn_v=6x6 "
                    "text_proj=6x5 cell_table=12x6 image_proj=6x5 log_tau=1x1");
  std::size_t values = 0;
  for (const auto &[name, t] : m.named_tensors())
    values += t->size();
  EXPECT_EQ(s.size(), header.size() + 1 + 8 * values);
  // First payload value is token_table(0,0) in little-endian order.
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[header.size() + 1 + i]))
            << (8 * i);
  EXPECT_EQ(std::bit_cast<double>(bits), m.text.token_table(0, 0));
}

TEST(Checkpoint, Errors) {
  const ModelParams m = init_model(small_config(false), 13);
  std::ostringstream os;
  save_checkpoint(m, os);
  const std::string good = os.str();

  std::istringstream truncated(good.substr(0, good.size() - 3));
  EXPECT_THROW(load_checkpoint(truncated), ParseError);
  std::istringstream trailing(good + "x");
  EXPECT_THROW(load_checkpoint(trailing), ParseError);
  std::string v2 = good;
  v2[6] = '2';
  std::istringstream version(v2);
  EXPECT_THROW(load_checkpoint(version), VersionError);
  std::istringstream junk("hello\n");
  EXPECT_THROW(load_checkpoint(junk), ParseError);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/model.ckpt"), IoError);
}

} // namespace
} // namespace dgrain
