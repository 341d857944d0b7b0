// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "ealm/prune.hpp"
#include "ealm/quant.hpp"
#include "ealm/rng.hpp"
#include "ealm/tinylm.hpp"
#include "oracles.hpp"

namespace ealm::prune {
namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an ealm::Error";
  return ErrorKind::kInvariant;
}

std::vector<std::uint8_t> keep_from_zeros(std::size_t n, const std::set<std::size_t>& zeros) {
  std::vector<std::uint8_t> keep(n, 1);
  for (std::size_t i : zeros) keep[i] = 0;
  return keep;
}

LmConfig small_config() {
  LmConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  return c;
}

TEST(MagnitudeMask, HalfOfFour) {
  const Tensor t({4}, {1.0f, -2.0f, 3.0f, -4.0f});
  EXPECT_EQ(magnitude_mask(t, 0.5).keep, (std::vector<std::uint8_t>{0, 0, 1, 1}));
}

TEST(MagnitudeMask, TiesDropHighestIndexFirst) {
  const Tensor t({4}, {5.0f, 5.0f, 5.0f, 5.0f});
  EXPECT_EQ(magnitude_mask(t, 0.25).keep, (std::vector<std::uint8_t>{1, 1, 1, 0}));
}

TEST(MagnitudeMask, MatchesFullSortOracle) {
  Stream rng(11, "mag");
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 1 + rng.below(8), cols = 1 + rng.below(16);
    Tensor t = Tensor::zeros({rows, cols});
    // Coarse values force plenty of ties.
    for (float& v : t.data) v = static_cast<float>(static_cast<int>(rng.below(7)) - 3);
    const double ratio = 0.05 + 0.9 * rng.uniform01();
    EXPECT_EQ(magnitude_mask(t, ratio).keep,
              keep_from_zeros(t.numel(), oracle::magnitude_zeros(t.data, ratio)));
  }
}

TEST(MagnitudeMask, CountUsesFloor) {
  const Tensor t = Tensor::zeros({100});
  EXPECT_EQ(magnitude_mask(t, 0.29).zeros(), 29u);
  EXPECT_EQ(magnitude_mask(Tensor::zeros({3}), 0.5).zeros(), 1u);
}

TEST(MagnitudeMask, RatioOutsideOpenIntervalRejected) {
  const Tensor t({2}, {1.0f, 2.0f});
  EXPECT_EQ(kind_of([&] { magnitude_mask(t, 0.0); }), ErrorKind::kSpec);
  EXPECT_EQ(kind_of([&] { magnitude_mask(t, 1.0); }), ErrorKind::kSpec);
}

TEST(NmMask, ExampleGroup) {
  const Tensor t({1, 4}, {0.1f, -0.5f, 0.3f, 0.05f});
  EXPECT_EQ(nm_mask(t, 2, 4).keep, (std::vector<std::uint8_t>{0, 1, 1, 0}));
}

TEST(NmMask, EveryGroupKeepsExactlyN) {
  Stream rng(12, "nm");
  for (auto [n, m] : {std::pair{2, 4}, std::pair{4, 8}, std::pair{1, 3}}) {
    Tensor t = Tensor::zeros({6, 24});
    for (float& v : t.data) v = static_cast<float>(rng.normal());
    const TensorMask mask = nm_mask(t, n, m);
    for (std::size_t r = 0; r < 6; ++r) {
      for (std::size_t g = 0; g < 24; g += static_cast<std::size_t>(m)) {
        std::vector<float> group;
        std::set<std::size_t> kept;
        for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i) {
          group.push_back(t.at(r, g + i));
          if (mask.keep[r * 24 + g + i]) kept.insert(i);
        }
        EXPECT_EQ(kept, oracle::nm_keep(group, n));
      }
    }
  }
}

TEST(NmMask, PartialTrailingGroup) {
  const Tensor t({1, 6}, {1, 2, 3, 4, 0.5f, 0.25f});
  EXPECT_EQ(nm_mask(t, 2, 4).keep, (std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1}));
  EXPECT_EQ(nm_mask(Tensor({1, 1}, {7.0f}), 2, 4).keep, (std::vector<std::uint8_t>{1}));
}

TEST(NmMask, BadPatternOrShape) {
  const Tensor m({2, 4}, std::vector<float>(8, 1.0f));
  EXPECT_EQ(kind_of([&] { nm_mask(m, 4, 4); }), ErrorKind::kSpec);
  EXPECT_EQ(kind_of([&] { nm_mask(Tensor({4}, {1, 2, 3, 4}), 2, 4); }), ErrorKind::kShape);
}

TEST(PruneBundle, TwoOfFourGivesHalfSparsity) {
  const ModelBundle b = lm::init_model(small_config());
  const ModelBundle p = prune_bundle(b, PruneSpec::n_of_m(2, 4));
  EXPECT_EQ(sparsity(p), 0.5);
  ASSERT_TRUE(p.lineage.prune);
  EXPECT_EQ(p.lineage.prune->sparsity, 0.5);
  EXPECT_EQ(p.lineage.prune->n, 2);
  // Non-targeted tensors are untouched.
  for (const auto& nt : b.tensors) {
    if (!is_adaptable_weight(nt.name)) {
      EXPECT_TRUE(bitwise_equal(nt.tensor, p.at(nt.name)));
    }
  }
}

TEST(PruneBundle, QuantizedCodesAreZeroed) {
  const ModelBundle q = quant::quantize_bundle(lm::init_model(small_config()), {8});
  const ModelBundle p = prune_bundle(q, PruneSpec::magnitude(0.5));
  EXPECT_NEAR(sparsity(p), 0.5, 0.02);
  EXPECT_EQ(p.lineage.precision_bits, 8);
  validate_bundle(p);
}

TEST(PruneBundle, GlobalScopeMatchesOracleOverConcatenation) {
  const ModelBundle b = lm::init_model(small_config());
  const PruneSpec spec = PruneSpec::magnitude(0.3, Scope::kGlobal);
  const SparsityMask mask = build_mask(b, spec);
  std::vector<float> flat;
  std::vector<std::uint8_t> keep;
  for (const auto& nt : b.tensors) {
    if (!is_adaptable_weight(nt.name)) continue;
    const Tensor& t = std::get<Tensor>(nt.tensor);
    flat.insert(flat.end(), t.data.begin(), t.data.end());
    const auto& k = mask.masks.at(nt.name).keep;
    keep.insert(keep.end(), k.begin(), k.end());
  }
  EXPECT_EQ(keep, keep_from_zeros(flat.size(), oracle::magnitude_zeros(flat, 0.3)));
}

TEST(ApplyMask, AllOnesIsIdentityAndPruningIsIdempotent) {
  const ModelBundle b = lm::init_model(small_config());
  const PruneSpec spec = PruneSpec::magnitude(0.4);
  SparsityMask ones;
  for (const auto& nt : b.tensors) {
    if (!is_adaptable_weight(nt.name)) continue;
    ones.masks[nt.name] = {shape_of(nt.tensor), std::vector<std::uint8_t>(numel_of(nt.tensor), 1)};
  }
  const ModelBundle same = apply_mask(b, ones, spec);
  for (const auto& nt : b.tensors) EXPECT_TRUE(bitwise_equal(nt.tensor, same.at(nt.name)));

  const SparsityMask mask = build_mask(b, spec);
  const ModelBundle once = apply_mask(b, mask, spec);
  const ModelBundle twice = apply_mask(once, mask, spec);
  EXPECT_TRUE(bundles_equal(once, twice));
}

TEST(ApplyMask, ShapeMismatchIsMaskError) {
  const ModelBundle b = lm::init_model(small_config());
  SparsityMask bad;
  bad.masks["layers.0.attn.wq"] = {{3}, {1, 1, 1}};
  EXPECT_EQ(kind_of([&] { apply_mask(b, bad, PruneSpec::magnitude(0.5)); }), ErrorKind::kMask);
  SparsityMask unknown;
  unknown.masks["nope"] = {{1}, {1}};
  EXPECT_EQ(kind_of([&] { apply_mask(b, unknown, PruneSpec::magnitude(0.5)); }), ErrorKind::kMask);
}

TEST(PruneSpec, Labels) {
  EXPECT_EQ(PruneSpec::magnitude(0.3).label(), "mag30");
  EXPECT_EQ(PruneSpec::n_of_m(2, 4).label(), "nm2of4");
  EXPECT_EQ(PruneSpec::magnitude(0.5, Scope::kGlobal).label(), "mag50g");
}

}  // namespace
}  // namespace ealm::prune
