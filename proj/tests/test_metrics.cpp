// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "ealm/metrics.hpp"
#include "ealm/rng.hpp"
#include "oracles.hpp"

namespace ealm::metrics {
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

Tokens random_words(Stream& rng, std::size_t max_len, std::size_t vocab) {
  static const char* kWords[] = {"a", "b", "c", "d", "e", "f", "g", "h"};
  Tokens t(1 + rng.below(max_len));
  for (auto& w : t) w = kWords[rng.below(vocab)];
  return t;
}

TEST(Tokenize, LowercasesAndSplits) {
  EXPECT_EQ(tokenize("  The CAT\tsat\n"), (Tokens{"the", "cat", "sat"}));
  EXPECT_TRUE(tokenize(" \n").empty());
}

TEST(Bleu, ShortCandidateBrevityPenalty) {
  const double v = bleu(tokenize("the cat sat"), tokenize("the cat sat on the mat"));
  EXPECT_NEAR(v, std::exp(-1.0), 1e-6);
  EXPECT_NEAR(v, oracle::bleu(tokenize("the cat sat"), tokenize("the cat sat on the mat")), 1e-12);
}

TEST(Bleu, IdentityAndDisjoint) {
  const Tokens t = tokenize("replace the worn seal now");
  EXPECT_DOUBLE_EQ(bleu(t, t), 1.0);
  EXPECT_EQ(bleu(tokenize("x y z"), tokenize("a b c")), 0.0);
}

TEST(Bleu, MultipleReferencesUseClosestLength) {
  const Tokens c = tokenize("a b c");
  const Tokens refs[] = {tokenize("a b c d e f g"), tokenize("a b c d")};
  const BleuStats s = bleu_stats(c, refs, 4);
  EXPECT_EQ(s.ref_len, 4u);
  EXPECT_NEAR(bleu(c, refs), std::exp(1.0 - 4.0 / 3.0), 1e-12);
}

TEST(Bleu, MatchesOracleOnRandomPairs) {
  Stream rng(21, "bleu");
  for (int i = 0; i < 500; ++i) {
    const Tokens c = random_words(rng, 8, 4), r = random_words(rng, 8, 4);
    EXPECT_NEAR(bleu(c, r), oracle::bleu(c, r), 1e-12);
  }
}

TEST(Bleu, EmptyInputsRejected) {
  EXPECT_EQ(kind_of([] { bleu(Tokens{}, tokenize("a")); }), ErrorKind::kInput);
  EXPECT_EQ(kind_of([] { bleu(tokenize("a"), std::span<const Tokens>{}); }), ErrorKind::kInput);
}

TEST(Rouge, UnigramExample) {
  const Prf p = rouge_n_prf(tokenize("the cat"), tokenize("the cat sat"), 1);
  EXPECT_DOUBLE_EQ(p.precision, 1.0);
  EXPECT_DOUBLE_EQ(p.recall, 2.0 / 3.0);
  EXPECT_NEAR(p.f1, 0.8, 1e-12);
}

TEST(Rouge, IdentityDisjointAndBadOrder) {
  const Tokens t = tokenize("clean the filter");
  EXPECT_DOUBLE_EQ(rouge_n(t, t, 1), 1.0);
  EXPECT_DOUBLE_EQ(rouge_n(t, t, 2), 1.0);
  EXPECT_DOUBLE_EQ(rouge_l(t, t), 1.0);
  EXPECT_EQ(rouge_n(t, tokenize("x y"), 1), 0.0);
  EXPECT_EQ(rouge_l(t, tokenize("x y")), 0.0);
  EXPECT_EQ(kind_of([&] { rouge_n(t, t, 3); }), ErrorKind::kInput);
}

TEST(Rouge, MatchesOracleOnRandomPairs) {
  Stream rng(22, "rouge");
  for (int i = 0; i < 500; ++i) {
    const Tokens c = random_words(rng, 9, 4), r = random_words(rng, 9, 4);
    EXPECT_NEAR(rouge_n(c, r, 1), oracle::rouge_n(c, r, 1), 1e-12);
    EXPECT_NEAR(rouge_n(c, r, 2), oracle::rouge_n(c, r, 2), 1e-12);
    EXPECT_EQ(lcs_length(c, r), oracle::lcs(c, r));
    EXPECT_NEAR(rouge_l(c, r), oracle::rouge_l(c, r), 1e-12);
  }
}

TEST(Meteor, Examples) {
  EXPECT_NEAR(meteor(tokenize("a b c"), tokenize("a b c")), 1.0 - 0.5 / 27.0, 1e-12);
  EXPECT_NEAR(meteor(tokenize("a b c"), tokenize("a b c")), 0.98148, 1e-5);
  EXPECT_NEAR(meteor(tokenize("b a"), tokenize("a b")), 0.5, 1e-12);
  EXPECT_EQ(meteor(tokenize("a b"), tokenize("c d")), 0.0);
}

TEST(Meteor, AlignmentMinimizesChunks) {
  // Pairing each "a" with the nearest reference "a" gives 4 chunks; 2 is optimal.
  const Alignment al = align(tokenize("a b a c"), tokenize("a c x a b"));
  EXPECT_EQ(al.matches, 4u);
  EXPECT_EQ(al.chunks, 2u);
}

TEST(Meteor, MatchesExhaustiveOracle) {
  Stream rng(23, "meteor");
  for (int i = 0; i < 400; ++i) {
    const Tokens c = random_words(rng, 6, 3), r = random_words(rng, 6, 3);
    EXPECT_NEAR(meteor(c, r), oracle::meteor(c, r), 1e-12) << i;
  }
}

TEST(Cosine, Examples) {
  EXPECT_NEAR(cosine(tokenize("a a b"), tokenize("a b")), 3.0 / (std::sqrt(5.0) * std::sqrt(2.0)),
              1e-12);
  EXPECT_NEAR(cosine(tokenize("a a b"), tokenize("a b")), 0.9487, 1e-4);
  EXPECT_NEAR(cosine(tokenize("x y"), tokenize("x y")), 1.0, 1e-12);
  EXPECT_EQ(cosine(tokenize("x y"), tokenize("a b")), 0.0);
}

TEST(Cosine, VectorsAndErrors) {
  const std::vector<double> a = {1, 0}, b = {0, 0}, c = {1, 2, 3};
  EXPECT_EQ(cosine_vectors(a, b), 0.0);
  EXPECT_EQ(kind_of([&] { cosine_vectors(a, c); }), ErrorKind::kInput);
  const std::vector<double> neg = {-1, 0};
  EXPECT_EQ(cosine_vectors(a, neg), 0.0);
}

TEST(Cosine, MatchesOracle) {
  Stream rng(24, "cos");
  for (int i = 0; i < 300; ++i) {
    const Tokens c = random_words(rng, 10, 6), r = random_words(rng, 10, 6);
    EXPECT_NEAR(cosine(c, r), oracle::tf_cosine(c, r), 1e-12);
  }
}

TEST(Metrics, StayInUnitInterval) {
  Stream rng(25, "range");
  for (int i = 0; i < 2000; ++i) {
    const Tokens c = random_words(rng, 12, 8), r = random_words(rng, 12, 8);
    for (double v : {bleu(c, r), rouge_n(c, r, 1), rouge_n(c, r, 2), rouge_l(c, r), meteor(c, r),
                     cosine(c, r)}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Throughput, Quotient) {
  EXPECT_EQ(tokens_per_second(100, 2.0), 50.0);
  EXPECT_EQ(tokens_per_second(0, 1.0), 0.0);
  EXPECT_EQ(kind_of([] { tokens_per_second(5, 0.0); }), ErrorKind::kDivision);
}

TEST(ScoreOutputs, CorpusAggregation) {
  const std::vector<TextPair> pairs = {{"the cat sat", "the cat sat on the mat"},
                                       {"the cat", "the cat sat"},
                                       {"b a", "a b"}};
  const MetricScores s = score_outputs(pairs, {30.0, 1.5});
  EXPECT_EQ(s.tokens_per_s, 20.0);
  EXPECT_NEAR(s.rouge1_f, (oracle::rouge_n(tokenize("the cat sat"), tokenize("the cat sat on the mat"), 1) +
                           0.8 + 1.0) / 3.0,
              1e-12);
  EXPECT_NEAR(s.meteor, (oracle::meteor(tokenize("the cat sat"), tokenize("the cat sat on the mat")) +
                         oracle::meteor(tokenize("the cat"), tokenize("the cat sat")) + 0.5) / 3.0,
              1e-12);
  // Corpus BLEU pools counts: 1-grams 7/7, 2-grams 3/4 ("a b" vs "b a" misses),
  // 3-grams 1/1; 4-grams have no candidate n-grams. Lengths 7 vs 11.
  const double expected = std::exp(1.0 - 11.0 / 7.0) * std::cbrt(1.0 * 0.75 * 1.0);
  EXPECT_NEAR(s.bleu, expected, 1e-12);
}

TEST(ScoreOutputs, ThreadCountDoesNotChangeResults) {
  Stream rng(26, "threads");
  std::vector<TextPair> pairs;
  auto join = [](const Tokens& t) {
    std::string s;
    for (const auto& w : t) s += w + " ";
    return s;
  };
  for (int i = 0; i < 37; ++i) pairs.push_back({join(random_words(rng, 8, 5)), join(random_words(rng, 8, 5))});
  EXPECT_EQ(score_outputs(pairs, {}, TfEmbedder{}, 1), score_outputs(pairs, {}, TfEmbedder{}, 4));
  EXPECT_EQ(score_outputs(pairs, {}).tokens_per_s, 0.0);
}

}  // namespace
}  // namespace ealm::metrics
