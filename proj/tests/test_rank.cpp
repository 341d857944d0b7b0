// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <functional>

#include <gtest/gtest.h>

#include "ealm/rank.hpp"
#include "ealm/rng.hpp"

namespace ealm::rank {
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

meter::EnergyReport joules(double j) { return meter::EnergyReport::make({j, 0, 0}, 1.0, 0.475, "constant"); }

CandidateRecord record(std::string id, double R, double j) {
  CandidateRecord r;
  r.id = std::move(id);
  r.R = R;
  r.energy = joules(j);
  return r;
}

std::vector<std::string> ids(const std::vector<CandidateRecord>& v) {
  std::vector<std::string> out;
  for (const auto& r : v) out.push_back(r.id);
  return out;
}

TEST(RankScore, Example) { EXPECT_NEAR(rank_score(0.4, 0.8, 0.7), 0.52, 1e-12); }

TEST(RankScore, Boundaries) {
  EXPECT_EQ(rank_score(0.3, 0.9, 1.0), 0.3);
  EXPECT_EQ(rank_score(0.3, 0.9, 0.0), 0.9);
  EXPECT_EQ(kind_of([] { rank_score(0.3, 0.9, 1.5); }), ErrorKind::kWeight);
  EXPECT_EQ(kind_of([] { rank_score(0.3, 0.9, -0.1); }), ErrorKind::kWeight);
  EXPECT_EQ(kind_of([] { rank_score(1.3, 0.9, 0.5); }), ErrorKind::kInput);
}

TEST(PerformanceScore, MeanOfSixIgnoresThroughput) {
  metrics::MetricScores s{1, 1, 1, 1, 1, 1, 1e6};
  EXPECT_EQ(performance_score(s), 1.0);
  s = {0.6, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0};
  EXPECT_DOUBLE_EQ(performance_score(s), 0.1);
}

TEST(EfficiencyScore, FormulaAndClamp) {
  EXPECT_EQ(efficiency_score(joules(10), joules(10)), 0.0);
  EXPECT_NEAR(efficiency_score(joules(2), joules(10)), 0.8, 1e-12);
  EXPECT_EQ(efficiency_score(joules(20), joules(10)), 0.0);
  EXPECT_EQ(kind_of([] { efficiency_score(joules(1), joules(0)); }), ErrorKind::kReference);
}

TEST(SelectTopK, TieBreaksOnEnergyThenId) {
  const std::vector<CandidateRecord> c = {record("b", 0.5, 20), record("a", 0.5, 10),
                                          record("c", 0.5, 10), record("d", 0.6, 99)};
  RankingWeights w;
  w.k = 10;
  EXPECT_EQ(ids(select_top_k(c, w)), (std::vector<std::string>{"d", "a", "c", "b"}));
  w.k = 2;
  EXPECT_EQ(ids(select_top_k(c, w)), (std::vector<std::string>{"d", "a"}));
  EXPECT_EQ(kind_of([&] { select_top_k(std::span<const CandidateRecord>{}, w); }), ErrorKind::kInput);
}

TEST(SelectTopK, PermutationInvariant) {
  Stream rng(31, "perm");
  std::vector<CandidateRecord> c;
  for (int i = 0; i < 12; ++i) {
    c.push_back(record("m" + std::to_string(i), static_cast<double>(rng.below(4)) / 4.0,
                       static_cast<double>(1 + rng.below(3))));
  }
  RankingWeights w;
  w.k = 5;
  const auto expected = ids(select_top_k(c, w));
  for (int trial = 0; trial < 20; ++trial) {
    for (std::size_t i = c.size() - 1; i > 0; --i) std::swap(c[i], c[rng.below(i + 1)]);
    EXPECT_EQ(ids(select_top_k(c, w)), expected);
  }
}

TEST(SelectTopK, RaisingPhiNeverLowersPosition) {
  const meter::EnergyReport base = joules(100);
  std::vector<CandidateRecord> c;
  for (int i = 0; i < 6; ++i) {
    CandidateRecord r;
    r.id = "c" + std::to_string(i);
    r.scores = {0.1 * i, 0.5, 0.5, 0.5, 0.5, 0.5, 0};
    r.energy = joules(90 - 10 * i);
    score_candidate(r, base, 0.7);
    c.push_back(r);
  }
  RankingWeights w;
  w.k = c.size();
  auto position = [&](const std::string& id) {
    const auto order = ids(select_top_k(c, w));
    return std::find(order.begin(), order.end(), id) - order.begin();
  };
  auto before = position("c0");
  c[0].energy = joules(5);
  score_candidate(c[0], base, 0.7);
  EXPECT_LE(position("c0"), before);
}

TEST(ScoreCandidate, RecomputesFromStoredFields) {
  CandidateRecord r;
  r.scores = {0.2, 0.4, 0.1, 0.3, 0.5, 0.9, 12};
  r.energy = joules(30);
  score_candidate(r, joules(120), 0.7);
  EXPECT_NEAR(r.R, 0.7 * r.phi + 0.3 * r.rho, 1e-12);
  EXPECT_NEAR(r.phi, 0.75, 1e-12);
}

TEST(CandidateRecord, JsonRoundTrip) {
  CandidateRecord r = record("q8-e5", 0.25, 17.5);
  r.lineage.precision_bits = 8;
  r.lineage.epochs_trained = 5;
  const CandidateRecord back = nlohmann::json(r).get<CandidateRecord>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(r));
}

}  // namespace
}  // namespace ealm::rank
