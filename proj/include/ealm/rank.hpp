// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

// Energy/performance ranking: R = w * phi + (1 - w) * rho, and top-k
// selection by R.

#ifndef EALM_RANK_HPP_
#define EALM_RANK_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ealm/error.hpp"
#include "ealm/meter.hpp"
#include "ealm/metrics.hpp"
#include "ealm/tensors.hpp"

namespace ealm::rank {

struct CandidateRecord {
  std::string id;
  Lineage lineage;
  metrics::MetricScores scores;
  meter::EnergyReport energy;  // the energy that phi is computed from
  double rho = 0.0;
  double phi = 0.0;
  double R = 0.0;
};

struct RankingWeights {
  double w = 0.7;
  std::size_t k = 1;

  void validate() const {
    if (!(w >= 0.0 && w <= 1.0)) fail(ErrorKind::kWeight, "w must lie in [0, 1], got " + std::to_string(w));
    if (k < 1) fail(ErrorKind::kConfig, "k must be >= 1");
  }
};

/// Mean of the six bounded quality metrics. Throughput is not included.
inline double performance_score(const metrics::MetricScores& s) {
  return (s.bleu + s.rouge1_f + s.rouge2_f + s.rougeL_f + s.meteor + s.cosine) / 6.0;
}

/// Energy saving against the baseline, clamped to [0, 1].
inline double efficiency_score(const meter::EnergyReport& candidate, const meter::EnergyReport& base) {
  if (!(base.total_joules > 0.0)) {
    fail(ErrorKind::kReference, "baseline energy must be > 0 to score efficiency");
  }
  return std::clamp(1.0 - candidate.total_joules / base.total_joules, 0.0, 1.0);
}

inline double rank_score(double phi, double rho, double w) {
  if (!(w >= 0.0 && w <= 1.0)) fail(ErrorKind::kWeight, "w must lie in [0, 1], got " + std::to_string(w));
  if (!(phi >= 0.0 && phi <= 1.0) || !(rho >= 0.0 && rho <= 1.0)) {
    fail(ErrorKind::kInput, "phi and rho must lie in [0, 1]");
  }
  return w * phi + (1.0 - w) * rho;
}

/// Fills rho, phi and R of `rec` against a baseline energy.
inline void score_candidate(CandidateRecord& rec, const meter::EnergyReport& base, double w) {
  rec.rho = performance_score(rec.scores);
  rec.phi = efficiency_score(rec.energy, base);
  rec.R = rank_score(rec.phi, rec.rho, w);
}

/// Higher R first, then lower total energy, then id.
inline bool ranks_before(const CandidateRecord& a, const CandidateRecord& b) {
  if (a.R != b.R) return a.R > b.R;
  if (a.energy.total_joules != b.energy.total_joules) {
    return a.energy.total_joules < b.energy.total_joules;
  }
  return a.id < b.id;
}

inline std::vector<CandidateRecord> rank_all(std::span<const CandidateRecord> collection) {
  std::vector<CandidateRecord> out(collection.begin(), collection.end());
  std::stable_sort(out.begin(), out.end(), ranks_before);
  return out;
}

inline std::vector<CandidateRecord> select_top_k(std::span<const CandidateRecord> collection,
                                                 const RankingWeights& weights) {
  weights.validate();
  if (collection.empty()) fail(ErrorKind::kInput, "cannot select from an empty collection");
  std::vector<CandidateRecord> out = rank_all(collection);
  out.resize(std::min(weights.k, out.size()));
  return out;
}

inline void to_json(nlohmann::json& j, const CandidateRecord& r) {
  j = nlohmann::json{{"id", r.id},         {"lineage", r.lineage}, {"scores", r.scores},
                     {"energy", r.energy}, {"rho", r.rho},         {"phi", r.phi},
                     {"R", r.R}};
}

inline void from_json(const nlohmann::json& j, CandidateRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.lineage = j.at("lineage").get<Lineage>();
  r.scores = j.at("scores").get<metrics::MetricScores>();
  r.energy = j.at("energy").get<meter::EnergyReport>();
  r.rho = j.at("rho").get<double>();
  r.phi = j.at("phi").get<double>();
  r.R = j.at("R").get<double>();
}

}  // namespace ealm::rank

#endif  // EALM_RANK_HPP_
