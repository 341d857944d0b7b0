// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

// Text-quality and throughput metrics over whitespace tokens.

#ifndef EALM_METRICS_HPP_
#define EALM_METRICS_HPP_

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ealm/error.hpp"

namespace ealm::metrics {

using Tokens = std::vector<std::string>;

/// Lowercased whitespace split.
inline Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace detail {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

inline NgramCounts ngrams(const Tokens& t, std::size_t n) {
  NgramCounts out;
  if (t.size() < n) return out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    ++out[std::vector<std::string>(t.begin() + static_cast<std::ptrdiff_t>(i),
                                   t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

inline double f1(double p, double r) { return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace detail

// ---------------------------------------------------------------------------
// BLEU

/// Sufficient statistics of BLEU for one or more segments.
struct BleuStats {
  std::vector<std::size_t> matches;  // clipped n-gram matches per order
  std::vector<std::size_t> totals;   // candidate n-grams per order
  std::size_t cand_len = 0;
  std::size_t ref_len = 0;  // closest reference length

  explicit BleuStats(std::size_t max_n = 4) : matches(max_n, 0), totals(max_n, 0) {}

  BleuStats& operator+=(const BleuStats& o) {
    for (std::size_t i = 0; i < matches.size(); ++i) {
      matches[i] += o.matches[i];
      totals[i] += o.totals[i];
    }
    cand_len += o.cand_len;
    ref_len += o.ref_len;
    return *this;
  }
};

inline BleuStats bleu_stats(const Tokens& candidate, std::span<const Tokens> references,
                            std::size_t max_n = 4) {
  if (references.empty()) fail(ErrorKind::kInput, "BLEU needs at least one reference");
  if (max_n < 1) fail(ErrorKind::kInput, "BLEU max_n must be >= 1");
  BleuStats s(max_n);
  s.cand_len = candidate.size();
  // Closest reference length; ties go to the shorter one.
  std::size_t best = references[0].size();
  for (const auto& r : references) {
    const auto diff = [&](std::size_t len) {
      return len > s.cand_len ? len - s.cand_len : s.cand_len - len;
    };
    if (diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) {
      best = r.size();
    }
  }
  s.ref_len = best;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const auto cand = detail::ngrams(candidate, n);
    detail::NgramCounts max_ref;
    for (const auto& r : references) {
      for (const auto& [g, c] : detail::ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
    }
    for (const auto& [g, c] : cand) {
      s.totals[n - 1] += c;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) s.matches[n - 1] += std::min(c, it->second);
    }
  }
  return s;
}

/// Unsmoothed BLEU from statistics. Orders with no candidate n-grams (a
/// candidate shorter than n) are left out of the geometric mean; any other
/// zero precision makes the score 0.
inline double bleu_from_stats(const BleuStats& s) {
  if (s.cand_len == 0) return 0.0;
  double log_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t i = 0; i < s.matches.size(); ++i) {
    if (s.totals[i] == 0) continue;
    if (s.matches[i] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(s.matches[i]) / static_cast<double>(s.totals[i]));
    ++orders;
  }
  if (orders == 0) return 0.0;
  const double c = static_cast<double>(s.cand_len);
  const double r = static_cast<double>(s.ref_len);
  const double bp = std::min(1.0, std::exp(1.0 - r / c));
  return std::clamp(bp * std::exp(log_sum / static_cast<double>(orders)), 0.0, 1.0);
}

inline double bleu(const Tokens& candidate, std::span<const Tokens> references,
                   std::size_t max_n = 4) {
  if (candidate.empty()) fail(ErrorKind::kInput, "BLEU candidate is empty");
  return bleu_from_stats(bleu_stats(candidate, references, max_n));
}

inline double bleu(const Tokens& candidate, const Tokens& reference, std::size_t max_n = 4) {
  const Tokens refs[] = {reference};
  return bleu(candidate, refs, max_n);
}

// ---------------------------------------------------------------------------
// ROUGE

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline Prf rouge_n_prf(const Tokens& candidate, const Tokens& reference, int n) {
  if (n != 1 && n != 2) fail(ErrorKind::kInput, "ROUGE-N supports n = 1 or 2");
  const auto cand = detail::ngrams(candidate, static_cast<std::size_t>(n));
  const auto ref = detail::ngrams(reference, static_cast<std::size_t>(n));
  std::size_t cand_total = 0, ref_total = 0, overlap = 0;
  for (const auto& [g, c] : cand) cand_total += c;
  for (const auto& [g, c] : ref) {
    ref_total += c;
    auto it = cand.find(g);
    if (it != cand.end()) overlap += std::min(c, it->second);
  }
  Prf out;
  if (cand_total == 0 || ref_total == 0) return out;
  out.precision = static_cast<double>(overlap) / static_cast<double>(cand_total);
  out.recall = static_cast<double>(overlap) / static_cast<double>(ref_total);
  out.f1 = detail::f1(out.precision, out.recall);
  return out;
}

inline double rouge_n(const Tokens& candidate, const Tokens& reference, int n) {
  return rouge_n_prf(candidate, reference, n).f1;
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline Prf rouge_l_prf(const Tokens& candidate, const Tokens& reference) {
  Prf out;
  if (candidate.empty() || reference.empty()) return out;
  const double l = static_cast<double>(lcs_length(candidate, reference));
  out.precision = l / static_cast<double>(candidate.size());
  out.recall = l / static_cast<double>(reference.size());
  out.f1 = detail::f1(out.precision, out.recall);
  return out;
}

inline double rouge_l(const Tokens& candidate, const Tokens& reference) {
  return rouge_l_prf(candidate, reference).f1;
}

// ---------------------------------------------------------------------------
// METEOR (exact-match stage)

struct Alignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  std::vector<int> ref_of;  // per candidate position, -1 if unaligned
};

namespace detail {

inline std::size_t count_chunks(const std::vector<int>& ref_of) {
  std::size_t chunks = 0;
  for (std::size_t i = 0; i < ref_of.size(); ++i) {
    if (ref_of[i] < 0) continue;
    const bool continues = i > 0 && ref_of[i - 1] >= 0 && ref_of[i - 1] + 1 == ref_of[i];
    if (!continues) ++chunks;
  }
  return chunks;
}

/// Repeatedly aligns the longest run of identical unaligned tokens (earliest
/// candidate, then reference position on ties). Always reaches the maximum
/// match count.
inline std::vector<int> greedy_alignment(const std::vector<int>& c, const std::vector<int>& r) {
  std::vector<int> ref_of(c.size(), -1);
  std::vector<bool> used(r.size(), false);
  while (true) {
    std::size_t best_len = 0, best_i = 0, best_j = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (ref_of[i] >= 0) continue;
      for (std::size_t j = 0; j < r.size(); ++j) {
        std::size_t len = 0;
        while (i + len < c.size() && j + len < r.size() && ref_of[i + len] < 0 &&
               !used[j + len] && c[i + len] == r[j + len]) {
          ++len;
        }
        if (len > best_len) {
          best_len = len;
          best_i = i;
          best_j = j;
        }
      }
    }
    if (best_len == 0) break;
    for (std::size_t k = 0; k < best_len; ++k) {
      ref_of[best_i + k] = static_cast<int>(best_j + k);
      used[best_j + k] = true;
    }
  }
  return ref_of;
}

/// Depth-first search over maximum matchings for the fewest chunks, seeded
/// with the greedy answer and capped at `budget` nodes.
class ChunkSearch {
 public:
  ChunkSearch(const std::vector<int>& c, const std::vector<int>& r, std::size_t vocab,
              std::size_t target, std::vector<int> seed, std::size_t budget)
      : c_(c), r_(r), target_(target), budget_(budget), best_(std::move(seed)),
        best_chunks_(count_chunks(best_)), cur_(c.size(), -1), used_(r.size(), false),
        cand_left_(vocab, 0), ref_free_(vocab, 0) {
    for (int w : c_) ++cand_left_[static_cast<std::size_t>(w)];
    for (int w : r_) ++ref_free_[static_cast<std::size_t>(w)];
    by_word_.resize(vocab);
    for (std::size_t j = 0; j < r_.size(); ++j) by_word_[static_cast<std::size_t>(r_[j])].push_back(j);
  }

  std::vector<int> run() {
    dfs(0, 0, 0);
    return best_;
  }

 private:
  std::size_t reachable() const {
    std::size_t n = 0;
    for (std::size_t w = 0; w < cand_left_.size(); ++w) n += std::min(cand_left_[w], ref_free_[w]);
    return n;
  }

  void dfs(std::size_t i, std::size_t matched, std::size_t chunks) {
    if (nodes_++ > budget_) return;
    if (chunks >= best_chunks_) return;
    if (matched + reachable() < target_) return;
    if (i == c_.size()) {
      if (matched == target_) {
        best_ = cur_;
        best_chunks_ = chunks;
      }
      return;
    }
    const auto w = static_cast<std::size_t>(c_[i]);
    --cand_left_[w];
    const int prev = i > 0 ? cur_[i - 1] : -1;
    // Extending the current chunk first finds good bounds early.
    std::vector<std::size_t> options;
    if (prev >= 0 && static_cast<std::size_t>(prev + 1) < r_.size() &&
        !used_[static_cast<std::size_t>(prev + 1)] && r_[static_cast<std::size_t>(prev + 1)] == c_[i]) {
      options.push_back(static_cast<std::size_t>(prev + 1));
    }
    for (std::size_t j : by_word_[w]) {
      if (!used_[j] && (options.empty() || j != options.front())) options.push_back(j);
    }
    for (std::size_t j : options) {
      used_[j] = true;
      --ref_free_[w];
      cur_[i] = static_cast<int>(j);
      const bool continues = prev >= 0 && static_cast<std::size_t>(prev + 1) == j;
      dfs(i + 1, matched + 1, chunks + (continues ? 0 : 1));
      cur_[i] = -1;
      ++ref_free_[w];
      used_[j] = false;
    }
    dfs(i + 1, matched, chunks);
    ++cand_left_[w];
  }

  const std::vector<int>& c_;
  const std::vector<int>& r_;
  std::size_t target_;
  std::size_t budget_;
  std::size_t nodes_ = 0;
  std::vector<int> best_;
  std::size_t best_chunks_;
  std::vector<int> cur_;
  std::vector<bool> used_;
  std::vector<std::size_t> cand_left_;
  std::vector<std::size_t> ref_free_;
  std::vector<std::vector<std::size_t>> by_word_;
};

}  // namespace detail

/// Exact-match unigram alignment with the most matches, then the fewest
/// chunks. The chunk minimization is exhaustive up to `search_budget` search
/// nodes and falls back to the greedy longest-run alignment beyond that.
inline Alignment align(const Tokens& candidate, const Tokens& reference,
                       std::size_t search_budget = 200000) {
  std::unordered_map<std::string, int> ids;
  auto id_of = [&](const std::string& s) {
    auto [it, inserted] = ids.emplace(s, static_cast<int>(ids.size()));
    return it->second;
  };
  std::vector<int> c, r;
  for (const auto& t : candidate) c.push_back(id_of(t));
  for (const auto& t : reference) r.push_back(id_of(t));
  std::vector<int> ref_of = detail::greedy_alignment(c, r);
  Alignment a;
  a.matches = static_cast<std::size_t>(std::count_if(ref_of.begin(), ref_of.end(),
                                                     [](int j) { return j >= 0; }));
  if (a.matches > 1) {
    ref_of = detail::ChunkSearch(c, r, ids.size(), a.matches, ref_of, search_budget).run();
  }
  a.chunks = detail::count_chunks(ref_of);
  a.ref_of = std::move(ref_of);
  return a;
}

inline double meteor(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const Alignment a = align(candidate, reference);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / m;
  const double penalty = 0.5 * frag * frag * frag;
  return std::clamp(f_mean * (1.0 - penalty), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Cosine similarity

/// Maps a (candidate, reference) pair to two equal-length vectors.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::pair<std::vector<double>, std::vector<double>> embed(const Tokens& candidate,
                                                                    const Tokens& reference) const = 0;
};

/// Term-frequency vectors over the pair's shared vocabulary.
class TfEmbedder final : public Embedder {
 public:
  std::pair<std::vector<double>, std::vector<double>> embed(const Tokens& candidate,
                                                            const Tokens& reference) const override {
    std::map<std::string, std::size_t> index;
    for (const auto& t : candidate) index.emplace(t, index.size());
    for (const auto& t : reference) index.emplace(t, index.size());
    std::vector<double> a(index.size(), 0.0), b(index.size(), 0.0);
    for (const auto& t : candidate) a[index[t]] += 1.0;
    for (const auto& t : reference) b[index[t]] += 1.0;
    return {std::move(a), std::move(b)};
  }
};

/// cos(a, b) clamped to [0, 1]; 0 when either vector is zero.
inline double cosine_vectors(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::kInput, "embedding dimensions differ (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

inline double cosine(const Tokens& candidate, const Tokens& reference,
                     const Embedder& embedder = TfEmbedder{}) {
  const auto [a, b] = embedder.embed(candidate, reference);
  return cosine_vectors(a, b);
}

// ---------------------------------------------------------------------------
// Throughput and aggregation

inline double tokens_per_second(double n_tokens, double duration_s) {
  if (!(duration_s > 0.0)) fail(ErrorKind::kDivision, "tokens_per_second needs duration > 0");
  return n_tokens / duration_s;
}

struct MetricScores {
  double bleu = 0.0;
  double rouge1_f = 0.0;
  double rouge2_f = 0.0;
  double rougeL_f = 0.0;
  double meteor = 0.0;
  double cosine = 0.0;
  double tokens_per_s = 0.0;

  bool operator==(const MetricScores&) const = default;
};

inline void to_json(nlohmann::json& j, const MetricScores& s) {
  j = nlohmann::json{{"bleu", s.bleu},       {"rouge1_f", s.rouge1_f}, {"rouge2_f", s.rouge2_f},
                     {"rougeL_f", s.rougeL_f}, {"meteor", s.meteor},   {"cosine", s.cosine},
                     {"tokens_per_s", s.tokens_per_s}};
}

inline void from_json(const nlohmann::json& j, MetricScores& s) {
  s.bleu = j.at("bleu").get<double>();
  s.rouge1_f = j.at("rouge1_f").get<double>();
  s.rouge2_f = j.at("rouge2_f").get<double>();
  s.rougeL_f = j.at("rougeL_f").get<double>();
  s.meteor = j.at("meteor").get<double>();
  s.cosine = j.at("cosine").get<double>();
  s.tokens_per_s = j.at("tokens_per_s").get<double>();
}

struct TextPair {
  std::string candidate;
  std::string reference;
};

struct Timing {
  double n_tokens = 0.0;
  double duration_s = 0.0;
};

/// Corpus BLEU over all pairs, per-pair means of ROUGE/METEOR/cosine, and
/// throughput from `timing` (0 when no time elapsed). Pairs may be scored on
/// several threads; reduction is in input order, so results do not depend on
/// the thread count.
inline MetricScores score_outputs(std::span<const TextPair> pairs, const Timing& timing,
                                  const Embedder& embedder = TfEmbedder{},
                                  std::size_t threads = 1) {
  if (pairs.empty()) fail(ErrorKind::kInput, "score_outputs needs at least one pair");
  struct PerPair {
    BleuStats bleu{4};
    double r1 = 0, r2 = 0, rl = 0, met = 0, cos = 0;
  };
  std::vector<PerPair> per(pairs.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Tokens c = tokenize(pairs[i].candidate);
      const Tokens r = tokenize(pairs[i].reference);
      const Tokens refs[] = {r};
      per[i].bleu = bleu_stats(c, refs, 4);
      per[i].r1 = rouge_n(c, r, 1);
      per[i].r2 = rouge_n(c, r, 2);
      per[i].rl = rouge_l(c, r);
      per[i].met = meteor(c, r);
      per[i].cos = cosine(c, r, embedder);
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, pairs.size());
  if (threads == 1) {
    work(0, pairs.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (pairs.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(pairs.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  BleuStats total(4);
  MetricScores s;
  for (const auto& p : per) {
    total += p.bleu;
    s.rouge1_f += p.r1;
    s.rouge2_f += p.r2;
    s.rougeL_f += p.rl;
    s.meteor += p.met;
    s.cosine += p.cos;
  }
  const double n = static_cast<double>(pairs.size());
  s.bleu = bleu_from_stats(total);
  s.rouge1_f /= n;
  s.rouge2_f /= n;
  s.rougeL_f /= n;
  s.meteor /= n;
  s.cosine /= n;
  s.tokens_per_s = timing.duration_s > 0.0 ? tokens_per_second(timing.n_tokens, timing.duration_s)
                                           : 0.0;
  return s;
}

}  // namespace ealm::metrics

#endif  // EALM_METRICS_HPP_
