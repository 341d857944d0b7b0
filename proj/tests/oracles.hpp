// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations used by the unit and acceptance
// tests. Written for obviousness, not speed, and sharing no code with the
// library routines they check.

#ifndef EALM_TESTS_ORACLES_HPP_
#define EALM_TESTS_ORACLES_HPP_

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

// ---------------------------------------------------------------------------
// binary16

/// Decodes half bits from the textbook formula.
inline double half_value(std::uint16_t h) {
  const int sign = (h >> 15) & 1;
  const int exp = (h >> 10) & 0x1F;
  const int frac = h & 0x3FF;
  double v;
  if (exp == 0) {
    v = std::ldexp(static_cast<double>(frac), -24);
  } else if (exp == 31) {
    v = frac ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  } else {
    v = std::ldexp(1024.0 + frac, exp - 25);
  }
  return sign ? -v : v;
}

/// Every finite non-negative half, sorted by value (bits are monotone).
inline const std::vector<std::pair<double, std::uint16_t>>& positive_halves() {
  static const auto table = [] {
    std::vector<std::pair<double, std::uint16_t>> t;
    for (std::uint32_t b = 0; b < 0x7C00; ++b) t.emplace_back(half_value(static_cast<std::uint16_t>(b)), b);
    return t;
  }();
  return table;
}

/// Nearest half by exhaustive table search; ties go to the even mantissa;
/// magnitudes at or past the midpoint above the largest finite half become
/// infinity.
inline std::uint16_t to_half(float x) {
  if (std::isnan(x)) return 0x7E00;
  const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0;
  const double a = std::fabs(static_cast<double>(x));
  const double max_finite = 65504.0;
  if (a >= max_finite + 16.0) return sign | 0x7C00;
  const auto& t = positive_halves();
  auto it = std::lower_bound(t.begin(), t.end(), a,
                             [](const auto& e, double v) { return e.first < v; });
  if (it == t.end()) return sign | 0x7BFF;
  if (it->first == a || it == t.begin()) return sign | it->second;
  const auto lo = *(it - 1);
  const auto hi = *it;
  const double dl = a - lo.first, dh = hi.first - a;
  if (dl < dh) return sign | lo.second;
  if (dh < dl) return sign | hi.second;
  return sign | ((lo.second & 1) == 0 ? lo.second : hi.second);
}

// ---------------------------------------------------------------------------
// Gradients

/// Central difference of `loss()` with respect to the parameter `x`, using
/// the step actually representable in float.
template <typename LossFn>
double central_difference(LossFn&& loss, float& x, float h) {
  const float x0 = x;
  const float hi = x0 + h, lo = x0 - h;
  x = hi;
  const double up = loss();
  x = lo;
  const double down = loss();
  x = x0;
  return (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
}

// ---------------------------------------------------------------------------
// Pruning

/// Flat indices zeroed by magnitude pruning: sort every index by (|w|
/// ascending, index descending) and take the first floor(ratio * n).
inline std::set<std::size_t> magnitude_zeros(const std::vector<float>& w, double ratio) {
  std::vector<std::size_t> idx(w.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const float ma = std::fabs(w[a]), mb = std::fabs(w[b]);
    return ma != mb ? ma < mb : a > b;
  });
  // ratio * n rounded down, computed in long double to dodge binary
  // representation error in the ratio.
  const auto k = static_cast<std::size_t>(
      std::floor(static_cast<long double>(ratio) * static_cast<long double>(w.size()) + 1e-12L));
  return {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k)};
}

/// Kept positions of one N:M group: the n largest |w|, lower index first on
/// ties.
inline std::set<std::size_t> nm_keep(const std::vector<float>& group, int n) {
  std::vector<std::size_t> idx(group.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const float ma = std::fabs(group[a]), mb = std::fabs(group[b]);
    return ma != mb ? ma > mb : a < b;
  });
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(n), group.size());
  return {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep)};
}

// ---------------------------------------------------------------------------
// Text metrics

using Words = std::vector<std::string>;

inline std::map<std::string, int> ngram_bag(const Words& w, std::size_t n) {
  std::map<std::string, int> bag;
  for (std::size_t i = 0; i + n <= w.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) key += w[i + k] + '\x1f';
    ++bag[key];
  }
  return bag;
}

/// Sentence BLEU against one reference, orders with no candidate n-grams
/// skipped.
inline double bleu(const Words& c, const Words& r) {
  double log_sum = 0.0;
  int orders = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto cb = ngram_bag(c, n), rb = ngram_bag(r, n);
    int total = 0, hit = 0;
    for (const auto& [g, k] : cb) {
      total += k;
      auto it = rb.find(g);
      hit += std::min(k, it == rb.end() ? 0 : it->second);
    }
    if (total == 0) continue;
    if (hit == 0) return 0.0;
    log_sum += std::log(static_cast<double>(hit) / total);
    ++orders;
  }
  if (orders == 0) return 0.0;
  const double bp = c.size() >= r.size() ? 1.0 : std::exp(1.0 - double(r.size()) / double(c.size()));
  return bp * std::exp(log_sum / orders);
}

inline double f1(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

inline double rouge_n(const Words& c, const Words& r, std::size_t n) {
  const auto cb = ngram_bag(c, n), rb = ngram_bag(r, n);
  int ct = 0, rt = 0, hit = 0;
  for (const auto& [g, k] : cb) ct += k;
  for (const auto& [g, k] : rb) {
    rt += k;
    auto it = cb.find(g);
    hit += std::min(k, it == cb.end() ? 0 : it->second);
  }
  if (ct == 0 || rt == 0) return 0.0;
  return f1(double(hit) / ct, double(hit) / rt);
}

/// LCS by exhaustive memoized recursion.
inline std::size_t lcs(const Words& a, const Words& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  auto go = [&](auto&& self, std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size() || j == b.size()) return 0;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = a[i] == b[j] ? 1 + self(self, i + 1, j + 1)
                                    : std::max(self(self, i + 1, j), self(self, i, j + 1));
    memo[key] = best;
    return best;
  };
  return go(go, 0, 0);
}

inline double rouge_l(const Words& c, const Words& r) {
  if (c.empty() || r.empty()) return 0.0;
  const double l = static_cast<double>(lcs(c, r));
  return f1(l / c.size(), l / r.size());
}

/// METEOR by enumerating every alignment of short sequences: the most
/// matches, then the fewest chunks.
inline double meteor(const Words& c, const Words& r) {
  if (c.empty() || r.empty()) return 0.0;
  std::size_t best_m = 0, best_chunks = 0;
  std::vector<int> align(c.size(), -1);
  std::vector<bool> used(r.size(), false);
  auto go = [&](auto&& self, std::size_t i) -> void {
    if (i == c.size()) {
      std::size_t m = 0, chunks = 0;
      for (std::size_t k = 0; k < c.size(); ++k) {
        if (align[k] < 0) continue;
        ++m;
        if (!(k > 0 && align[k - 1] >= 0 && align[k - 1] + 1 == align[k])) ++chunks;
      }
      if (m > best_m || (m == best_m && chunks < best_chunks)) {
        best_m = m;
        best_chunks = chunks;
      }
      return;
    }
    self(self, i + 1);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (used[j] || r[j] != c[i]) continue;
      used[j] = true;
      align[i] = static_cast<int>(j);
      self(self, i + 1);
      align[i] = -1;
      used[j] = false;
    }
  };
  go(go, 0);
  if (best_m == 0) return 0.0;
  const double p = double(best_m) / c.size(), rr = double(best_m) / r.size();
  const double fmean = 10 * p * rr / (rr + 9 * p);
  const double frag = double(best_chunks) / best_m;
  return fmean * (1 - 0.5 * frag * frag * frag);
}

inline double tf_cosine(const Words& c, const Words& r) {
  std::map<std::string, std::pair<double, double>> v;
  for (const auto& w : c) v[w].first += 1;
  for (const auto& w : r) v[w].second += 1;
  double dot = 0, na = 0, nb = 0;
  for (const auto& [w, ab] : v) {
    dot += ab.first * ab.second;
    na += ab.first * ab.first;
    nb += ab.second * ab.second;
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace oracle

#endif  // EALM_TESTS_ORACLES_HPP_
