// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

// Magnitude (unstructured) and N:M (structured) pruning masks.

#ifndef EALM_PRUNE_HPP_
#define EALM_PRUNE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "ealm/error.hpp"
#include "ealm/lm_config.hpp"
#include "ealm/tensors.hpp"

namespace ealm::prune {

enum class Method { kUnstructuredMagnitude, kStructuredNM };
enum class Scope { kPerTensor, kGlobal };

inline std::string_view method_name(Method m) {
  return m == Method::kUnstructuredMagnitude ? "unstructured-magnitude" : "structured-nm";
}
inline std::string_view scope_name(Scope s) {
  return s == Scope::kPerTensor ? "per-tensor" : "global";
}

struct PruneSpec {
  Method method = Method::kUnstructuredMagnitude;
  double ratio = 0.0;  // unstructured only
  int n = 0;           // structured only
  int m = 0;
  Scope scope = Scope::kPerTensor;
  std::function<bool(std::string_view)> target_filter = is_adaptable_weight;

  static PruneSpec magnitude(double ratio, Scope scope = Scope::kPerTensor) {
    PruneSpec s;
    s.method = Method::kUnstructuredMagnitude;
    s.ratio = ratio;
    s.scope = scope;
    return s;
  }

  static PruneSpec n_of_m(int n, int m) {
    PruneSpec s;
    s.method = Method::kStructuredNM;
    s.n = n;
    s.m = m;
    return s;
  }

  void validate() const {
    if (method == Method::kUnstructuredMagnitude) {
      if (!(ratio > 0.0 && ratio < 1.0)) {
        fail(ErrorKind::kSpec, "pruning ratio must lie in (0, 1), got " + std::to_string(ratio));
      }
      if (n != 0 || m != 0) fail(ErrorKind::kSpec, "unstructured spec must not set n:m");
    } else {
      if (n < 1 || m < 1 || n >= m) {
        fail(ErrorKind::kSpec, "N:M pattern needs 1 <= n < m, got " + std::to_string(n) + ":" +
                                   std::to_string(m));
      }
      if (ratio != 0.0) fail(ErrorKind::kSpec, "structured spec must not set a ratio");
    }
  }

  /// Short label used in candidate ids, e.g. "mag30" or "nm2of4".
  std::string label() const {
    if (method == Method::kStructuredNM) {
      return "nm" + std::to_string(n) + "of" + std::to_string(m);
    }
    return "mag" + std::to_string(static_cast<int>(std::lround(ratio * 100.0))) +
           (scope == Scope::kGlobal ? "g" : "");
  }

  PruneLineage lineage(double achieved_sparsity) const {
    PruneLineage l;
    l.method = std::string(method_name(method));
    l.scope = std::string(scope_name(scope));
    l.sparsity = achieved_sparsity;
    if (method == Method::kUnstructuredMagnitude) {
      l.ratio = ratio;
    } else {
      l.n = n;
      l.m = m;
    }
    return l;
  }
};

/// 1 = keep, 0 = zero; same shape as the target.
struct TensorMask {
  Shape shape;
  std::vector<std::uint8_t> keep;

  std::size_t zeros() const {
    return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), std::uint8_t{0}));
  }
};

struct SparsityMask {
  std::map<std::string, TensorMask> masks;
};

/// Number of weights to remove; the epsilon absorbs representation error in
/// ratio * count (0.29 * 100 must give 29).
inline std::size_t prune_count(double ratio, std::size_t count) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(count) + 1e-9));
}

/// Zeros the floor(ratio * count) smallest magnitudes across all inputs,
/// treated as one flat sequence in order. Among equal magnitudes the higher
/// flat index goes first.
inline std::vector<TensorMask> magnitude_masks(const std::vector<const Tensor*>& tensors,
                                               double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    fail(ErrorKind::kSpec, "pruning ratio must lie in (0, 1), got " + std::to_string(ratio));
  }
  std::vector<float> mags;
  for (const Tensor* t : tensors) {
    for (float v : t->data) mags.push_back(std::fabs(v));
  }
  std::vector<std::size_t> order(mags.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t k = prune_count(ratio, mags.size());
  auto smaller_first = [&](std::size_t a, std::size_t b) {
    if (mags[a] != mags[b]) return mags[a] < mags[b];
    return a > b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    smaller_first);

  std::vector<std::uint8_t> keep(mags.size(), 1);
  for (std::size_t i = 0; i < k; ++i) keep[order[i]] = 0;

  std::vector<TensorMask> out;
  std::size_t offset = 0;
  for (const Tensor* t : tensors) {
    TensorMask m{t->shape, std::vector<std::uint8_t>(keep.begin() + static_cast<std::ptrdiff_t>(offset),
                                                     keep.begin() + static_cast<std::ptrdiff_t>(offset + t->numel()))};
    offset += t->numel();
    out.push_back(std::move(m));
  }
  return out;
}

inline TensorMask magnitude_mask(const Tensor& t, double ratio) {
  return magnitude_masks({&t}, ratio).front();
}

/// Along each row, every run of m consecutive weights keeps its n largest
/// magnitudes (lower in-group index wins ties). A trailing partial group of
/// size g keeps min(n, g).
inline TensorMask nm_mask(const Tensor& t, int n, int m) {
  if (!t.is_matrix()) {
    fail(ErrorKind::kShape, "N:M masks need a matrix, got shape " + shape_string(t.shape));
  }
  if (n < 1 || m < 1 || n >= m) {
    fail(ErrorKind::kSpec, "N:M pattern needs 1 <= n < m");
  }
  TensorMask mask{t.shape, std::vector<std::uint8_t>(t.numel(), 0)};
  const std::size_t cols = t.cols();
  std::vector<std::size_t> idx;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto row = t.row(r);
    for (std::size_t start = 0; start < cols; start += static_cast<std::size_t>(m)) {
      const std::size_t g = std::min(static_cast<std::size_t>(m), cols - start);
      idx.resize(g);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(row[start + a]) > std::fabs(row[start + b]);
      });
      const std::size_t keep = std::min(static_cast<std::size_t>(n), g);
      for (std::size_t i = 0; i < keep; ++i) mask.keep[r * cols + start + idx[i]] = 1;
    }
  }
  return mask;
}

/// Builds the mask for every targeted tensor of a bundle, judging magnitudes
/// on the dequantized values.
inline SparsityMask build_mask(const ModelBundle& b, const PruneSpec& spec) {
  spec.validate();
  SparsityMask out;
  std::vector<std::string> names;
  std::vector<Tensor> dense;
  for (const auto& nt : b.tensors) {
    if (!spec.target_filter(nt.name)) continue;
    names.push_back(nt.name);
    dense.push_back(to_float(nt.tensor));
  }
  if (spec.method == Method::kStructuredNM) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      out.masks[names[i]] = nm_mask(dense[i], spec.n, spec.m);
    }
  } else if (spec.scope == Scope::kGlobal) {
    std::vector<const Tensor*> ptrs;
    for (const auto& t : dense) ptrs.push_back(&t);
    auto masks = magnitude_masks(ptrs, spec.ratio);
    for (std::size_t i = 0; i < names.size(); ++i) out.masks[names[i]] = std::move(masks[i]);
  } else {
    for (std::size_t i = 0; i < names.size(); ++i) {
      out.masks[names[i]] = magnitude_mask(dense[i], spec.ratio);
    }
  }
  return out;
}

inline bool is_zero(const StoredTensor& t, std::size_t i) {
  if (const auto* d = std::get_if<Tensor>(&t)) return d->data[i] == 0.0f;
  if (const auto* h = std::get_if<HalfTensor>(&t)) return (h->bits[i] & 0x7FFFu) == 0;
  return std::get<QuantizedTensor>(t).codes[i] == 0;
}

/// Fraction of exactly-zero weights among the targeted tensors.
inline double sparsity(const ModelBundle& b,
                       const std::function<bool(std::string_view)>& filter = is_adaptable_weight) {
  std::size_t zeros = 0;
  std::size_t total = 0;
  for (const auto& nt : b.tensors) {
    if (!filter(nt.name)) continue;
    const std::size_t n = numel_of(nt.tensor);
    for (std::size_t i = 0; i < n; ++i) zeros += is_zero(nt.tensor, i) ? 1 : 0;
    total += n;
  }
  return total ? static_cast<double>(zeros) / static_cast<double>(total) : 0.0;
}

/// Zeros masked elements (codes for integer storage) and records the spec and
/// achieved sparsity in lineage.
inline ModelBundle apply_mask(const ModelBundle& b, const SparsityMask& mask,
                              const PruneSpec& spec) {
  for (const auto& [name, m] : mask.masks) {
    const StoredTensor* t = b.find(name);
    if (!t) fail(ErrorKind::kMask, "mask targets unknown tensor '" + name + "'");
    if (!spec.target_filter(name)) {
      fail(ErrorKind::kMask, "mask covers non-targeted tensor '" + name + "'");
    }
    if (m.shape != shape_of(*t) || m.keep.size() != numel_of(*t)) {
      fail(ErrorKind::kMask, "mask shape " + shape_string(m.shape) + " does not match tensor '" +
                                 name + "' " + shape_string(shape_of(*t)));
    }
  }
  ModelBundle out = b;
  for (auto& nt : out.tensors) {
    auto it = mask.masks.find(nt.name);
    if (it == mask.masks.end()) continue;
    const auto& keep = it->second.keep;
    std::visit(
        [&](auto& t) {
          using T = std::decay_t<decltype(t)>;
          for (std::size_t i = 0; i < keep.size(); ++i) {
            if (keep[i]) continue;
            if constexpr (std::is_same_v<T, Tensor>) {
              t.data[i] = 0.0f;
            } else if constexpr (std::is_same_v<T, HalfTensor>) {
              t.bits[i] = 0;
            } else {
              t.codes[i] = 0;
            }
          }
        },
        nt.tensor);
  }
  out.lineage.prune = spec.lineage(sparsity(out, spec.target_filter));
  return out;
}

/// Convenience: build_mask followed by apply_mask.
inline ModelBundle prune_bundle(const ModelBundle& b, const PruneSpec& spec) {
  return apply_mask(b, build_mask(b, spec), spec);
}

}  // namespace ealm::prune

#endif  // EALM_PRUNE_HPP_
