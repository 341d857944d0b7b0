// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

// Weight quantization over the 2^n-bit grid {4, 8, 16, 32}.
//
// 4/8-bit use symmetric codes in [-qmax, qmax] (qmax = 7 or 127) with
// scale = max|x| / qmax per tensor or per row; an all-zero row gets scale 1.
// Codes are round-half-away-from-zero of x / scale, evaluated against the
// exact scale in double precision. 16-bit stores binary16 (round to nearest
// even); 32-bit passes through.

#ifndef EALM_QUANT_HPP_
#define EALM_QUANT_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include "ealm/error.hpp"
#include "ealm/half.hpp"
#include "ealm/lm_config.hpp"
#include "ealm/pack.hpp"
#include "ealm/tensors.hpp"

namespace ealm::quant {

enum class Granularity { kPerTensor, kPerRow };

struct QuantSpec {
  int bits = 8;
  Granularity granularity = Granularity::kPerRow;
  std::function<bool(std::string_view)> target_filter = is_adaptable_weight;

  void validate() const {
    if (bits != 4 && bits != 8 && bits != 16 && bits != 32) {
      fail(ErrorKind::kSpec, "quantization bits must be one of 4, 8, 16, 32 (got " +
                                 std::to_string(bits) + ")");
    }
  }
};

inline int qmax_for_bits(int bits) { return bits == 4 ? 7 : 127; }

inline QuantizedTensor quantize_symmetric(const Tensor& t, int bits, Granularity granularity) {
  const int qmax = qmax_for_bits(bits);
  QuantizedTensor q;
  q.shape = t.shape;
  q.bits = bits;
  q.codes.resize(t.numel());
  const std::size_t groups = granularity == Granularity::kPerRow ? t.rows() : 1;
  const std::size_t group_len = groups == 0 ? 0 : t.numel() / groups;
  q.scales.resize(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    const float* x = t.data.data() + g * group_len;
    float max_abs = 0.0f;
    for (std::size_t i = 0; i < group_len; ++i) max_abs = std::max(max_abs, std::fabs(x[i]));
    if (max_abs == 0.0f) {
      q.scales[g] = 1.0f;
      continue;  // codes already zero
    }
    q.scales[g] = static_cast<float>(static_cast<double>(max_abs) / qmax);
    const double inv = qmax / static_cast<double>(max_abs);
    for (std::size_t i = 0; i < group_len; ++i) {
      // std::round is half-away-from-zero.
      double code = std::round(static_cast<double>(x[i]) * inv);
      code = std::clamp(code, -static_cast<double>(qmax), static_cast<double>(qmax));
      q.codes[g * group_len + i] = static_cast<std::int8_t>(code);
    }
  }
  return q;
}

inline HalfTensor quantize_half(const Tensor& t) {
  HalfTensor h{t.shape, std::vector<std::uint16_t>(t.numel())};
  for (std::size_t i = 0; i < t.numel(); ++i) {
    h.bits[i] = float_to_half_bits(t.data[i]);
    if (!std::isfinite(half_bits_to_float(h.bits[i]))) {
      fail(ErrorKind::kNumeric, "value " + std::to_string(t.data[i]) +
                                    " overflows binary16 at index " + std::to_string(i));
    }
  }
  return h;
}

/// Tensor -> stored representation at spec.bits.
inline StoredTensor quantize(const Tensor& t, const QuantSpec& spec) {
  spec.validate();
  if (!t.all_finite()) fail(ErrorKind::kNumeric, "cannot quantize a non-finite tensor");
  switch (spec.bits) {
    case 32: return t;
    case 16: return quantize_half(t);
    default: return quantize_symmetric(t, spec.bits, spec.granularity);
  }
}

inline Tensor dequantize(const QuantizedTensor& q) { return to_float(q); }
inline Tensor dequantize(const HalfTensor& h) { return to_float(h); }
inline Tensor dequantize(const StoredTensor& s) { return to_float(s); }

struct QuantError {
  double max_abs_err = 0.0;
  double mse = 0.0;
};

inline QuantError quant_error(const Tensor& t, const QuantSpec& spec) {
  const Tensor back = to_float(quantize(t, spec));
  QuantError e;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double d = static_cast<double>(t.data[i]) - static_cast<double>(back.data[i]);
    e.max_abs_err = std::max(e.max_abs_err, std::fabs(d));
    sum_sq += d * d;
  }
  e.mse = t.numel() ? sum_sq / static_cast<double>(t.numel()) : 0.0;
  return e;
}

/// Quantizes the targeted tensors of a 32-bit bundle; everything else is
/// copied. Lineage precision becomes spec.bits.
inline ModelBundle quantize_bundle(const ModelBundle& b, const QuantSpec& spec) {
  spec.validate();
  if (b.lineage.precision_bits != 32) {
    fail(ErrorKind::kLineage, "bundle is already stored at " +
                                  std::to_string(b.lineage.precision_bits) + " bits");
  }
  ModelBundle out;
  out.config = b.config;
  out.lineage = b.lineage;
  out.lineage.precision_bits = spec.bits;
  out.tensors.reserve(b.tensors.size());
  for (const auto& nt : b.tensors) {
    if (spec.target_filter(nt.name)) {
      const auto* dense = std::get_if<Tensor>(&nt.tensor);
      if (!dense) {
        fail(ErrorKind::kLineage, "tensor '" + nt.name + "' is not stored at 32 bits");
      }
      out.tensors.push_back({nt.name, quantize(*dense, spec)});
    } else {
      out.tensors.push_back(nt);
    }
  }
  return out;
}

}  // namespace ealm::quant

#endif  // EALM_QUANT_HPP_
