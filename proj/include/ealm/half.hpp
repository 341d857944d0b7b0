// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

// IEEE 754 binary16 conversions in software.

#ifndef EALM_HALF_HPP_
#define EALM_HALF_HPP_

#include <bit>
#include <cstdint>

namespace ealm {

/// float -> binary16 bits, round-to-nearest-even. Overflow yields infinity,
/// NaN stays NaN (quiet).
constexpr std::uint16_t float_to_half_bits(float value) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(value);
  const std::uint16_t sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
  const std::uint32_t exp = (x >> 23) & 0xFFu;
  std::uint32_t mant = x & 0x7FFFFFu;

  if (exp == 0xFFu) {
    if (mant != 0) return static_cast<std::uint16_t>(sign | 0x7E00u | (mant >> 13));
    return static_cast<std::uint16_t>(sign | 0x7C00u);
  }

  const int e = static_cast<int>(exp) - 127 + 15;
  if (e >= 31) return static_cast<std::uint16_t>(sign | 0x7C00u);

  if (e <= 0) {
    // Below 2^-25 everything rounds to (signed) zero.
    if (e < -10) return sign;
    mant |= 0x800000u;
    const int shift = 14 - e;
    std::uint32_t half_mant = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1u);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (half_mant & 1u))) ++half_mant;
    return static_cast<std::uint16_t>(sign | half_mant);
  }

  std::uint32_t half = (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
  const std::uint32_t rem = mant & 0x1FFFu;
  // A carry out of the mantissa bumps the exponent, up to infinity.
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;
  return static_cast<std::uint16_t>(sign | half);
}

constexpr float half_bits_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;

  if (exp == 0x1Fu) {
    return std::bit_cast<float>(sign | 0x7F800000u | (mant << 13));
  }
  if (exp == 0) {
    if (mant == 0) return std::bit_cast<float>(sign);
    // Subnormal: normalize into a float exponent.
    int e = -1;
    do {
      ++e;
      mant <<= 1;
    } while ((mant & 0x400u) == 0);
    mant &= 0x3FFu;
    const std::uint32_t fexp = static_cast<std::uint32_t>(127 - 15 - e);
    return std::bit_cast<float>(sign | (fexp << 23) | (mant << 13));
  }
  return std::bit_cast<float>(sign | ((exp + 127 - 15) << 23) | (mant << 13));
}

/// Value of `value` after a trip through binary16.
constexpr float round_to_half(float value) {
  return half_bits_to_float(float_to_half_bits(value));
}

}  // namespace ealm

#endif  // EALM_HALF_HPP_
