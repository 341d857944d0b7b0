// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef EALM_PACK_HPP_
#define EALM_PACK_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ealm/error.hpp"

namespace ealm {

/// Packs signed 4-bit codes in [-7, 7] two per byte, low nibble = even index.
/// An odd tail leaves the high nibble zero.
inline std::vector<std::uint8_t> pack4(std::span<const std::int8_t> codes) {
  std::vector<std::uint8_t> out((codes.size() + 1) / 2, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const int c = codes[i];
    if (c < -7 || c > 7) {
      fail(ErrorKind::kEncoding,
           "4-bit code " + std::to_string(c) + " at index " + std::to_string(i) +
               " outside [-7, 7]");
    }
    const auto nibble = static_cast<std::uint8_t>(static_cast<std::uint8_t>(c) & 0x0Fu);
    out[i / 2] |= (i % 2 == 0) ? nibble : static_cast<std::uint8_t>(nibble << 4);
  }
  return out;
}

/// Inverse of pack4; `count` codes are read. Nibble 0x8 (-8) is rejected.
inline std::vector<std::int8_t> unpack4(std::span<const std::uint8_t> bytes, std::size_t count) {
  if (bytes.size() != (count + 1) / 2) {
    fail(ErrorKind::kEncoding, "packed 4-bit buffer of " + std::to_string(bytes.size()) +
                                   " bytes cannot hold " + std::to_string(count) + " codes");
  }
  std::vector<std::int8_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t nibble = (i % 2 == 0) ? (bytes[i / 2] & 0x0Fu) : (bytes[i / 2] >> 4);
    if (nibble == 0x08u) {
      fail(ErrorKind::kEncoding, "4-bit code -8 at index " + std::to_string(i));
    }
    // Sign-extend the nibble.
    out[i] = static_cast<std::int8_t>(nibble >= 8 ? static_cast<int>(nibble) - 16 : nibble);
  }
  return out;
}

}  // namespace ealm

#endif  // EALM_PACK_HPP_
