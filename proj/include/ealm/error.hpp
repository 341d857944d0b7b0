// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef EALM_ERROR_HPP_
#define EALM_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace ealm {

enum class ErrorKind {
  kIo,          // read/write failure
  kFormat,      // bad magic, version or structure
  kCorruption,  // truncated or inconsistent payload
  kInvariant,   // container invariant violated (duplicate names, shapes)
  kNumeric,     // non-finite input or result
  kEncoding,    // out-of-range code for packing
  kSpec,        // invalid quant/prune/ranking parameters
  kShape,       // tensor rank or dimension mismatch
  kMask,        // mask does not match its target
  kLineage,     // operation not allowed for the bundle's history
  kLength,      // sequence too long / empty
  kVocab,       // token id out of range
  kDivergence,  // training produced a non-finite loss
  kPrecision,   // operation requires a 32-bit base
  kUsage,       // API misuse (nested spans, etc.)
  kSource,      // energy source unavailable
  kOrdering,    // timestamps out of order
  kInput,       // invalid metric input
  kDivision,    // division by zero
  kWeight,      // ranking weight out of range
  kReference,   // baseline reference unusable
  kConfig,      // configuration error
  kStage,       // pipeline stage failure
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kCorruption: return "corruption";
    case ErrorKind::kInvariant: return "invariant";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kEncoding: return "encoding";
    case ErrorKind::kSpec: return "spec";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kMask: return "mask";
    case ErrorKind::kLineage: return "lineage";
    case ErrorKind::kLength: return "length";
    case ErrorKind::kVocab: return "vocab";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kPrecision: return "precision";
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kSource: return "source";
    case ErrorKind::kOrdering: return "ordering";
    case ErrorKind::kInput: return "input";
    case ErrorKind::kDivision: return "division";
    case ErrorKind::kWeight: return "weight";
    case ErrorKind::kReference: return "reference";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kStage: return "stage";
  }
  return "unknown";
}

/// Single exception type for the library; `kind()` distinguishes failure classes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace ealm

#endif  // EALM_ERROR_HPP_
