// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

// Prompt/reference datasets: JSONL I/O, token-length statistics and a seeded
// synthetic fault-report corpus.

#ifndef EALM_PIPELINE_DATASET_HPP_
#define EALM_PIPELINE_DATASET_HPP_

#include <algorithm>
#include <cctype>
#include <iterator>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ealm/error.hpp"
#include "ealm/rng.hpp"
#include "ealm/tinylm.hpp"

namespace ealm::pipeline {

struct DatasetRecord {
  std::string prompt;
  std::string reference;

  bool operator==(const DatasetRecord&) const = default;
};

namespace detail {

inline bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace detail

/// One JSON object per line with string fields `prompt` and `reference`.
/// Blank lines are skipped.
inline std::vector<DatasetRecord> parse_jsonl(std::istream& in, const std::string& origin) {
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("prompt") || !j.contains("reference") ||
        !j["prompt"].is_string() || !j["reference"].is_string()) {
      fail(ErrorKind::kFormat, where + ": expected string fields 'prompt' and 'reference'");
    }
    DatasetRecord r{j["prompt"].get<std::string>(), j["reference"].get<std::string>()};
    if (detail::blank(r.prompt) || detail::blank(r.reference)) {
      fail(ErrorKind::kFormat, where + ": prompt and reference must be non-empty");
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<DatasetRecord> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open dataset '" + path + "'");
  return parse_jsonl(in, path);
}

inline std::string to_jsonl(const std::vector<DatasetRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += nlohmann::json{{"prompt", r.prompt}, {"reference", r.reference}}.dump();
    out += '\n';
  }
  return out;
}

inline void write_jsonl(const std::vector<DatasetRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  out << to_jsonl(records);
  if (!out) fail(ErrorKind::kIo, "write to '" + path + "' failed");
}

/// Histogram of example lengths in tokens (bos + prompt + separator +
/// reference + eos) in buckets of 16.
struct DatasetStats {
  static constexpr std::size_t kBucketWidth = 16;
  std::map<std::size_t, std::size_t> buckets;  // bucket lower bound -> count
  std::size_t count = 0;
  double mean = 0.0;
  std::size_t max = 0;
};

inline std::size_t record_tokens(const DatasetRecord& r) {
  return lm::make_example(r.prompt, r.reference).tokens.size();
}

inline DatasetStats stats_of_lengths(const std::vector<std::size_t>& lengths) {
  if (lengths.empty()) fail(ErrorKind::kInput, "dataset is empty");
  DatasetStats s;
  double sum = 0.0;
  for (std::size_t len : lengths) {
    ++s.buckets[len / DatasetStats::kBucketWidth * DatasetStats::kBucketWidth];
    sum += static_cast<double>(len);
    s.max = std::max(s.max, len);
  }
  s.count = lengths.size();
  s.mean = sum / static_cast<double>(s.count);
  return s;
}

inline DatasetStats dataset_stats(const std::vector<DatasetRecord>& records) {
  std::vector<std::size_t> lengths;
  for (const auto& r : records) lengths.push_back(record_tokens(r));
  return stats_of_lengths(lengths);
}

inline void to_json(nlohmann::json& j, const DatasetStats& s) {
  nlohmann::json buckets = nlohmann::json::array();
  for (auto [lo, n] : s.buckets) {
    buckets.push_back({{"lo", lo}, {"hi", lo + DatasetStats::kBucketWidth}, {"count", n}});
  }
  j = nlohmann::json{{"count", s.count}, {"mean", s.mean}, {"max", s.max},
                     {"bucket_width", DatasetStats::kBucketWidth}, {"buckets", buckets}};
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace detail {

struct FaultEntry {
  std::string_view component;
  std::string_view cause;
  std::string_view fix;
};

inline constexpr FaultEntry kFaultGrammar[] = {
    {"pump", "seal worn", "replace seal"},
    {"valve", "filter clogged", "clean filter"},
    {"fan", "belt loose", "tighten belt"},
    {"motor", "sensor drift", "recalibrate sensor"},
    {"boiler", "low pressure", "refill circuit"},
    {"relay", "contact burnt", "swap relay"},
    {"heater", "element open", "replace element"},
    {"drive", "overcurrent trip", "check wiring"},
};

}  // namespace detail

inline constexpr std::size_t kMaxGrammarSize = std::size(detail::kFaultGrammar);

/// Records "E<code> <component>" -> "<cause>; <fix>". Components cycle through
/// the first `grammar_size` grammar entries; fault codes come from the seeded
/// stream `stream`.
inline std::vector<DatasetRecord> generate_synthetic_corpus(std::uint64_t seed, std::size_t n_records,
                                                            std::size_t grammar_size,
                                                            std::string_view stream = "corpus") {
  if (n_records < 1) fail(ErrorKind::kInput, "synthetic corpus needs at least one record");
  if (grammar_size < 1 || grammar_size > kMaxGrammarSize) {
    fail(ErrorKind::kInput, "grammar_size must lie in [1, " + std::to_string(kMaxGrammarSize) + "]");
  }
  Stream rng(seed, stream);
  std::vector<DatasetRecord> out;
  out.reserve(n_records);
  for (std::size_t i = 0; i < n_records; ++i) {
    const auto& e = detail::kFaultGrammar[i % grammar_size];
    const std::uint64_t code = 100 + rng.below(900);
    out.push_back({"E" + std::to_string(code) + " " + std::string(e.component),
                   std::string(e.cause) + "; " + std::string(e.fix)});
  }
  return out;
}

}  // namespace ealm::pipeline

#endif  // EALM_PIPELINE_DATASET_HPP_
