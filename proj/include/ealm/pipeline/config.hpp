// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

// Pipeline configuration, read from a JSON file.

#ifndef EALM_PIPELINE_CONFIG_HPP_
#define EALM_PIPELINE_CONFIG_HPP_

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ealm/error.hpp"
#include "ealm/lm_config.hpp"
#include "ealm/meter.hpp"
#include "ealm/prune.hpp"
#include "ealm/pipeline/dataset.hpp"
#include "ealm/quant.hpp"

namespace ealm::pipeline {

struct LoraTrainConfig {
  std::size_t rank = 4;
  float alpha = 8.0f;
  float lr = 0.05f;
  std::size_t batch_size = 1;  // 0 = full batch
};

/// Seeded corpus generated into the output directory when no dataset paths
/// are given.
struct SyntheticData {
  std::size_t n_train = 16;
  std::size_t n_eval = 16;
  std::size_t grammar_size = 4;
};

struct PipelineConfig {
  std::vector<int> bits_grid = {4, 8, 16, 32};
  std::vector<int> epochs_grid = {5, 10};
  double w = 0.7;
  std::size_t k = 2;
  std::vector<double> prune_ratios = {0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<std::pair<int, int>> nm_patterns = {{2, 4}, {4, 8}};
  prune::Scope prune_scope = prune::Scope::kPerTensor;
  quant::Granularity quant_granularity = quant::Granularity::kPerRow;
  LmConfig lm;
  LoraTrainConfig lora;
  std::string train_path;
  std::string eval_path;
  std::optional<SyntheticData> synthetic = SyntheticData{};
  std::size_t max_new_tokens = 48;
  std::size_t metric_threads = 1;
  meter::MeterConfig meter;
  std::string out_dir = "out";
  std::uint64_t seed = 0;

  int max_epochs() const { return *std::max_element(epochs_grid.begin(), epochs_grid.end()); }

  bool uses_synthetic() const { return train_path.empty() && eval_path.empty() && synthetic; }

  std::string resolved_train_path() const {
    return uses_synthetic() ? (std::filesystem::path(out_dir) / "train.jsonl").string() : train_path;
  }
  std::string resolved_eval_path() const {
    return uses_synthetic() ? (std::filesystem::path(out_dir) / "eval.jsonl").string() : eval_path;
  }

  void validate() const {
    auto bad = [](const std::string& msg) { fail(ErrorKind::kConfig, msg); };
    if (bits_grid.empty()) bad("bits_grid must not be empty");
    if (epochs_grid.empty()) bad("epochs_grid must not be empty");
    for (int b : bits_grid) {
      if (b != 4 && b != 8 && b != 16 && b != 32) bad("bits_grid entries must be 4, 8, 16 or 32");
    }
    if (std::find(bits_grid.begin(), bits_grid.end(), 32) == bits_grid.end()) {
      bad("bits_grid must include 32: the 32-bit candidate is the energy baseline");
    }
    if (std::set<int>(bits_grid.begin(), bits_grid.end()).size() != bits_grid.size()) {
      bad("bits_grid has duplicates");
    }
    for (int e : epochs_grid) {
      if (e < 1) bad("epochs_grid entries must be >= 1");
    }
    if (std::set<int>(epochs_grid.begin(), epochs_grid.end()).size() != epochs_grid.size()) {
      bad("epochs_grid has duplicates");
    }
    if (!(w >= 0.0 && w <= 1.0)) fail(ErrorKind::kWeight, "w must lie in [0, 1]");
    if (k < 1) bad("k must be >= 1");
    for (double r : prune_ratios) {
      if (!(r > 0.0 && r < 1.0)) bad("prune ratios must lie in (0, 1)");
    }
    for (auto [n, m] : nm_patterns) {
      if (n < 1 || m < 1 || n >= m) bad("N:M patterns need 1 <= n < m");
    }
    lm.validate();
    if (lora.rank < 1) bad("lora.rank must be >= 1");
    if (!(lora.alpha > 0.0f)) bad("lora.alpha must be > 0");
    if (!(lora.lr >= 0.0f)) bad("lora.lr must be >= 0");
    if (max_new_tokens < 1) bad("max_new_tokens must be >= 1");
    if (out_dir.empty()) bad("out_dir must be set");
    if (!uses_synthetic() && (train_path.empty() || eval_path.empty())) {
      bad("set both data.train and data.eval, or data.synthetic");
    }
    if (synthetic && (synthetic->n_train < 1 || synthetic->n_eval < 1)) {
      bad("synthetic record counts must be >= 1");
    }
    if (synthetic && (synthetic->grammar_size < 1 || synthetic->grammar_size > kMaxGrammarSize)) {
      bad("synthetic grammar_size must lie in [1, " + std::to_string(kMaxGrammarSize) + "]");
    }
    meter.validate();
    if (meter.source == meter::SourceKind::kTrace && meter.trace_path.empty()) {
      bad("trace meter needs a trace path");
    }
    // Every referenced path must be distinct.
    std::vector<std::string> paths = {resolved_train_path(), resolved_eval_path(), out_dir};
    if (meter.source == meter::SourceKind::kTrace) paths.push_back(meter.trace_path);
    std::set<std::string> seen;
    for (const auto& p : paths) {
      const std::string norm = std::filesystem::path(p).lexically_normal().string();
      if (!seen.insert(norm).second) bad("path '" + p + "' is referenced twice");
    }
  }
};

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  nlohmann::json nm = nlohmann::json::array();
  for (auto [n, m] : c.nm_patterns) nm.push_back({n, m});
  j = nlohmann::json{
      {"bits_grid", c.bits_grid},
      {"epochs_grid", c.epochs_grid},
      {"w", c.w},
      {"k", c.k},
      {"prune_ratios", c.prune_ratios},
      {"nm_patterns", nm},
      {"prune_scope", prune::scope_name(c.prune_scope)},
      {"quant_granularity", c.quant_granularity == quant::Granularity::kPerRow ? "per-row" : "per-tensor"},
      {"lm", c.lm},
      {"lora", {{"rank", c.lora.rank}, {"alpha", c.lora.alpha}, {"lr", c.lora.lr},
                {"batch_size", c.lora.batch_size}}},
      {"eval", {{"max_new_tokens", c.max_new_tokens}, {"metric_threads", c.metric_threads}}},
      {"meter", c.meter},
      {"out_dir", c.out_dir},
      {"seed", c.seed}};
  nlohmann::json data{{"train", c.train_path}, {"eval", c.eval_path}};
  if (c.synthetic) {
    data["synthetic"] = {{"n_train", c.synthetic->n_train},
                         {"n_eval", c.synthetic->n_eval},
                         {"grammar_size", c.synthetic->grammar_size}};
  } else {
    data["synthetic"] = nullptr;
  }
  j["data"] = data;
}

/// Unknown keys are rejected so typos surface as config errors.
inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
  static const std::set<std::string> known = {
      "bits_grid", "epochs_grid", "w",    "k",     "prune_ratios", "nm_patterns", "prune_scope",
      "quant_granularity", "lm", "lora", "eval", "meter", "out_dir", "seed", "data"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) fail(ErrorKind::kConfig, "unknown config key '" + key + "'");
  }
  PipelineConfig d;
  c = d;
  c.bits_grid = j.value("bits_grid", d.bits_grid);
  c.epochs_grid = j.value("epochs_grid", d.epochs_grid);
  c.w = j.value("w", d.w);
  c.k = j.value("k", d.k);
  c.prune_ratios = j.value("prune_ratios", d.prune_ratios);
  if (j.contains("nm_patterns")) {
    c.nm_patterns.clear();
    for (const auto& p : j["nm_patterns"]) {
      if (!p.is_array() || p.size() != 2) fail(ErrorKind::kConfig, "nm_patterns entries are [n, m]");
      c.nm_patterns.emplace_back(p[0].get<int>(), p[1].get<int>());
    }
  }
  if (j.contains("prune_scope")) {
    const auto s = j["prune_scope"].get<std::string>();
    if (s == "per-tensor") c.prune_scope = prune::Scope::kPerTensor;
    else if (s == "global") c.prune_scope = prune::Scope::kGlobal;
    else fail(ErrorKind::kConfig, "prune_scope must be per-tensor or global");
  }
  if (j.contains("quant_granularity")) {
    const auto s = j["quant_granularity"].get<std::string>();
    if (s == "per-row") c.quant_granularity = quant::Granularity::kPerRow;
    else if (s == "per-tensor") c.quant_granularity = quant::Granularity::kPerTensor;
    else fail(ErrorKind::kConfig, "quant_granularity must be per-row or per-tensor");
  }
  if (j.contains("lm")) c.lm = j["lm"].get<LmConfig>();
  if (j.contains("lora")) {
    const auto& l = j["lora"];
    c.lora.rank = l.value("rank", d.lora.rank);
    c.lora.alpha = l.value("alpha", d.lora.alpha);
    c.lora.lr = l.value("lr", d.lora.lr);
    c.lora.batch_size = l.value("batch_size", d.lora.batch_size);
  }
  if (j.contains("eval")) {
    c.max_new_tokens = j["eval"].value("max_new_tokens", d.max_new_tokens);
    c.metric_threads = j["eval"].value("metric_threads", d.metric_threads);
  }
  if (j.contains("meter")) c.meter = j["meter"].get<meter::MeterConfig>();
  c.out_dir = j.value("out_dir", d.out_dir);
  c.seed = j.value("seed", d.seed);
  if (j.contains("data")) {
    const auto& data = j["data"];
    c.train_path = data.value("train", std::string());
    c.eval_path = data.value("eval", std::string());
    if (!c.train_path.empty() || !c.eval_path.empty()) c.synthetic.reset();
    if (data.contains("synthetic") && data["synthetic"].is_null()) c.synthetic.reset();
    if (data.contains("synthetic") && !data["synthetic"].is_null()) {
      SyntheticData s;
      s.n_train = data["synthetic"].value("n_train", s.n_train);
      s.n_eval = data["synthetic"].value("n_eval", s.n_eval);
      s.grammar_size = data["synthetic"].value("grammar_size", s.grammar_size);
      c.synthetic = s;
    }
  }
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kConfig, "cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(in).get<PipelineConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, "config '" + path + "': " + e.what());
  }
}

}  // namespace ealm::pipeline

#endif  // EALM_PIPELINE_CONFIG_HPP_
