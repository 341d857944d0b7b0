// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

// The two-loop grid: quantize + fine-tune + evaluate every (bits, epochs)
// pair, rank, then prune and re-evaluate the top k.
//
// Stages persist their results under the output directory so each can run
// on its own from the CLI:
//   finetune.json, topk.json, prune.json, candidates/<id>.base.ealm and
//   candidates/<id>.lora.ealm.

#ifndef EALM_PIPELINE_RUNNER_HPP_
#define EALM_PIPELINE_RUNNER_HPP_

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ealm/error.hpp"
#include "ealm/meter.hpp"
#include "ealm/metrics.hpp"
#include "ealm/pipeline/config.hpp"
#include "ealm/pipeline/dataset.hpp"
#include "ealm/prune.hpp"
#include "ealm/quant.hpp"
#include "ealm/rank.hpp"
#include "ealm/rng.hpp"
#include "ealm/tensors.hpp"
#include "ealm/tinylm.hpp"

namespace ealm::pipeline {

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  meter::EnergyReport energy;
};

/// A candidate's ranking record plus everything the report needs.
struct CandidateRun {
  rank::CandidateRecord record;
  int loop = 1;
  bool baseline = false;
  bool failed = false;
  std::string error;
  std::vector<EpochLog> history;
  meter::EnergyReport train_energy;
  meter::EnergyReport eval_energy;
  std::size_t tokens_generated = 0;
  std::size_t model_bytes = 0;
  double wall_seconds = 0.0;
};

inline void to_json(nlohmann::json& j, const EpochLog& e) {
  j = nlohmann::json{{"epoch", e.epoch}, {"loss", e.loss}, {"energy", e.energy}};
}
inline void from_json(const nlohmann::json& j, EpochLog& e) {
  e.epoch = j.at("epoch").get<int>();
  e.loss = j.at("loss").get<double>();
  e.energy = j.at("energy").get<meter::EnergyReport>();
}

inline void to_json(nlohmann::json& j, const CandidateRun& c) {
  j = c.record;
  j["loop"] = c.loop;
  j["baseline"] = c.baseline;
  j["status"] = c.failed ? "failed" : "ok";
  j["error"] = c.error;
  j["history"] = c.history;
  j["train_energy"] = c.train_energy;
  j["eval_energy"] = c.eval_energy;
  j["tokens_generated"] = c.tokens_generated;
  j["model_bytes"] = c.model_bytes;
  j["wall_seconds"] = c.wall_seconds;
}
inline void from_json(const nlohmann::json& j, CandidateRun& c) {
  c.record = j.get<rank::CandidateRecord>();
  c.loop = j.at("loop").get<int>();
  c.baseline = j.at("baseline").get<bool>();
  c.failed = j.at("status").get<std::string>() == "failed";
  c.error = j.value("error", std::string());
  c.history = j.at("history").get<std::vector<EpochLog>>();
  c.train_energy = j.at("train_energy").get<meter::EnergyReport>();
  c.eval_energy = j.at("eval_energy").get<meter::EnergyReport>();
  c.tokens_generated = j.at("tokens_generated").get<std::size_t>();
  c.model_bytes = j.at("model_bytes").get<std::size_t>();
  c.wall_seconds = j.value("wall_seconds", 0.0);
}

/// Loop-1 output. Baseline energies are kept so loop-2 scoring and report
/// percentages can be recomputed.
struct FinetuneResult {
  std::vector<CandidateRun> runs;
  std::string baseline_id;
  double baseline_energy_j = 0.0;       // train + eval
  double baseline_eval_energy_j = 0.0;  // eval only
  double baseline_rho = 0.0;
};

inline void to_json(nlohmann::json& j, const FinetuneResult& r) {
  j = nlohmann::json{{"runs", r.runs},
                     {"baseline_id", r.baseline_id},
                     {"baseline_energy_j", r.baseline_energy_j},
                     {"baseline_eval_energy_j", r.baseline_eval_energy_j},
                     {"baseline_rho", r.baseline_rho}};
}
inline void from_json(const nlohmann::json& j, FinetuneResult& r) {
  r.runs = j.at("runs").get<std::vector<CandidateRun>>();
  r.baseline_id = j.at("baseline_id").get<std::string>();
  r.baseline_energy_j = j.at("baseline_energy_j").get<double>();
  r.baseline_eval_energy_j = j.at("baseline_eval_energy_j").get<double>();
  r.baseline_rho = j.at("baseline_rho").get<double>();
}

/// Raised stage failures carry the stage name in the message.
[[noreturn]] inline void stage_fail(std::string_view stage, const std::string& msg) {
  fail(ErrorKind::kStage, std::string(stage) + ": " + msg);
}

template <typename Fn>
auto in_stage(std::string_view stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kStage) throw;
    stage_fail(stage, e.what());
  } catch (const std::exception& e) {
    stage_fail(stage, e.what());
  }
}

// ---------------------------------------------------------------------------
// Files

inline std::filesystem::path candidates_dir(const PipelineConfig& cfg) {
  return std::filesystem::path(cfg.out_dir) / "candidates";
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Data

struct Datasets {
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> eval;
};

/// Writes the synthetic corpus when configured, then loads both splits.
inline Datasets prepare_data(const PipelineConfig& cfg) {
  return in_stage("data", [&] {
    std::filesystem::create_directories(cfg.out_dir);
    if (cfg.uses_synthetic()) {
      const auto& s = *cfg.synthetic;
      write_jsonl(generate_synthetic_corpus(cfg.seed, s.n_train, s.grammar_size, "train"),
                  cfg.resolved_train_path());
      write_jsonl(generate_synthetic_corpus(cfg.seed, s.n_eval, s.grammar_size, "eval"),
                  cfg.resolved_eval_path());
    }
    Datasets d{load_jsonl(cfg.resolved_train_path()), load_jsonl(cfg.resolved_eval_path())};
    if (d.train.empty()) fail(ErrorKind::kInput, "training dataset is empty");
    return d;
  });
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalOutcome {
  metrics::MetricScores scores;
  meter::EnergyReport energy;
  std::size_t tokens_generated = 0;
};

/// Greedy-decodes every eval prompt inside one metered span, then scores the
/// outputs once the span is closed.
inline EvalOutcome evaluate(const PipelineConfig& cfg, meter::Meter& m, const ModelBundle& b,
                            const lm::LoraAdapters* adapters,
                            const std::vector<DatasetRecord>& eval) {
  if (eval.empty()) stage_fail("evaluation", "eval dataset is empty");
  std::vector<metrics::TextPair> pairs;
  EvalOutcome out;
  out.energy = meter::measure(m, [&](meter::Meter& mm) {
    for (const auto& r : eval) {
      std::size_t generated = 0;
      std::string text = lm::complete(b, adapters, r.prompt, cfg.max_new_tokens, &generated);
      out.tokens_generated += generated;
      mm.charge(lm::decode_workload(b, adapters, lm::prompt_tokens(r.prompt).size(), generated));
      pairs.push_back({std::move(text), r.reference});
    }
  });
  out.scores = metrics::score_outputs(
      pairs, {static_cast<double>(out.tokens_generated), out.energy.duration_s},
      metrics::TfEmbedder{}, cfg.metric_threads);
  return out;
}

// ---------------------------------------------------------------------------
// Loop 1

inline std::string finetune_id(int bits, int epochs) {
  return "q" + std::to_string(bits) + "-e" + std::to_string(epochs);
}

inline std::uint64_t adapter_seed(std::uint64_t seed) { return splitmix64(seed ^ fnv1a("adapters")); }

inline ModelBundle base_model(const PipelineConfig& cfg) {
  LmConfig lmc = cfg.lm;
  lmc.init_seed = cfg.seed;
  return lm::init_model(lmc);
}

/// Recomputes rho, phi and R for loop-1 records and flags the baseline
/// (32-bit, largest epoch count).
inline void score_finetune(FinetuneResult& res, const PipelineConfig& cfg, double w) {
  const std::string base_id = finetune_id(32, cfg.max_epochs());
  const CandidateRun* base = nullptr;
  for (auto& r : res.runs) {
    r.baseline = r.record.id == base_id;
    if (r.baseline) base = &r;
  }
  if (!base) stage_fail("finetune", "baseline candidate " + base_id + " is missing");
  if (base->failed) stage_fail("finetune", "baseline candidate " + base_id + " failed: " + base->error);
  res.baseline_id = base_id;
  res.baseline_energy_j = base->record.energy.total_joules;
  res.baseline_eval_energy_j = base->eval_energy.total_joules;
  for (auto& r : res.runs) {
    if (r.failed) continue;
    in_stage("rank", [&] { rank::score_candidate(r.record, base->record.energy, w); });
  }
  res.baseline_rho = base->record.rho;
}

inline CandidateRun run_finetune_candidate(const PipelineConfig& cfg, meter::Meter& m,
                                           const Datasets& data, const ModelBundle& base,
                                           int bits, int epochs) {
  CandidateRun run;
  run.loop = 1;
  run.record.id = finetune_id(bits, epochs);
  run.record.lineage.precision_bits = bits;
  run.record.lineage.epochs_trained = epochs;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    quant::QuantSpec qs;
    qs.bits = bits;
    qs.granularity = cfg.quant_granularity;
    ModelBundle qb = quant::quantize_bundle(base, qs);
    lm::LoraAdapters ad = lm::init_adapters(qb, {cfg.lora.rank, cfg.lora.alpha}, adapter_seed(cfg.seed));
    std::vector<lm::TrainExample> examples;
    for (const auto& r : data.train) examples.push_back(lm::make_example(r.prompt, r.reference));
    lm::TrainOptions opts;
    opts.batch_size = cfg.lora.batch_size;
    for (int e = 0; e < epochs; ++e) {
      auto [next, rec] = lm::train_epoch(qb, ad, examples, cfg.lora.lr, opts, e + 1, &m);
      ad = std::move(next);
      run.history.push_back({rec.epoch, rec.loss, rec.energy});
      run.train_energy += rec.energy;
    }
    qb.lineage.epochs_trained = epochs;
    const EvalOutcome ev = evaluate(cfg, m, qb, &ad, data.eval);
    run.record.scores = ev.scores;
    run.eval_energy = ev.energy;
    run.tokens_generated = ev.tokens_generated;
    run.record.energy = run.train_energy;
    run.record.energy += ev.energy;
    run.record.lineage = qb.lineage;
    run.model_bytes = payload_bytes(qb);
    const auto dir = candidates_dir(cfg);
    save_bundle(qb, (dir / (run.record.id + ".base.ealm")).string());
    save_bundle(lm::adapters_to_bundle(ad), (dir / (run.record.id + ".lora.ealm")).string());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kStage) throw;
    run.failed = true;
    run.error = e.what();
  } catch (const std::exception& e) {
    run.failed = true;
    run.error = e.what();
  }
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

/// Every (bits, epochs) pair, strictly one after another.
inline FinetuneResult run_finetune_grid(const PipelineConfig& cfg, meter::Meter& m, const Datasets& data) {
  if (data.eval.empty()) stage_fail("evaluation", "eval dataset is empty");
  FinetuneResult res;
  in_stage("finetune", [&] { std::filesystem::create_directories(candidates_dir(cfg)); });
  const ModelBundle base = base_model(cfg);
  for (int bits : cfg.bits_grid) {
    for (int epochs : cfg.epochs_grid) {
      res.runs.push_back(run_finetune_candidate(cfg, m, data, base, bits, epochs));
    }
  }
  const bool all_failed = std::all_of(res.runs.begin(), res.runs.end(),
                                      [](const CandidateRun& r) { return r.failed; });
  if (all_failed) stage_fail("finetune", "every candidate failed; first error: " + res.runs.front().error);
  score_finetune(res, cfg, cfg.w);
  return res;
}

// ---------------------------------------------------------------------------
// Top-k

inline std::vector<std::string> select_top_k(const FinetuneResult& res, double w, std::size_t k) {
  return in_stage("rank", [&] {
    std::vector<rank::CandidateRecord> records;
    for (const auto& r : res.runs) {
      if (!r.failed) records.push_back(r.record);
    }
    std::vector<std::string> ids;
    for (const auto& r : rank::select_top_k(records, {w, k})) ids.push_back(r.id);
    return ids;
  });
}

/// Re-scores loop-1 records at a new w.
inline void rescore(FinetuneResult& res, double w) {
  for (auto& r : res.runs) {
    if (!r.failed) r.record.R = rank::rank_score(r.record.phi, r.record.rho, w);
  }
}

// ---------------------------------------------------------------------------
// Loop 2

/// Evaluates one top-k model unpruned (spec == nullopt) or pruned. 32-bit
/// models have their adapters merged first; quantized ones keep separate
/// adapters and have their stored codes masked.
inline CandidateRun run_prune_candidate(const PipelineConfig& cfg, meter::Meter& m, const Datasets& data,
                                        const std::string& parent_id,
                                        const std::optional<prune::PruneSpec>& spec,
                                        double baseline_eval_j) {
  CandidateRun run;
  run.loop = 2;
  run.record.id = parent_id + "." + (spec ? spec->label() : std::string("dense"));
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto dir = candidates_dir(cfg);
    ModelBundle b = load_bundle((dir / (parent_id + ".base.ealm")).string());
    const lm::LoraAdapters ad =
        lm::adapters_from_bundle(load_bundle((dir / (parent_id + ".lora.ealm")).string()));
    const bool merged = b.lineage.precision_bits == 32;
    if (merged) b = lm::merge_adapters(b, ad);
    if (spec) {
      prune::PruneSpec s = *spec;
      b = prune::prune_bundle(b, s);
    }
    b.lineage.parent_id = parent_id;
    run.record.lineage = b.lineage;
    const EvalOutcome ev = evaluate(cfg, m, b, merged ? nullptr : &ad, data.eval);
    run.record.scores = ev.scores;
    run.eval_energy = ev.energy;
    run.record.energy = ev.energy;
    run.tokens_generated = ev.tokens_generated;
    run.model_bytes = payload_bytes(b);
    if (spec) save_bundle(b, (dir / (run.record.id + ".ealm")).string());
    meter::EnergyReport ref;
    ref.total_joules = baseline_eval_j;
    rank::score_candidate(run.record, ref, cfg.w);
  } catch (const Error& e) {
    run.failed = true;
    run.error = e.what();
  } catch (const std::exception& e) {
    run.failed = true;
    run.error = e.what();
  }
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

inline std::vector<prune::PruneSpec> prune_settings(const PipelineConfig& cfg) {
  std::vector<prune::PruneSpec> out;
  for (double r : cfg.prune_ratios) out.push_back(prune::PruneSpec::magnitude(r, cfg.prune_scope));
  for (auto [n, mm] : cfg.nm_patterns) out.push_back(prune::PruneSpec::n_of_m(n, mm));
  return out;
}

/// For each top-k id: the unpruned model, then every prune setting.
inline std::vector<CandidateRun> run_prune_grid(const PipelineConfig& cfg, meter::Meter& m,
                                                const Datasets& data,
                                                const std::vector<std::string>& topk,
                                                double baseline_eval_j) {
  if (topk.empty()) stage_fail("prune", "top-k list is empty");
  if (!(baseline_eval_j > 0.0)) stage_fail("prune", "baseline eval energy must be > 0");
  std::vector<CandidateRun> out;
  for (const auto& id : topk) {
    out.push_back(run_prune_candidate(cfg, m, data, id, std::nullopt, baseline_eval_j));
    for (const auto& spec : prune_settings(cfg)) {
      out.push_back(run_prune_candidate(cfg, m, data, id, spec, baseline_eval_j));
    }
  }
  if (std::all_of(out.begin(), out.end(), [](const CandidateRun& r) { return r.failed; })) {
    stage_fail("prune", "every candidate failed; first error: " + out.front().error);
  }
  return out;
}

/// Re-scores loop-2 records at a new w.
inline void rescore(std::vector<CandidateRun>& runs, double w) {
  for (auto& r : runs) {
    if (!r.failed) r.record.R = rank::rank_score(r.record.phi, r.record.rho, w);
  }
}

}  // namespace ealm::pipeline

#endif  // EALM_PIPELINE_RUNNER_HPP_
