// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

// Run report (JSON, CSV, Markdown) and the stage drivers used by the CLI.

#ifndef EALM_PIPELINE_REPORT_HPP_
#define EALM_PIPELINE_REPORT_HPP_

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ealm/error.hpp"
#include "ealm/pipeline/config.hpp"
#include "ealm/pipeline/runner.hpp"
#include "ealm/rank.hpp"

namespace ealm::pipeline {

struct RunReport {
  PipelineConfig config;
  double w = 0.7;
  FinetuneResult finetune;
  std::vector<std::string> topk;
  std::vector<CandidateRun> prune;

  /// Loop-1 and loop-2 records together: ranked successes, then failures by id.
  std::vector<const CandidateRun*> ranked() const {
    std::vector<const CandidateRun*> ok, failed;
    for (const auto* runs : {&finetune.runs, &prune}) {
      for (const auto& r : *runs) (r.failed ? failed : ok).push_back(&r);
    }
    std::stable_sort(ok.begin(), ok.end(), [](const CandidateRun* a, const CandidateRun* b) {
      return rank::ranks_before(a->record, b->record);
    });
    std::stable_sort(failed.begin(), failed.end(), [](const CandidateRun* a, const CandidateRun* b) {
      return a->record.id < b->record.id;
    });
    ok.insert(ok.end(), failed.begin(), failed.end());
    return ok;
  }

  /// Energy the candidate's phi is measured against: train + eval of the
  /// baseline for loop 1, eval only for loop 2.
  double reference_energy_j(const CandidateRun& r) const {
    return r.loop == 1 ? finetune.baseline_energy_j : finetune.baseline_eval_energy_j;
  }

  double energy_saving_pct(const CandidateRun& r) const {
    return 100.0 * (1.0 - r.record.energy.total_joules / reference_energy_j(r));
  }

  std::optional<double> metric_delta_pct(const CandidateRun& r) const {
    if (finetune.baseline_rho == 0.0) return std::nullopt;
    return 100.0 * (r.record.rho - finetune.baseline_rho) / finetune.baseline_rho;
  }
};

inline nlohmann::json report_json(const RunReport& rep) {
  nlohmann::json cands = nlohmann::json::array();
  std::size_t position = 0;
  for (const CandidateRun* r : rep.ranked()) {
    nlohmann::json j = *r;
    j["rank"] = r->failed ? nlohmann::json(nullptr) : nlohmann::json(++position);
    j["reference_energy_j"] = rep.reference_energy_j(*r);
    j["energy_saving_pct"] = r->failed ? nlohmann::json(nullptr) : nlohmann::json(rep.energy_saving_pct(*r));
    const auto delta = rep.metric_delta_pct(*r);
    j["metric_delta_pct"] = r->failed || !delta ? nlohmann::json(nullptr) : nlohmann::json(*delta);
    cands.push_back(std::move(j));
  }
  return nlohmann::json{{"config", rep.config},
                        {"w", rep.w},
                        {"baseline_id", rep.finetune.baseline_id},
                        {"baseline_energy_j", rep.finetune.baseline_energy_j},
                        {"baseline_eval_energy_j", rep.finetune.baseline_eval_energy_j},
                        {"baseline_rho", rep.finetune.baseline_rho},
                        {"topk", rep.topk},
                        {"loop1_count", rep.finetune.runs.size()},
                        {"loop2_count", rep.prune.size()},
                        {"candidates", cands}};
}

namespace detail {

inline std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "rank",     "id",       "loop",     "baseline", "status",       "bits",   "epochs",
      "prune_method", "prune_ratio", "prune_n", "prune_m", "sparsity", "parent_id", "bleu",
      "rouge1_f", "rouge2_f", "rougeL_f", "meteor",   "cosine",       "tokens_per_s",
      "cpu_j",    "ram_j",    "gpu_j",    "total_j",  "kwh",          "co2e_kg", "phi",
      "rho",      "R",        "w"};
  return cols;
}

/// Doubles are printed with 17 significant digits so the CSV round-trips
/// the JSON values exactly.
inline std::string report_csv(const RunReport& rep) {
  std::ostringstream out;
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  std::size_t position = 0;
  for (const CandidateRun* r : rep.ranked()) {
    const auto& rec = r->record;
    const auto& l = rec.lineage;
    const auto& s = rec.scores;
    const auto& e = rec.energy;
    std::vector<std::string> row = {
        r->failed ? "" : std::to_string(++position),
        rec.id,
        std::to_string(r->loop),
        r->baseline ? "1" : "0",
        r->failed ? "failed" : "ok",
        std::to_string(l.precision_bits),
        std::to_string(l.epochs_trained),
        l.prune ? l.prune->method : "",
        l.prune && l.prune->ratio ? detail::num(*l.prune->ratio) : "",
        l.prune && l.prune->n ? std::to_string(*l.prune->n) : "",
        l.prune && l.prune->m ? std::to_string(*l.prune->m) : "",
        l.prune ? detail::num(l.prune->sparsity) : "0",
        l.parent_id.value_or(""),
        detail::num(s.bleu),
        detail::num(s.rouge1_f),
        detail::num(s.rouge2_f),
        detail::num(s.rougeL_f),
        detail::num(s.meteor),
        detail::num(s.cosine),
        detail::num(s.tokens_per_s),
        detail::num(e.joules[0]),
        detail::num(e.joules[1]),
        detail::num(e.joules[2]),
        detail::num(e.total_joules),
        detail::num(e.kwh),
        detail::num(e.co2e_kg),
        detail::num(rec.phi),
        detail::num(rec.rho),
        detail::num(rec.R),
        detail::num(rep.w)};
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
  return out.str();
}

inline std::string report_markdown(const RunReport& rep) {
  std::ostringstream md;
  md << "# Energy/performance report\n\n";
  md << "Ranking weight w = " << rep.w << ". Baseline: `" << rep.finetune.baseline_id << "` ("
     << detail::fixed(rep.finetune.baseline_energy_j, 3) << " J fine-tune + eval, "
     << detail::fixed(rep.finetune.baseline_eval_energy_j, 3) << " J eval).\n\n";
  md << "Loop 1 selected: ";
  for (std::size_t i = 0; i < rep.topk.size(); ++i) md << (i ? ", " : "") << "`" << rep.topk[i] << "`";
  md << "\n\n## Ranked candidates\n\n";
  md << "| # | id | loop | bits | epochs | prune | sparsity | rho | phi | R | energy J | saving % | CO2e kg |\n";
  md << "|---|----|------|------|--------|-------|----------|-----|-----|---|----------|----------|---------|\n";
  std::size_t position = 0;
  for (const CandidateRun* r : rep.ranked()) {
    const auto& rec = r->record;
    const auto& l = rec.lineage;
    std::string prune = "-";
    if (l.prune) prune = l.prune->n ? std::to_string(*l.prune->n) + ":" + std::to_string(*l.prune->m)
                                    : detail::fixed(*l.prune->ratio * 100.0, 0) + "%";
    if (r->failed) {
      md << "| - | " << rec.id << " | " << r->loop << " | " << l.precision_bits << " | "
         << l.epochs_trained << " | " << prune << " | failed: " << r->error
         << " | | | | | | |\n";
      continue;
    }
    md << "| " << ++position << " | " << rec.id << (r->baseline ? " (baseline)" : "") << " | "
       << r->loop << " | " << l.precision_bits << " | " << l.epochs_trained << " | " << prune << " | "
       << detail::fixed(l.prune ? l.prune->sparsity : 0.0, 3) << " | " << detail::fixed(rec.rho, 4)
       << " | " << detail::fixed(rec.phi, 4) << " | " << detail::fixed(rec.R, 4) << " | "
       << detail::fixed(rec.energy.total_joules, 3) << " | "
       << detail::fixed(rep.energy_saving_pct(*r), 1) << " | "
       << detail::fixed(rec.energy.co2e_kg, 9) << " |\n";
  }
  md << "\n## Energy vs. training loss per epoch\n\n";
  md << "| candidate | epoch | loss | energy J |\n|-----------|-------|------|----------|\n";
  for (const auto& r : rep.finetune.runs) {
    for (const auto& e : r.history) {
      md << "| " << r.record.id << " | " << e.epoch << " | " << detail::fixed(e.loss, 4) << " | "
         << detail::fixed(e.energy.total_joules, 3) << " |\n";
    }
  }
  return md.str();
}

inline void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) fail(ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

struct ReportPaths {
  std::filesystem::path json, csv, md;
};

inline ReportPaths emit_report(const RunReport& rep, const std::filesystem::path& dir) {
  if (rep.finetune.runs.empty()) fail(ErrorKind::kInput, "report needs at least one candidate");
  std::filesystem::create_directories(dir);
  ReportPaths p{dir / "report.json", dir / "report.csv", dir / "report.md"};
  write_json(report_json(rep), p.json);
  write_text(report_csv(rep), p.csv);
  write_text(report_markdown(rep), p.md);
  return p;
}

// ---------------------------------------------------------------------------
// Stage drivers. Each reads its inputs from and writes its outputs to the
// output directory.

inline std::filesystem::path stage_path(const PipelineConfig& cfg, std::string_view file) {
  return std::filesystem::path(cfg.out_dir) / file;
}

inline FinetuneResult stage_finetune(const PipelineConfig& cfg, meter::Meter& m, const Datasets& data) {
  FinetuneResult res = run_finetune_grid(cfg, m, data);
  in_stage("finetune", [&] { write_json(res, stage_path(cfg, "finetune.json")); });
  return res;
}

inline FinetuneResult load_finetune(const PipelineConfig& cfg) {
  return in_stage("rank", [&] { return read_json(stage_path(cfg, "finetune.json")).get<FinetuneResult>(); });
}

struct TopK {
  double w = 0.7;
  std::size_t k = 1;
  std::vector<std::string> ids;
};

inline TopK stage_rank(const PipelineConfig& cfg, FinetuneResult& res, double w, std::size_t k) {
  rescore(res, w);
  TopK t{w, k, select_top_k(res, w, k)};
  in_stage("rank", [&] {
    write_json(nlohmann::json{{"w", t.w}, {"k", t.k}, {"ids", t.ids}}, stage_path(cfg, "topk.json"));
  });
  return t;
}

inline TopK load_topk(const PipelineConfig& cfg) {
  return in_stage("prune", [&] {
    const auto j = read_json(stage_path(cfg, "topk.json"));
    return TopK{j.at("w").get<double>(), j.at("k").get<std::size_t>(),
                j.at("ids").get<std::vector<std::string>>()};
  });
}

inline std::vector<CandidateRun> stage_prune(const PipelineConfig& cfg, meter::Meter& m,
                                             const Datasets& data, const TopK& topk,
                                             double baseline_eval_j) {
  PipelineConfig c = cfg;
  c.w = topk.w;
  std::vector<CandidateRun> runs = run_prune_grid(c, m, data, topk.ids, baseline_eval_j);
  in_stage("prune", [&] { write_json(runs, stage_path(cfg, "prune.json")); });
  return runs;
}

inline std::vector<CandidateRun> load_prune(const PipelineConfig& cfg) {
  return in_stage("report", [&] {
    return read_json(stage_path(cfg, "prune.json")).get<std::vector<CandidateRun>>();
  });
}

inline ReportPaths stage_report(const RunReport& rep) {
  return in_stage("report", [&] { return emit_report(rep, rep.config.out_dir); });
}

/// Builds a report from whatever stage files exist (prune results optional).
inline RunReport assemble_report(const PipelineConfig& cfg) {
  RunReport rep;
  rep.config = cfg;
  rep.w = cfg.w;
  rep.finetune = in_stage("report", [&] {
    return read_json(stage_path(cfg, "finetune.json")).get<FinetuneResult>();
  });
  if (std::filesystem::exists(stage_path(cfg, "topk.json"))) {
    const TopK t = load_topk(cfg);
    rep.w = t.w;
    rep.topk = t.ids;
  }
  if (std::filesystem::exists(stage_path(cfg, "prune.json"))) rep.prune = load_prune(cfg);
  rescore(rep.finetune, rep.w);
  rescore(rep.prune, rep.w);
  return rep;
}

/// Both loops end to end, sharing one meter, then the report.
inline std::unique_ptr<meter::Meter> make_meter(const PipelineConfig& cfg) {
  return in_stage("meter", [&] { return std::make_unique<meter::Meter>(cfg.meter); });
}

inline RunReport run_all(const PipelineConfig& cfg) {
  cfg.validate();
  const Datasets data = prepare_data(cfg);
  auto m = make_meter(cfg);
  RunReport rep;
  rep.config = cfg;
  rep.w = cfg.w;
  rep.finetune = stage_finetune(cfg, *m, data);
  const TopK topk = stage_rank(cfg, rep.finetune, cfg.w, cfg.k);
  rep.topk = topk.ids;
  rep.prune = stage_prune(cfg, *m, data, topk, rep.finetune.baseline_eval_energy_j);
  stage_report(rep);
  return rep;
}

}  // namespace ealm::pipeline

#endif  // EALM_PIPELINE_REPORT_HPP_
