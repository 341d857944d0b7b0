// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

// ealm: quantize, fine-tune, rank and prune a tiny language model while
// metering energy. Exit codes: 0 success, 2 config error, 3 stage error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ealm/ealm.hpp"

namespace {

using namespace ealm;
using namespace ealm::pipeline;

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> meter;
  std::optional<double> w;
  std::optional<std::size_t> k;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON pipeline config (defaults apply when omitted)");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "seed for data, init and adapters");
  cmd->add_option("--meter", f.meter, "powercap | constant | trace:<csv>");
  cmd->add_option("--w", f.w, "weight of energy efficiency in R, in [0, 1]");
  cmd->add_option("--k", f.k, "candidates carried into pruning");
}

PipelineConfig resolve(const CommonFlags& f) {
  PipelineConfig cfg = f.config.empty() ? PipelineConfig{} : load_config(f.config);
  if (f.out) cfg.out_dir = *f.out;
  if (f.seed) cfg.seed = *f.seed;
  if (f.meter) meter::apply_meter_flag(cfg.meter, *f.meter);
  if (f.w) cfg.w = *f.w;
  if (f.k) cfg.k = *f.k;
  cfg.validate();
  return cfg;
}

void print_summary(const RunReport& rep) {
  std::size_t i = 0;
  for (const CandidateRun* r : rep.ranked()) {
    if (r->failed) {
      std::printf("  --  %-22s failed: %s\n", r->record.id.c_str(), r->error.c_str());
      continue;
    }
    std::printf("  %2zu  %-22s R=%.4f phi=%.4f rho=%.4f E=%.3f J%s\n", ++i, r->record.id.c_str(),
                r->record.R, r->record.phi, r->record.rho, r->record.energy.total_joules,
                r->baseline ? "  (baseline)" : "");
  }
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kConfig:
    case ErrorKind::kWeight:
    case ErrorKind::kSpec:
      return kExitConfig;
    default:
      return kExitStage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-aware quantize / fine-tune / prune pipeline for a tiny language model"};
  app.require_subcommand(1);

  CommonFlags gen_flags, ft_flags, rank_flags, prune_flags, report_flags, all_flags;
  std::optional<std::size_t> gen_n, gen_grammar;
  std::vector<std::string> stats_files;

  auto* gen = app.add_subcommand("gen-data", "write the synthetic train/eval corpus");
  add_common(gen, gen_flags);
  gen->add_option("--n", gen_n, "records per split");
  gen->add_option("--grammar", gen_grammar, "number of fault families (1-8)");

  auto* stats = app.add_subcommand("stats", "token-length histogram of JSONL datasets");
  stats->add_option("--data", stats_files, "JSONL dataset")->required()->expected(1, -1);

  auto* ft = app.add_subcommand("finetune-grid", "loop 1: quantize and fine-tune every grid cell");
  add_common(ft, ft_flags);
  auto* rk = app.add_subcommand("rank", "score loop-1 candidates and select the top k");
  add_common(rk, rank_flags);
  auto* pr = app.add_subcommand("prune-grid", "loop 2: prune and re-evaluate the top k");
  add_common(pr, prune_flags);
  auto* rp = app.add_subcommand("report", "write report.json, report.csv and report.md");
  add_common(rp, report_flags);
  auto* all = app.add_subcommand("run-all", "every stage in order");
  add_common(all, all_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (gen->parsed()) {
      PipelineConfig cfg = resolve(gen_flags);
      SyntheticData s = cfg.synthetic.value_or(SyntheticData{});
      if (gen_n) s.n_train = s.n_eval = *gen_n;
      if (gen_grammar) s.grammar_size = *gen_grammar;
      cfg.train_path.clear();
      cfg.eval_path.clear();
      cfg.synthetic = s;
      cfg.validate();
      const Datasets d = prepare_data(cfg);
      std::printf("wrote %zu train and %zu eval records to %s\n", d.train.size(), d.eval.size(),
                  cfg.out_dir.c_str());
    } else if (stats->parsed()) {
      nlohmann::json out = nlohmann::json::object();
      for (const auto& f : stats_files) {
        out[f] = in_stage("stats", [&] { return nlohmann::json(dataset_stats(load_jsonl(f))); });
      }
      std::cout << out.dump(2) << '\n';
    } else if (ft->parsed()) {
      const PipelineConfig cfg = resolve(ft_flags);
      const Datasets data = prepare_data(cfg);
      auto m = make_meter(cfg);
      const FinetuneResult res = stage_finetune(cfg, *m, data);
      std::printf("loop 1: %zu candidates, baseline %s (%.3f J)\n", res.runs.size(),
                  res.baseline_id.c_str(), res.baseline_energy_j);
    } else if (rk->parsed()) {
      const PipelineConfig cfg = resolve(rank_flags);
      FinetuneResult res = load_finetune(cfg);
      const TopK t = stage_rank(cfg, res, cfg.w, cfg.k);
      std::printf("top %zu at w=%.3f:", t.k, t.w);
      for (const auto& id : t.ids) std::printf(" %s", id.c_str());
      std::printf("\n");
    } else if (pr->parsed()) {
      const PipelineConfig cfg = resolve(prune_flags);
      const Datasets data = prepare_data(cfg);
      const FinetuneResult res = load_finetune(cfg);
      const TopK t = load_topk(cfg);
      auto m = make_meter(cfg);
      const auto runs = stage_prune(cfg, *m, data, t, res.baseline_eval_energy_j);
      std::printf("loop 2: %zu candidates\n", runs.size());
    } else if (rp->parsed()) {
      const PipelineConfig cfg = resolve(report_flags);
      const RunReport rep = assemble_report(cfg);
      const ReportPaths paths = stage_report(rep);
      print_summary(rep);
      std::printf("wrote %s\n", paths.json.string().c_str());
    } else if (all->parsed()) {
      const PipelineConfig cfg = resolve(all_flags);
      const RunReport rep = run_all(cfg);
      print_summary(rep);
      std::printf("reports in %s\n", cfg.out_dir.c_str());
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "ealm: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ealm: %s\n", e.what());
    return kExitStage;
  }
  return 0;
}
