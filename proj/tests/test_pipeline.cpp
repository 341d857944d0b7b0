// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include <gtest/gtest.h>

#include "ealm/pipeline/config.hpp"
#include "ealm/pipeline/dataset.hpp"
#include "ealm/pipeline/report.hpp"
#include "ealm/pipeline/runner.hpp"

namespace ealm::pipeline {
namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an ealm::Error";
  return ErrorKind::kInvariant;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ealm_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

PipelineConfig tiny_config(const std::filesystem::path& out) {
  PipelineConfig c;
  c.lm.d_model = 8;
  c.lm.n_heads = 2;
  c.lm.d_ff = 16;
  c.lm.max_seq = 64;
  c.bits_grid = {4, 32};
  c.epochs_grid = {1};
  c.k = 1;
  c.prune_ratios = {0.5};
  c.nm_patterns = {{2, 4}};
  c.synthetic = SyntheticData{4, 3, 4};
  c.max_new_tokens = 8;
  c.out_dir = out.string();
  return c;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

TEST(Config, JsonRoundTrip) {
  PipelineConfig c;
  c.bits_grid = {8, 32};
  c.nm_patterns = {{1, 4}};
  c.prune_scope = prune::Scope::kGlobal;
  c.seed = 77;
  c.meter.source = meter::SourceKind::kTrace;
  c.meter.trace_path = "trace.csv";
  const PipelineConfig back = nlohmann::json(c).get<PipelineConfig>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(c));
  back.validate();
}

TEST(Config, DefaultsValidate) { PipelineConfig{}.validate(); }

TEST(Config, ValidationErrors) {
  auto with = [](const std::function<void(PipelineConfig&)>& edit) {
    PipelineConfig c;
    edit(c);
    return kind_of([&] { c.validate(); });
  };
  EXPECT_EQ(with([](auto& c) { c.bits_grid = {4, 8}; }), ErrorKind::kConfig);
  EXPECT_EQ(with([](auto& c) { c.bits_grid = {5, 32}; }), ErrorKind::kConfig);
  EXPECT_EQ(with([](auto& c) { c.epochs_grid = {}; }), ErrorKind::kConfig);
  EXPECT_EQ(with([](auto& c) { c.w = 1.5; }), ErrorKind::kWeight);
  EXPECT_EQ(with([](auto& c) { c.k = 0; }), ErrorKind::kConfig);
  EXPECT_EQ(with([](auto& c) { c.prune_ratios = {1.0}; }), ErrorKind::kConfig);
  EXPECT_EQ(with([](auto& c) { c.nm_patterns = {{4, 4}}; }), ErrorKind::kConfig);
  EXPECT_EQ(with([](auto& c) { c.lm.n_heads = 3; }), ErrorKind::kConfig);
  EXPECT_EQ(with([](auto& c) {
              c.synthetic.reset();
              c.train_path = "a.jsonl";
            }),
            ErrorKind::kConfig);
  EXPECT_EQ(with([](auto& c) {
              c.train_path = "same.jsonl";
              c.eval_path = "./same.jsonl";
            }),
            ErrorKind::kConfig);
}

TEST(Config, UnknownKeyAndBadFile) {
  EXPECT_EQ(kind_of([] { nlohmann::json{{"bitz", 1}}.get<PipelineConfig>(); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { load_config("/nonexistent/config.json"); }), ErrorKind::kConfig);
  const auto dir = temp_dir("cfg");
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_EQ(kind_of([&] { load_config((dir / "bad.json").string()); }), ErrorKind::kConfig);
}

TEST(Config, DataPathsClearSynthetic) {
  const auto c = nlohmann::json{{"data", {{"train", "t.jsonl"}, {"eval", "e.jsonl"}}}}.get<PipelineConfig>();
  EXPECT_FALSE(c.uses_synthetic());
  EXPECT_EQ(c.resolved_train_path(), "t.jsonl");
}

TEST(Dataset, StatsExamples) {
  const DatasetStats one = stats_of_lengths({10});
  EXPECT_EQ(one.buckets, (std::map<std::size_t, std::size_t>{{0, 1}}));
  EXPECT_EQ(one.mean, 10.0);
  const DatasetStats two = stats_of_lengths({10, 30});
  EXPECT_EQ(two.buckets, (std::map<std::size_t, std::size_t>{{0, 1}, {16, 1}}));
  EXPECT_EQ(two.mean, 20.0);
  EXPECT_EQ(two.max, 30u);
  EXPECT_EQ(kind_of([] { stats_of_lengths({}); }), ErrorKind::kInput);
}

TEST(Dataset, RecordLengthCountsFramingTokens) {
  // bos + 3 prompt bytes + separator + 4 reference bytes + eos
  EXPECT_EQ(record_tokens({"abc", "defg"}), 10u);
  EXPECT_EQ(dataset_stats({{"abc", "defg"}}).mean, 10.0);
}

TEST(Dataset, JsonlRoundTripAndErrors) {
  const std::vector<DatasetRecord> recs = {{"E100 pump", "seal worn; replace seal"}, {"q\"x", "ü"}};
  std::istringstream in(to_jsonl(recs) + "\n");
  EXPECT_EQ(parse_jsonl(in, "mem"), recs);

  std::istringstream bad("{\"prompt\": \"a\", \"reference\": \"b\"}\n{\"prompt\": 3}\n");
  try {
    parse_jsonl(bad, "data.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
    EXPECT_NE(std::string(e.what()).find("data.jsonl:2"), std::string::npos);
  }
  std::istringstream blank("{\"prompt\": \" \", \"reference\": \"b\"}\n");
  EXPECT_EQ(kind_of([&] { parse_jsonl(blank, "x"); }), ErrorKind::kFormat);
  EXPECT_EQ(kind_of([] { load_jsonl("/nonexistent/x.jsonl"); }), ErrorKind::kIo);
}

TEST(Dataset, SyntheticCorpusIsSeeded) {
  const auto a = generate_synthetic_corpus(3, 16, 4);
  EXPECT_EQ(a.size(), 16u);
  EXPECT_EQ(a, generate_synthetic_corpus(3, 16, 4));
  EXPECT_NE(a, generate_synthetic_corpus(4, 16, 4));
  EXPECT_NE(a, generate_synthetic_corpus(3, 16, 4, "eval"));
  EXPECT_EQ(a[0].reference, "seal worn; replace seal");
  EXPECT_EQ(a[5].reference, "filter clogged; clean filter");
  EXPECT_EQ(dataset_stats(a).mean, dataset_stats(generate_synthetic_corpus(3, 16, 4)).mean);
  EXPECT_EQ(kind_of([] { generate_synthetic_corpus(1, 4, 9); }), ErrorKind::kInput);
}

TEST(Pipeline, EmptyEvalIsStageError) {
  const auto dir = temp_dir("empty_eval");
  PipelineConfig c = tiny_config(dir);
  meter::Meter m(c.meter);
  const ModelBundle b = base_model(c);
  try {
    evaluate(c, m, b, nullptr, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kStage);
    EXPECT_NE(std::string(e.what()).find("evaluation"), std::string::npos);
  }
}

TEST(Pipeline, TinyRunAllProducesEveryRecord) {
  const auto dir = temp_dir("run_all");
  const PipelineConfig c = tiny_config(dir);
  const RunReport rep = run_all(c);

  ASSERT_EQ(rep.finetune.runs.size(), 2u);
  ASSERT_EQ(rep.topk.size(), 1u);
  ASSERT_EQ(rep.prune.size(), 3u);  // dense + mag50 + nm2of4
  EXPECT_EQ(rep.finetune.baseline_id, "q32-e1");
  for (const char* f : {"report.json", "report.csv", "report.md", "finetune.json", "topk.json",
                        "prune.json", "train.jsonl", "eval.jsonl"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }

  int baselines = 0;
  for (const auto& r : rep.finetune.runs) {
    EXPECT_FALSE(r.failed) << r.error;
    if (r.baseline) {
      ++baselines;
      EXPECT_EQ(r.record.phi, 0.0);
    }
    EXPECT_EQ(r.history.size(), 1u);
    EXPECT_NEAR(r.record.energy.total_joules, r.train_energy.total_joules + r.eval_energy.total_joules,
                1e-9 * r.record.energy.total_joules);
  }
  EXPECT_EQ(baselines, 1);
  for (const auto& r : rep.prune) {
    EXPECT_FALSE(r.failed) << r.error;
    EXPECT_EQ(r.loop, 2);
    EXPECT_EQ(r.record.lineage.parent_id, rep.topk[0]);
  }

  // The CSV carries enough to recompute R.
  std::ifstream csv(dir / "report.csv");
  std::string line;
  std::getline(csv, line);
  const auto header = split_csv(line);
  EXPECT_EQ(header, csv_columns());
  const auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    const auto cells = split_csv(line);
    ASSERT_EQ(cells.size(), header.size()) << line;
    const double phi = std::stod(cells[col("phi")]), rho = std::stod(cells[col("rho")]);
    const double w = std::stod(cells[col("w")]), R = std::stod(cells[col("R")]);
    EXPECT_NEAR(R, w * phi + (1 - w) * rho, 1e-9);
    ++rows;
  }
  EXPECT_EQ(rows, 5u);

  // Stage files reassemble into the same report.
  const RunReport again = assemble_report(c);
  EXPECT_EQ(report_json(again).dump(), report_json(rep).dump());
}

TEST(Pipeline, MissingBaselineIsStageError) {
  FinetuneResult res;
  CandidateRun r;
  r.record.id = "q4-e1";
  res.runs.push_back(r);
  PipelineConfig c;
  c.epochs_grid = {1};
  EXPECT_EQ(kind_of([&] { score_finetune(res, c, 0.7); }), ErrorKind::kStage);
}

}  // namespace
}  // namespace ealm::pipeline
