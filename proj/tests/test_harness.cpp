// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "scope/harness.hpp"
#include "test_util.hpp"

using namespace scope;
using namespace scope::testing;
namespace fs = std::filesystem;

namespace {

TrainingTrace trace_of(std::initializer_list<TraceRow> rows) {
  TrainingTrace t;
  t.rows = rows;
  return t;
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("regime classification") {
    // Margin reached at the first logged step.
    const auto trivial = trace_of({{0, 0.69, -10, -12, 0}, {10, 0.1, -9.9, -40, 3.0}, {20, 0.05, -9.9, -45, 3.2}});
    CHECK(classify_regime(trivial) == RegimeLabel::kTrivial);
    // Preferred likelihood collapses.
    const auto degenerate = trace_of({{0, 0.69, -10, -12, 0}, {10, 0.5, -11, -15, 0.5}, {20, 0.3, -12, -20, 1.0}});
    CHECK(classify_regime(degenerate) == RegimeLabel::kDegenerate);
    CHECK(classify_regime(degenerate, 5.0) != RegimeLabel::kDegenerate);
    // Gradual widening with a stable preferred likelihood.
    const auto effective = trace_of({{0, 0.69, -10, -12, 0}, {10, 0.6, -10, -12.5, 0.2}, {20, 0.4, -9.8, -13, 1.0}});
    CHECK(classify_regime(effective) == RegimeLabel::kEffective);
    CHECK(to_string(RegimeLabel::kTrivial) == "trivial");
    CHECK_THROWS_AS(classify_regime(TrainingTrace{}), Error);
  }

  TEST_CASE("stage seeds are distinct and stable") {
    CHECK(stage_seed(1, "sft") == stage_seed(1, "sft"));
    CHECK(stage_seed(1, "sft") != stage_seed(1, "dpo"));
    CHECK(stage_seed(1, "sft") != stage_seed(2, "sft"));
  }

  TEST_CASE("pipeline config round-trips through json and files") {
    PipelineConfig c = default_pipeline_config();
    c.alpha_grid = {0.2, 0.4};
    c.dpo.beta = 0.5;
    c.master_seed = 99;
    const nlohmann::json j = c;
    PipelineConfig back;
    from_json(j, back);
    CHECK(nlohmann::json(back) == j);

    const auto dir = scratch_dir("cfg");
    {
      std::ofstream out(dir + "/c.json");
      out << R"({"master_seed": 5, "dpo": {"beta": 2.0}, "split_ratio": 0.25})";
    }
    const auto loaded = load_pipeline_config(dir + "/c.json");
    CHECK(loaded.master_seed == 5);
    CHECK(loaded.dpo.beta == 2.0);
    CHECK(loaded.split_ratio == 0.25);
    // Unspecified keys keep their defaults.
    CHECK(loaded.sft.epochs == default_pipeline_config().sft.epochs);
    {
      std::ofstream out(dir + "/bad.json");
      out << "{ not json";
    }
    CHECK_THROWS_AS(load_pipeline_config(dir + "/bad.json"), Error);
    CHECK_THROWS_AS(load_pipeline_config(dir + "/missing.json"), Error);

    PipelineConfig bad = default_pipeline_config();
    bad.split_ratio = 1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
  }

  TEST_CASE("reports are complete and idempotent") {
    const auto dir = scratch_dir("report");
    const PipelineConfig c = tiny_pipeline(dir);
    Lab lab(c);
    const auto& heldout = lab.data().heldout;
    std::vector<SystemOutputs> systems;
    for (const char* name : {"sft_full", "sft_d1", "scope", "cad", "pmi"}) {
      std::vector<TokenSeq> outs;
      for (const auto& e : heldout) outs.push_back(e.target_tokens);
      systems.push_back({name, outs});
    }
    const auto report = evaluate_systems(lab.world(), heldout, systems, "sft_full");
    CHECK(report.system("scope").oracle_score == 1.0);
    CHECK(report.system("scope").hallucination_rate == 0.0);
    CHECK(report.system("scope").judge.tie == heldout.size());
    CHECK_THROWS_AS(report.system("nope"), Error);

    emit_report(report, dir + "/r");
    const auto first_json = read_file(dir + "/r/eval.json");
    const auto first_csv = read_file(dir + "/r/eval.csv");
    emit_report(report, dir + "/r");
    CHECK(read_file(dir + "/r/eval.json") == first_json);
    CHECK(read_file(dir + "/r/eval.csv") == first_csv);
    CHECK(count_lines(first_csv) == 1 + 5 * report_metric_names().size());
    const auto j = nlohmann::json::parse(first_json);
    CHECK(j.at("comparison_system") == "sft_full");
    CHECK(j.at("systems").size() == 5);
  }

  TEST_CASE("tiny pipeline: artifacts, resumability and determinism") {
    const auto dir_a = scratch_dir("pipe_a");
    const auto dir_b = scratch_dir("pipe_b");
    const auto c = tiny_pipeline(dir_a);
    const auto report = run_scope_pipeline(c);
    CHECK(report.systems.size() == 5);
    CHECK(report.num_examples == c.heldout_count);
    for (const char* f : {"datasets/corpus.jsonl", "checkpoints/p_lm.ckpt", "checkpoints/sft_d1.ckpt",
                          "checkpoints/sft_full.ckpt", "traces/pretrain.csv", "traces/sft_d1.csv",
                          "reports/eval.json", "reports/eval.csv", "reports/config.json"}) {
      CHECK_MESSAGE(fs::exists(fs::path(dir_a) / f), f);
    }
    const auto ckpt = dir_a + "/checkpoints/sft_d1.ckpt";
    CHECK(load_checkpoint(ckpt).role() == ModelRole::kSft);
    const auto eval_a = read_file(dir_a + "/reports/eval.json");

    // Re-running reuses every artifact and reproduces the report.
    const auto mtime = fs::last_write_time(ckpt);
    run_scope_pipeline(c);
    CHECK(fs::last_write_time(ckpt) == mtime);
    CHECK(read_file(dir_a + "/reports/eval.json") == eval_a);

    // A fresh directory reproduces it byte for byte.
    auto cb = c;
    cb.out_dir = dir_b;
    run_scope_pipeline(cb);
    CHECK(read_file(dir_b + "/reports/eval.json") == eval_a);
    CHECK(read_file(dir_b + "/reports/eval.csv") == read_file(dir_a + "/reports/eval.csv"));
    CHECK(read_file(dir_b + "/checkpoints/sft_full.ckpt") == read_file(dir_a + "/checkpoints/sft_full.ckpt"));

    // Changing a DPO setting retrains only downstream artifacts.
    auto cd = c;
    cd.dpo.learning_rate = 2e-4;
    Lab lab(cd);
    lab.dpo(cd.noise.alpha, cd.dpo.beta);
    CHECK(fs::last_write_time(ckpt) == mtime);

    // A tampered stamp forces a rebuild of that stage.
    {
      std::ofstream out(ckpt + ".stamp", std::ios::trunc);
      out << "stale";
    }
    Lab again(c);
    again.sft_d1();
    CHECK(read_file(ckpt + ".stamp") != "stale");
    CHECK(read_file(ckpt) == read_file(dir_b + "/checkpoints/sft_d1.ckpt"));
  }

  TEST_CASE("sweeps record one row per cell") {
    const auto dir = scratch_dir("sweep");
    auto c = tiny_pipeline(dir);
    c.dpo.epochs = 1;
    Lab lab(c);
    const auto a = alpha_sweep(lab, {0.3, 1.5});
    REQUIRE(a.rows.size() == 2);
    CHECK(a.rows[0].error.empty());
    CHECK(a.rows[0].values.count("negative_oracle_score") == 1);
    CHECK(a.rows[0].values.count("oracle_score") == 1);
    CHECK(!a.rows[0].regime.empty());
    CHECK(a.rows[0].cell.at("alpha") == 0.3);
    CHECK(!a.rows[1].error.empty());

    const auto b = beta_sweep(lab, {0.1, 1.0});
    REQUIRE(b.rows.size() == 2);
    CHECK(b.rows[1].error.empty());
    CHECK(b.rows[1].cell.at("beta") == 1.0);
    CHECK(b.rows[1].cell.at("dpo").at("beta") == 1.0);
    CHECK(b.rows[0].values.at("reference_oracle_score") == b.rows[1].values.at("reference_oracle_score"));

    b.write(dir + "/reports");
    const auto csv = read_file(dir + "/reports/sweep_beta.csv");
    CHECK(csv.starts_with("alpha,beta,split_ratio,metric,value,regime,error\n"));
    CHECK(count_lines(csv) == 1 + b.rows[0].values.size() + b.rows[1].values.size());
    const auto j = nlohmann::json::parse(read_file(dir + "/reports/sweep_beta.json"));
    CHECK(j.at("rows").size() == 2);
  }

  TEST_CASE("split ablation") {
    const auto dir = scratch_dir("split");
    Lab lab(tiny_pipeline(dir));
    const auto s = split_ablation(lab, {0.25, 0.0});
    REQUIRE(s.rows.size() == 2);
    CHECK_MESSAGE(s.rows[0].error.empty(), s.rows[0].error);
    CHECK(s.rows[0].values.count("sft_d1_oracle_score") == 1);
    CHECK(s.rows[0].values.count("scope_oracle_score") == 1);
    CHECK(!s.rows[1].error.empty());
  }
}
