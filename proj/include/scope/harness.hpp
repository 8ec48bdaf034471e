// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scope/corpus.hpp"
#include "scope/decoding.hpp"
#include "scope/metrics.hpp"
#include "scope/model.hpp"
#include "scope/training.hpp"

namespace scope {

struct PipelineConfig {
  CorpusConfig corpus = default_corpus_config();
  // vocab_size is taken from the corpus world; a nonzero value must agree.
  ModelConfig model;
  TrainConfig pretrain;
  TrainConfig sft;
  TrainConfig dpo;
  NoiseConfig noise;
  BaselineConfig baseline;
  // Decoding of negatives and of the held-out set.
  DecodeConfig negative_decode;
  DecodeConfig eval_decode;
  double split_ratio = 0.5;
  std::size_t heldout_count = 500;
  std::size_t validation_count = 100;
  std::vector<double> alpha_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> beta_grid = {0.05, 0.1, 1.0, 5.0};
  std::vector<double> split_grid = {0.25, 0.5, 0.75};
  double regime_epsilon = 0.2;
  std::string out_dir = "scope_out";
  std::uint64_t master_seed = 1;

  void validate() const;
};

PipelineConfig default_pipeline_config();
void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);
PipelineConfig load_pipeline_config(const std::string& path);

// Stage seed derived from the master seed and the stage name.
std::uint64_t stage_seed(std::uint64_t master, const std::string& stage);

enum class RegimeLabel { kDegenerate, kEffective, kTrivial };
std::string to_string(RegimeLabel r);

// Degenerate when the final logp_preferred falls more than epsilon below the
// initial one; trivial when the first logged step after training starts
// already holds more than 90% of a positive final margin; effective otherwise.
RegimeLabel classify_regime(const TrainingTrace& trace, double epsilon = 0.2);

struct JudgeCounts {
  std::size_t win = 0, tie = 0, loss = 0;
};

struct SystemReport {
  std::string name;
  double bleu = 0.0;
  double rouge_l = 0.0;
  double parent_recall = 0.0;
  double oracle_omission = 0.0;       // mean omission sub-score
  double oracle_hallucination = 0.0;  // mean hallucination sub-score
  double oracle_score = 0.0;
  double hallucination_rate = 0.0;    // fraction of outputs with any hallucination
  JudgeCounts judge;                  // against the comparison system
  std::optional<SignificanceResult> mcnemar;
  std::optional<SignificanceResult> paired_t;
  std::vector<double> per_example_score;
};

struct EvalReport {
  std::string comparison_system;
  std::size_t num_examples = 0;
  std::vector<SystemReport> systems;

  const SystemReport& system(const std::string& name) const;
};

nlohmann::json to_json(const EvalReport& report);
// Metric columns of the flat CSV, in order.
const std::vector<std::string>& report_metric_names();

struct SystemOutputs {
  std::string name;
  std::vector<TokenSeq> outputs;
};

// Scores every system on the examples and judges each against `comparison`.
EvalReport evaluate_systems(const World& world, std::span<const Example> examples,
                            std::span<const SystemOutputs> systems,
                            const std::string& comparison);

// Mean oracle score of outputs against their records.
double mean_oracle_score(const World& world, std::span<const Example> examples,
                         std::span<const TokenSeq> outputs);

struct DpoRun {
  Parameters params;
  TrainingTrace trace;
  RegimeLabel regime = RegimeLabel::kEffective;
};

// Stage runner over one output directory. Every stage persists its artifact
// with a fingerprint of the inputs that produced it, and reuses a persisted
// artifact whose fingerprint matches.
class Lab {
 public:
  explicit Lab(PipelineConfig config);

  const PipelineConfig& config() const { return config_; }
  const World& world() const { return *world_; }
  std::string path(const std::string& relative) const;

  const SplitDataset& data();
  const Parameters& pretrained();
  const Parameters& sft_d1();
  const Parameters& sft_full();
  const std::vector<PreferenceTriple>& negatives(double alpha);
  const DpoRun& dpo(double alpha, double beta);

  // Held-out decoding of a single model (plain) or with a baseline rule.
  std::vector<TokenSeq> decode_heldout(const Parameters& model, Strategy strategy,
                                       std::span<const Example> examples);

  // SFT-full, SFT-D1, SCOPE, CAD and PMI on the held-out set.
  EvalReport evaluate();

  // Shares this lab's corpus and pretrained model with labs for other ratios.
  void adopt_upstream(Lab& parent);

 private:
  std::string fingerprint(const std::string& stage) const;
  bool fresh(const std::string& artifact, const std::string& stage) const;
  void stamp(const std::string& artifact, const std::string& stage) const;
  Parameters train_sft_stage(const std::string& name, std::span<const Example> data);
  double validation_score(const Parameters& model);

  PipelineConfig config_;
  std::unique_ptr<World> world_;
  std::optional<SplitDataset> data_;
  std::optional<Parameters> pretrained_;
  std::optional<Parameters> sft_d1_;
  std::optional<Parameters> sft_full_;
  std::map<double, std::vector<PreferenceTriple>> negatives_;
  std::map<std::pair<double, double>, DpoRun> dpo_;
};

// Full pipeline; writes reports/ and returns the evaluation.
EvalReport run_scope_pipeline(const PipelineConfig& config);

// Writes reports/eval.json, reports/eval.csv and the per-stage trace CSVs.
void emit_report(const EvalReport& report, const std::string& dir);

struct SweepRow {
  nlohmann::json cell;  // verbatim cell configuration
  std::map<std::string, double> values;
  std::string regime;
  std::string error;    // empty on success
};

struct SweepReport {
  std::string param;
  std::vector<SweepRow> rows;

  nlohmann::json to_json() const;
  void write(const std::string& dir) const;  // sweep_<param>.json and .csv
};

SweepReport alpha_sweep(Lab& lab, const std::vector<double>& grid);
SweepReport beta_sweep(Lab& lab, const std::vector<double>& grid);
SweepReport split_ablation(Lab& lab, const std::vector<double>& ratios);

}  // namespace scope
