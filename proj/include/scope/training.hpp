// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scope/corpus.hpp"
#include "scope/model.hpp"

namespace scope {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 16;
  int epochs = 3;
  double beta = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double warmup_fraction = 0.1;
  std::uint64_t seed = 0;
  // Trace cadence in optimizer steps (DPO). SFT logs every step.
  int log_every = 10;
  // Triples scored at every DPO log point.
  int probe_size = 64;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TraceRow {
  long step = 0;
  double loss = 0.0;
  double logp_preferred = 0.0;
  double logp_rejected = 0.0;
  double margin = 0.0;
};

struct TrainingTrace {
  std::vector<TraceRow> rows;

  void write_csv(const std::string& path) const;
  static TrainingTrace read_csv(const std::string& path);
};

// Raised when a loss or gradient turns non-finite; carries the trace so far.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, TrainingTrace trace)
      : Error(ErrorCode::kNumeric, what), trace_(std::move(trace)) {}
  const TrainingTrace& trace() const { return trace_; }

 private:
  TrainingTrace trace_;
};

struct LossAndGrad {
  double loss = 0.0;
  Parameters grad;
  double mean_seq_log_prob = 0.0;  // mean log p(target | context) over the batch
};

// Token-averaged negative log-likelihood of the targets; context positions
// are excluded from the loss.
LossAndGrad mle_loss_and_grad(const Parameters& params, std::span<const Example> batch);

// Same examples with the context replaced by the begin-of-sequence token, so
// the model learns the context-free distribution of targets.
std::vector<Example> strip_context(std::span<const Example> examples);

struct ReferenceScore {
  double preferred = 0.0;
  double rejected = 0.0;
};

std::vector<ReferenceScore> reference_scores(const Parameters& reference,
                                             std::span<const PreferenceTriple> triples);

// softplus(-beta * (delta_preferred - delta_rejected))
double dpo_loss_value(double delta_preferred, double delta_rejected, double beta);

struct DpoLossAndGrad {
  double loss = 0.0;
  Parameters policy_grad;
  // The reference is held fixed (stop-gradient), so this is identically zero.
  Parameters reference_grad;
  double logp_preferred = 0.0;  // batch means under the policy
  double logp_rejected = 0.0;
  double margin = 0.0;  // mean beta * (delta_preferred - delta_rejected)
};

DpoLossAndGrad dpo_loss_and_grad(const Parameters& policy, const Parameters& reference,
                                 std::span<const PreferenceTriple> batch, double beta);
DpoLossAndGrad dpo_loss_and_grad(const Parameters& policy,
                                 std::span<const PreferenceTriple> batch,
                                 std::span<const ReferenceScore> reference, double beta);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of a flat buffer. `step` is the 1-based
// index of this update.
void adam_update(std::span<double> params, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, long step, double lr, const AdamHyper& hyper);

struct AdamState {
  Parameters m;
  Parameters v;
  long step = 0;

  explicit AdamState(const ModelConfig& config) : m(config), v(config) {}
};

// Fails with kNumeric, naming the tensor, if the gradient is not finite; the
// parameters are left untouched in that case.
void adam_step(Parameters& params, const Parameters& grad, AdamState& state,
               const TrainConfig& config, double lr);

// Linear warmup over warmup_fraction of the steps, then linear decay to zero.
double scheduled_lr(const TrainConfig& config, long step, long total_steps);

// Per-epoch checkpoint selection: higher is better.
using Validator = std::function<double(const Parameters&)>;

struct TrainResult {
  Parameters params;
  TrainingTrace trace;
  int selected_epoch = 0;  // 0 when no training happened
  std::vector<double> validation_scores;
};

TrainResult train_sft(const Parameters& init, std::span<const Example> data,
                      const TrainConfig& config, const Validator& validate = {});

TrainResult train_dpo(const Parameters& theta0, std::span<const PreferenceTriple> triples,
                      const TrainConfig& config, const Validator& validate = {});

}  // namespace scope
