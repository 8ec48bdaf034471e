// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "scope/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace scope {

using nlohmann::json;

void TrainConfig::validate() const {
  require(learning_rate >= 0.0, "train config: learning_rate must be non-negative");
  require(batch_size > 0, "train config: batch_size must be positive");
  require(epochs >= 0, "train config: epochs must be non-negative");
  require(beta > 0.0, "train config: beta must be positive");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
          "train config: Adam betas must lie in [0,1)");
  require(adam_eps > 0.0, "train config: adam_eps must be positive");
  require(warmup_fraction >= 0.0 && warmup_fraction <= 1.0,
          "train config: warmup_fraction must lie in [0,1]");
  require(log_every > 0, "train config: log_every must be positive");
  require(probe_size > 0, "train config: probe_size must be positive");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
           {"epochs", c.epochs},               {"beta", c.beta},
           {"adam_beta1", c.adam_beta1},       {"adam_beta2", c.adam_beta2},
           {"adam_eps", c.adam_eps},           {"warmup_fraction", c.warmup_fraction},
           {"seed", c.seed},                   {"log_every", c.log_every},
           {"probe_size", c.probe_size}};
}

void from_json(const json& j, TrainConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.beta = j.value("beta", c.beta);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.seed = j.value("seed", c.seed);
  c.log_every = j.value("log_every", c.log_every);
  c.probe_size = j.value("probe_size", c.probe_size);
}

void TrainingTrace::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot open '" + path + "' for writing", ErrorCode::kIo);
  out << "step,loss,logp_preferred,logp_rejected,margin\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g,%.17g\n", r.step, r.loss,
                  r.logp_preferred, r.logp_rejected, r.margin);
    out << buf;
  }
  require(out.good(), "write to '" + path + "' failed", ErrorCode::kIo);
}

TrainingTrace TrainingTrace::read_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open '" + path + "'", ErrorCode::kIo);
  TrainingTrace t;
  std::string line;
  std::getline(in, line);
  require(line == "step,loss,logp_preferred,logp_rejected,margin",
          "'" + path + "' is not a training trace", ErrorCode::kIo);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TraceRow r;
    require(std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf", &r.step, &r.loss, &r.logp_preferred,
                        &r.logp_rejected, &r.margin) == 5,
            "malformed trace row in '" + path + "'", ErrorCode::kIo);
    t.rows.push_back(r);
  }
  return t;
}

namespace {

// Forward pass over context + target[:-1]; row c-1+j predicts target[j].
struct ScoredSequence {
  ForwardPass fp;
  std::vector<double> log_probs;
  double total = 0.0;
};

void score_sequence(const Parameters& params, std::span<const Token> context,
                    std::span<const Token> target, ScoredSequence& out) {
  require(!context.empty(), "empty context");
  require(!target.empty(), "empty target");
  require(context.size() + target.size() <= static_cast<std::size_t>(params.config().max_seq_len),
          "context plus target exceed max_seq_len " + std::to_string(params.config().max_seq_len),
          ErrorCode::kLengthOverflow);
  TokenSeq input(context.begin(), context.end());
  input.insert(input.end(), target.begin(), target.end() - 1);
  out.fp.run(params, input);
  const auto& lg = out.fp.logits();
  out.log_probs.resize(target.size());
  out.total = 0.0;
  const std::size_t c = context.size();
  for (std::size_t j = 0; j < target.size(); ++j) {
    const auto row = lg.row(static_cast<Eigen::Index>(c - 1 + j));
    require(target[j] >= 0 && target[j] < lg.cols(), "target token outside the vocabulary");
    const double lse = log_sum_exp(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    out.log_probs[j] = row(target[j]) - lse;
    out.total += out.log_probs[j];
  }
}

// Backpropagates coeff * sum_j log p(target_j) into grad.
void backprop_sequence(const Parameters& params, std::size_t context_len,
                       std::span<const Token> target, double coeff, ScoredSequence& s,
                       Matrix& dlogits, Parameters& grad) {
  const auto& lg = s.fp.logits();
  dlogits.setZero(lg.rows(), lg.cols());
  for (std::size_t j = 0; j < target.size(); ++j) {
    const auto r = static_cast<Eigen::Index>(context_len - 1 + j);
    const double lse = log_sum_exp(std::span<const double>(lg.row(r).data(), static_cast<std::size_t>(lg.cols())));
    // d log p(y_j) / d logits = onehot - softmax
    dlogits.row(r) = (lg.row(r).array() - lse).exp() * (-coeff);
    dlogits(r, target[j]) += coeff;
  }
  s.fp.backward(params, dlogits, grad);
}

}  // namespace

LossAndGrad mle_loss_and_grad(const Parameters& params, std::span<const Example> batch) {
  require(!batch.empty(), "mle_loss_and_grad: empty batch");
  std::size_t n_tokens = 0;
  for (const auto& e : batch) n_tokens += e.target_tokens.size();
  require(n_tokens > 0, "mle_loss_and_grad: batch has no target tokens");
  const double inv = 1.0 / static_cast<double>(n_tokens);

  LossAndGrad out;
  out.grad = Parameters(params.config(), params.role());
  ScoredSequence seq;
  Matrix dlogits;
  double seq_lp = 0.0;
  for (const auto& e : batch) {
    score_sequence(params, e.context_tokens, e.target_tokens, seq);
    seq_lp += seq.total;
    // loss = -inv * sum log p  =>  d loss / d log p = -inv
    backprop_sequence(params, e.context_tokens.size(), e.target_tokens, -inv, seq, dlogits, out.grad);
  }
  const double nll = -seq_lp;
  out.loss = nll * inv;
  out.mean_seq_log_prob = seq_lp / static_cast<double>(batch.size());
  return out;
}

std::vector<Example> strip_context(std::span<const Example> examples) {
  std::vector<Example> out(examples.begin(), examples.end());
  for (auto& e : out) e.context_tokens = {kContextEnd};
  return out;
}

std::vector<ReferenceScore> reference_scores(const Parameters& reference,
                                             std::span<const PreferenceTriple> triples) {
  std::vector<ReferenceScore> out;
  out.reserve(triples.size());
  for (const auto& t : triples) {
    out.push_back({sequence_log_prob(reference, t.context, t.preferred),
                   sequence_log_prob(reference, t.context, t.rejected)});
  }
  return out;
}

double dpo_loss_value(double delta_preferred, double delta_rejected, double beta) {
  return softplus(-beta * (delta_preferred - delta_rejected));
}

DpoLossAndGrad dpo_loss_and_grad(const Parameters& policy, const Parameters& reference,
                                 std::span<const PreferenceTriple> batch, double beta) {
  const auto ref = reference_scores(reference, batch);
  return dpo_loss_and_grad(policy, batch, ref, beta);
}

DpoLossAndGrad dpo_loss_and_grad(const Parameters& policy, std::span<const PreferenceTriple> batch,
                                 std::span<const ReferenceScore> reference, double beta) {
  require(!batch.empty(), "dpo_loss_and_grad: empty batch");
  require(batch.size() == reference.size(), "dpo_loss_and_grad: reference score count mismatch");
  require(beta > 0.0, "dpo_loss_and_grad: beta must be positive");
  const double inv = 1.0 / static_cast<double>(batch.size());

  DpoLossAndGrad out;
  out.policy_grad = Parameters(policy.config(), policy.role());
  out.reference_grad = Parameters(policy.config(), policy.role());
  ScoredSequence pos, neg;
  Matrix dlogits;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch[i];
    score_sequence(policy, t.context, t.preferred, pos);
    score_sequence(policy, t.context, t.rejected, neg);
    const double lp_pos = pos.total;
    const double lp_neg = neg.total;
    const double x = beta * ((lp_pos - reference[i].preferred) - (lp_neg - reference[i].rejected));
    out.loss += softplus(-x) * inv;
    out.logp_preferred += lp_pos * inv;
    out.logp_rejected += lp_neg * inv;
    out.margin += x * inv;

    // d softplus(-x) / dx = -sigmoid(-x)
    const double g = -sigmoid(-x) * beta * inv;
    if (g == 0.0) continue;
    backprop_sequence(policy, t.context.size(), t.preferred, g, pos, dlogits, out.policy_grad);
    backprop_sequence(policy, t.context.size(), t.rejected, -g, neg, dlogits, out.policy_grad);
  }
  return out;
}

void adam_update(std::span<double> params, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, long step, double lr, const AdamHyper& hyper) {
  require(params.size() == grad.size() && params.size() == m.size() && params.size() == v.size(),
          "adam_update: state shapes do not match");
  require(step >= 1, "adam_update: step is 1-based");
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * grad[i];
    v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + hyper.eps);
  }
}

void adam_step(Parameters& params, const Parameters& grad, AdamState& state,
               const TrainConfig& config, double lr) {
  require(grad.size() == params.size() && state.m.size() == params.size() &&
              state.v.size() == params.size(),
          "adam_step: state shapes do not match");
  const auto bad = grad.first_non_finite();
  require(bad.empty(), "non-finite gradient in tensor '" + bad + "'", ErrorCode::kNumeric);
  ++state.step;
  adam_update(params.values(), grad.values(), state.m.values(), state.v.values(), state.step, lr,
              {config.adam_beta1, config.adam_beta2, config.adam_eps});
}

double scheduled_lr(const TrainConfig& config, long step, long total_steps) {
  const long warmup = static_cast<long>(std::ceil(config.warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) return config.learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (total_steps <= warmup) return config.learning_rate;
  const double frac = static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
  return config.learning_rate * std::max(0.0, frac);
}

namespace {

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch_size)) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(
                                             std::min(n, i + static_cast<std::size_t>(batch_size))));
  }
  return batches;
}

long steps_per_epoch(std::size_t n, int batch_size) {
  return static_cast<long>((n + static_cast<std::size_t>(batch_size) - 1) /
                           static_cast<std::size_t>(batch_size));
}

// Tracks the best epoch checkpoint under the validator.
struct Selector {
  const Validator& validate;
  TrainResult& result;
  Parameters best;
  double best_score = -std::numeric_limits<double>::infinity();

  void end_epoch(const Parameters& p, int epoch) {
    if (!validate) return;
    const double s = validate(p);
    result.validation_scores.push_back(s);
    if (s > best_score) {
      best_score = s;
      best = p;
      result.selected_epoch = epoch;
    }
  }
  void finish(Parameters&& final_params, int epochs) {
    if (validate && !best.empty()) {
      result.params = std::move(best);
    } else {
      result.params = std::move(final_params);
      result.selected_epoch = epochs;
    }
  }
};

}  // namespace

TrainResult train_sft(const Parameters& init, std::span<const Example> data,
                      const TrainConfig& config, const Validator& validate) {
  config.validate();
  require(!data.empty(), "train_sft: empty training data");
  TrainResult result;
  if (config.epochs == 0) {
    result.params = init;
    return result;
  }
  Parameters params = init;
  params.set_role(ModelRole::kSft);
  AdamState adam(params.config());
  Rng rng(hash_name(config.seed, "sft-order"));
  const long total = steps_per_epoch(data.size(), config.batch_size) * config.epochs;
  Selector sel{validate, result, {}};

  long step = 0;
  std::vector<Example> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (const auto& idx : epoch_batches(data.size(), config.batch_size, rng)) {
      batch.clear();
      for (auto i : idx) batch.push_back(data[i]);
      auto lg = mle_loss_and_grad(params, batch);
      result.trace.rows.push_back({step, lg.loss, lg.mean_seq_log_prob, 0.0, 0.0});
      if (!std::isfinite(lg.loss)) {
        throw DivergenceError("SFT loss diverged at step " + std::to_string(step), result.trace);
      }
      try {
        adam_step(params, lg.grad, adam, config, scheduled_lr(config, step, total));
      } catch (const Error& e) {
        throw DivergenceError(e.what(), result.trace);
      }
      ++step;
    }
    sel.end_epoch(params, epoch);
  }
  sel.finish(std::move(params), config.epochs);
  return result;
}

TrainResult train_dpo(const Parameters& theta0, std::span<const PreferenceTriple> triples,
                      const TrainConfig& config, const Validator& validate) {
  config.validate();
  require(!triples.empty(), "train_dpo: empty preference dataset");
  TrainResult result;
  Parameters policy = theta0;
  policy.set_role(ModelRole::kScope);
  if (config.epochs == 0) {
    result.params = std::move(policy);
    return result;
  }

  // The reference is frozen, so its scores are computed once.
  const auto ref = reference_scores(theta0, triples);
  const std::size_t n_probe = std::min(triples.size(), static_cast<std::size_t>(config.probe_size));
  const auto probe = triples.first(n_probe);
  const auto probe_ref = std::span<const ReferenceScore>(ref).first(n_probe);

  auto log_row = [&](long step, double loss) {
    TraceRow r;
    r.step = step;
    r.loss = loss;
    const double inv = 1.0 / static_cast<double>(n_probe);
    for (std::size_t i = 0; i < n_probe; ++i) {
      const double lp_pos = sequence_log_prob(policy, probe[i].context, probe[i].preferred);
      const double lp_neg = sequence_log_prob(policy, probe[i].context, probe[i].rejected);
      r.logp_preferred += lp_pos * inv;
      r.logp_rejected += lp_neg * inv;
      r.margin += config.beta * ((lp_pos - probe_ref[i].preferred) - (lp_neg - probe_ref[i].rejected)) * inv;
    }
    result.trace.rows.push_back(r);
  };

  AdamState adam(policy.config());
  Rng rng(hash_name(config.seed, "dpo-order"));
  const long total = steps_per_epoch(triples.size(), config.batch_size) * config.epochs;
  Selector sel{validate, result, {}};

  long step = 0;
  double window_loss = 0.0;
  long window_n = 0;
  std::vector<PreferenceTriple> batch;
  std::vector<ReferenceScore> batch_ref;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (const auto& idx : epoch_batches(triples.size(), config.batch_size, rng)) {
      batch.clear();
      batch_ref.clear();
      for (auto i : idx) {
        batch.push_back(triples[i]);
        batch_ref.push_back(ref[i]);
      }
      auto lg = dpo_loss_and_grad(policy, batch, batch_ref, config.beta);
      if (!std::isfinite(lg.loss)) {
        throw DivergenceError("DPO loss diverged at step " + std::to_string(step), result.trace);
      }
      if (step == 0) log_row(0, lg.loss);
      window_loss += lg.loss;
      ++window_n;
      try {
        adam_step(policy, lg.policy_grad, adam, config, scheduled_lr(config, step, total));
      } catch (const Error& e) {
        throw DivergenceError(e.what(), result.trace);
      }
      ++step;
      if (step % config.log_every == 0 || step == total) {
        log_row(step, window_loss / static_cast<double>(window_n));
        window_loss = 0.0;
        window_n = 0;
      }
    }
    sel.end_epoch(policy, epoch);
  }
  sel.finish(std::move(policy), config.epochs);
  return result;
}

}  // namespace scope
