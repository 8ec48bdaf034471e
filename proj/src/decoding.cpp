// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "scope/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace scope {

using nlohmann::json;

void DecodeConfig::validate() const {
  require(max_new_tokens >= 1, "decode config: max_new_tokens must be at least 1");
  require(temperature > 0.0, "decode config: temperature must be positive");
}

void to_json(json& j, const DecodeConfig& c) {
  j = json{{"max_new_tokens", c.max_new_tokens}, {"temperature", c.temperature},
           {"greedy", c.greedy},                 {"eos_token", c.eos_token},
           {"seed", c.seed}};
}

void from_json(const json& j, DecodeConfig& c) {
  c.max_new_tokens = j.value("max_new_tokens", c.max_new_tokens);
  c.temperature = j.value("temperature", c.temperature);
  c.greedy = j.value("greedy", c.greedy);
  c.eos_token = j.value("eos_token", c.eos_token);
  c.seed = j.value("seed", c.seed);
}

void NoiseConfig::validate() const {
  require(alpha >= 0.0 && alpha <= 1.0, "noise config: alpha must lie in [0,1]");
}

void BaselineConfig::validate() const {
  require(cad_alpha >= 0.0, "baseline config: cad_alpha must be non-negative");
  require(pmi_lambda >= 0.0, "baseline config: pmi_lambda must be non-negative");
  require(pmi_tau >= 0.0, "baseline config: pmi_tau must be non-negative");
}

void to_json(json& j, const BaselineConfig& c) {
  j = json{{"cad_alpha", c.cad_alpha}, {"pmi_lambda", c.pmi_lambda}, {"pmi_tau", c.pmi_tau}};
}

void from_json(const json& j, BaselineConfig& c) {
  c.cad_alpha = j.value("cad_alpha", c.cad_alpha);
  c.pmi_lambda = j.value("pmi_lambda", c.pmi_lambda);
  c.pmi_tau = j.value("pmi_tau", c.pmi_tau);
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kPlain: return "plain";
    case Strategy::kCad: return "cad";
    case Strategy::kPmi: return "pmi";
    case Strategy::kNoisy: return "noisy";
  }
  return "plain";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "plain") return Strategy::kPlain;
  if (name == "cad") return Strategy::kCad;
  if (name == "pmi") return Strategy::kPmi;
  if (name == "noisy") return Strategy::kNoisy;
  fail(ErrorCode::kInvalidArgument, "unknown decoding strategy '" + name + "'");
}

Rng token_stream(const DecodeConfig& config) {
  return Rng(mix_seed(mix_seed(config.seed, config.rng_stream_id), 0x746f6b656eULL));
}

Rng gate_stream(const DecodeConfig& config) {
  return Rng(mix_seed(mix_seed(config.seed, config.rng_stream_id), 0x67617465ULL));
}

std::uint64_t stream_id_for(const std::string& entity_id) { return hash_name(0, entity_id); }

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

namespace {

void check_same_vocab(const Parameters& a, const Parameters& b) {
  require(a.config().vocab_size == b.config().vocab_size,
          "vocabulary mismatch between checkpoints (" + std::to_string(a.config().vocab_size) +
              " vs " + std::to_string(b.config().vocab_size) + ")",
          ErrorCode::kConfigMismatch);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> log_of(std::span<const double> probs) {
  std::vector<double> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = std::log(probs[i]);
  return out;
}

std::vector<double> cad_scores(std::span<const double> logp_theta, std::span<const double> logp_lm,
                               double alpha) {
  std::vector<double> s(logp_theta.begin(), logp_theta.end());
  if (alpha == 0.0) return s;
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = (1.0 + alpha) * logp_theta[i] - alpha * logp_lm[i];
  return s;
}

std::vector<double> pmi_scores(std::span<const double> logp_theta, std::span<const double> logp_lm,
                               double lambda, double tau) {
  std::vector<double> s(logp_theta.begin(), logp_theta.end());
  if (lambda == 0.0) return s;
  std::vector<double> p(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) p[i] = std::exp(s[i]);
  if (entropy(p) <= tau) return s;
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = logp_theta[i] - lambda * logp_lm[i];
  return s;
}

// Chooses the next token from unnormalized log-scores.
Token choose(std::span<const double> scores, const DecodeConfig& config, Rng& rng) {
  if (config.greedy) return static_cast<Token>(argmax(scores));
  std::vector<double> scaled(scores.begin(), scores.end());
  if (config.temperature != 1.0) {
    for (auto& v : scaled) v /= config.temperature;
  }
  const auto probs = softmax(scaled);
  return static_cast<Token>(sample_index(probs, rng.uniform()));
}

std::size_t token_budget(const Parameters& params, std::size_t context_len, const DecodeConfig& config) {
  const auto max_len = static_cast<std::size_t>(params.config().max_seq_len);
  require(context_len >= 1 && context_len < max_len,
          "context of length " + std::to_string(context_len) + " does not fit max_seq_len " +
              std::to_string(max_len),
          ErrorCode::kLengthOverflow);
  return std::min(static_cast<std::size_t>(config.max_new_tokens), max_len - context_len);
}

std::span<const double> feed(DecodeState& state, std::span<const Token> tokens) {
  std::span<const double> logits;
  for (Token t : tokens) logits = state.push(t);
  return logits;
}

const TokenSeq kBos = {kContextEnd};

// Shared loop for the single-model-with-prior strategies. `combine` maps
// (log p_theta, log p_lm) to scores.
template <typename Combine>
TokenSeq guided_decode(std::span<const Token> context, const Parameters& p_theta,
                       const Parameters& p_lm, const DecodeConfig& config, Combine combine) {
  config.validate();
  check_same_vocab(p_theta, p_lm);
  const std::size_t budget =
      std::min(token_budget(p_theta, context.size(), config), token_budget(p_lm, kBos.size(), config));
  DecodeState cond(p_theta), prior(p_lm);
  auto lc = feed(cond, context);
  auto lu = feed(prior, kBos);
  Rng rng = token_stream(config);
  TokenSeq out;
  while (out.size() < budget) {
    const auto scores = combine(log_softmax(lc), log_softmax(lu));
    const Token t = choose(scores, config, rng);
    out.push_back(t);
    if (t == config.eos_token || out.size() == budget) break;
    lc = cond.push(t);
    lu = prior.push(t);
  }
  return out;
}

}  // namespace

std::vector<double> mixture_distribution(std::span<const double> p_cond,
                                         std::span<const double> p_uncond, double alpha) {
  require(p_cond.size() == p_uncond.size(), "mixture: size mismatch");
  std::vector<double> out(p_cond.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - alpha) * p_cond[i] + alpha * p_uncond[i];
  return out;
}

std::vector<double> cad_adjust(std::span<const double> p_theta, std::span<const double> p_lm,
                               double alpha) {
  require(p_theta.size() == p_lm.size(), "cad_adjust: size mismatch");
  return softmax(cad_scores(log_of(p_theta), log_of(p_lm), alpha));
}

std::vector<double> pmi_adjust(std::span<const double> p_theta, std::span<const double> p_lm,
                               double lambda, double tau) {
  require(p_theta.size() == p_lm.size(), "pmi_adjust: size mismatch");
  return softmax(pmi_scores(log_of(p_theta), log_of(p_lm), lambda, tau));
}

TokenSeq sample_sequence(const Parameters& params, std::span<const Token> context,
                         const DecodeConfig& config) {
  config.validate();
  const std::size_t budget = token_budget(params, context.size(), config);
  DecodeState state(params);
  auto logits = feed(state, context);
  Rng rng = token_stream(config);
  TokenSeq out;
  while (out.size() < budget) {
    const Token t = choose(log_softmax(logits), config, rng);
    out.push_back(t);
    if (t == config.eos_token || out.size() == budget) break;
    logits = state.push(t);
  }
  return out;
}

TokenSeq noisy_generation(std::span<const Token> context, const Parameters& p_lm,
                          const Parameters& p_theta0, const NoiseConfig& noise,
                          const DecodeConfig& config) {
  noise.validate();
  config.validate();
  check_same_vocab(p_theta0, p_lm);
  const std::size_t budget =
      std::min(token_budget(p_theta0, context.size(), config), token_budget(p_lm, kBos.size(), config));
  DecodeState cond(p_theta0), prior(p_lm);
  auto lc = feed(cond, context);
  auto lu = feed(prior, kBos);
  Rng tokens = token_stream(config);
  Rng gate = gate_stream(config);
  TokenSeq out;
  while (out.size() < budget) {
    const bool from_prior = gate.uniform() < noise.alpha;
    const Token t = choose(log_softmax(from_prior ? lu : lc), config, tokens);
    out.push_back(t);
    if (t == config.eos_token || out.size() == budget) break;
    lc = cond.push(t);
    lu = prior.push(t);
  }
  return out;
}

TokenSeq cad_decode(std::span<const Token> context, const Parameters& p_theta,
                    const Parameters& p_lm, const BaselineConfig& baseline,
                    const DecodeConfig& config) {
  baseline.validate();
  return guided_decode(context, p_theta, p_lm, config, [&](const auto& lt, const auto& ll) {
    return cad_scores(lt, ll, baseline.cad_alpha);
  });
}

TokenSeq pmi_decode(std::span<const Token> context, const Parameters& p_theta,
                    const Parameters& p_lm, const BaselineConfig& baseline,
                    const DecodeConfig& config) {
  baseline.validate();
  return guided_decode(context, p_theta, p_lm, config, [&](const auto& lt, const auto& ll) {
    return pmi_scores(lt, ll, baseline.pmi_lambda, baseline.pmi_tau);
  });
}

std::vector<PreferenceTriple> build_preference_dataset(std::span<const Example> d2,
                                                       const Parameters& p_lm,
                                                       const Parameters& p_theta0,
                                                       const NoiseConfig& noise,
                                                       const DecodeConfig& config) {
  std::vector<PreferenceTriple> out;
  out.reserve(d2.size());
  for (const auto& e : d2) {
    DecodeConfig dc = config;
    dc.rng_stream_id = stream_id_for(e.record.entity_id);
    PreferenceTriple t;
    t.context = e.context_tokens;
    t.preferred = e.target_tokens;
    t.rejected = noisy_generation(e.context_tokens, p_lm, p_theta0, noise, dc);
    t.alpha = noise.alpha;
    t.rng_stream_id = dc.rng_stream_id;
    t.entity_id = e.record.entity_id;
    out.push_back(std::move(t));
  }
  return out;
}

void write_preferences_jsonl(const std::string& path, std::span<const PreferenceTriple> triples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot open '" + path + "' for writing", ErrorCode::kIo);
  for (const auto& t : triples) {
    json line{{"context_tokens", t.context},   {"preferred_tokens", t.preferred},
              {"rejected_tokens", t.rejected}, {"alpha", t.alpha},
              {"rng_stream_id", t.rng_stream_id}, {"entity_id", t.entity_id}};
    out << line.dump() << '\n';
  }
  require(out.good(), "write to '" + path + "' failed", ErrorCode::kIo);
}

std::vector<PreferenceTriple> read_preferences_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open '" + path + "'", ErrorCode::kIo);
  std::vector<PreferenceTriple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      PreferenceTriple t;
      t.context = j.at("context_tokens").get<TokenSeq>();
      t.preferred = j.at("preferred_tokens").get<TokenSeq>();
      t.rejected = j.at("rejected_tokens").get<TokenSeq>();
      t.alpha = j.at("alpha").get<double>();
      t.rng_stream_id = j.at("rng_stream_id").get<std::uint64_t>();
      t.entity_id = j.value("entity_id", std::string());
      out.push_back(std::move(t));
    } catch (const json::exception& e) {
      fail(ErrorCode::kIo, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace scope
