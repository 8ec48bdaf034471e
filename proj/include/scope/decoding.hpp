// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scope/corpus.hpp"
#include "scope/model.hpp"

namespace scope {

struct DecodeConfig {
  int max_new_tokens = 48;
  double temperature = 1.0;
  bool greedy = false;
  // Generation stops after emitting this token; -1 disables the check.
  Token eos_token = kEos;
  std::uint64_t seed = 0;
  std::uint64_t rng_stream_id = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const DecodeConfig& c);
void from_json(const nlohmann::json& j, DecodeConfig& c);

struct NoiseConfig {
  double alpha = 0.5;
  void validate() const;
};

struct BaselineConfig {
  double cad_alpha = 0.5;
  double pmi_lambda = 0.07;
  double pmi_tau = 0.5;  // nats
  void validate() const;
};

void to_json(nlohmann::json& j, const BaselineConfig& c);
void from_json(const nlohmann::json& j, BaselineConfig& c);

enum class Strategy { kPlain, kCad, kPmi, kNoisy };
std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);

// Two independent streams per (seed, stream id): one for token draws and one
// for the mixture gate, so the gate never shifts the token draws.
Rng token_stream(const DecodeConfig& config);
Rng gate_stream(const DecodeConfig& config);

// Stable stream id for an example, independent of its position in a list.
std::uint64_t stream_id_for(const std::string& entity_id);

double entropy(std::span<const double> probs);

// Per-step distribution algebra. Inputs are normalized distributions.
std::vector<double> mixture_distribution(std::span<const double> p_cond,
                                         std::span<const double> p_uncond, double alpha);
std::vector<double> cad_adjust(std::span<const double> p_theta, std::span<const double> p_lm,
                               double alpha);
std::vector<double> pmi_adjust(std::span<const double> p_theta, std::span<const double> p_lm,
                               double lambda, double tau);

// Ancestral (or greedy) sampling from p(. | context).
TokenSeq sample_sequence(const Parameters& params, std::span<const Token> context,
                         const DecodeConfig& config);

// Per step: draw a Bernoulli(alpha) gate, then sample the next token from
// p_lm(. | y<t) when it fires and from p_theta0(. | y<t, c) otherwise. Both
// models see the same realized prefix; an eos from either source ends the
// sequence.
TokenSeq noisy_generation(std::span<const Token> context, const Parameters& p_lm,
                          const Parameters& p_theta0, const NoiseConfig& noise,
                          const DecodeConfig& config);

// scores = (1 + a) log p_theta(. | y<t, c) - a log p_lm(. | y<t)
TokenSeq cad_decode(std::span<const Token> context, const Parameters& p_theta,
                    const Parameters& p_lm, const BaselineConfig& baseline,
                    const DecodeConfig& config);

// When H(p_theta) > tau: scores = log p_theta - lambda log p_lm; else p_theta.
TokenSeq pmi_decode(std::span<const Token> context, const Parameters& p_theta,
                    const Parameters& p_lm, const BaselineConfig& baseline,
                    const DecodeConfig& config);

std::vector<PreferenceTriple> build_preference_dataset(std::span<const Example> d2,
                                                       const Parameters& p_lm,
                                                       const Parameters& p_theta0,
                                                       const NoiseConfig& noise,
                                                       const DecodeConfig& config);

void write_preferences_jsonl(const std::string& path, std::span<const PreferenceTriple> triples);
std::vector<PreferenceTriple> read_preferences_jsonl(const std::string& path);

}  // namespace scope
