// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures for the unit and acceptance tests.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "scope/harness.hpp"

namespace scope::testing {

inline ModelConfig tiny_config(int vocab, int max_seq_len = 24) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 4;
  c.d_ff = 32;
  c.max_seq_len = max_seq_len;
  return c;
}

// Initialized model with every stored value perturbed by N(0, scale^2), so
// that distributions are far from uniform and gradients are well conditioned.
inline Parameters random_model(ModelConfig config, std::uint64_t seed, double scale = 0.3) {
  config.seed = seed;
  Parameters p = init_params(config);
  Rng rng(mix_seed(seed, 0x7065727475726201ULL));
  for (double& v : p.values()) v += scale * rng.normal();
  return p;
}

// Model whose next-token logits are `logits` whatever the input: the final
// layer-norm gain is zero, so the output reads only the final bias.
inline Parameters constant_model(const ModelConfig& config, const std::vector<double>& logits) {
  Parameters p(config);
  for (double& g : p.tensor_values("lnf.g")) g = -1.0;  // stored as offset from 1
  p.tensor_values("lnf.b")[0] = 1.0;
  auto w = p.tensor_values("out.w");  // [d_model, vocab]
  for (int v = 0; v < config.vocab_size; ++v) w[static_cast<std::size_t>(v)] = logits[static_cast<std::size_t>(v)];
  return p;
}

inline TokenSeq random_tokens(Rng& rng, std::size_t n, int vocab) {
  TokenSeq out(n);
  for (auto& t : out) t = kNumSpecials + static_cast<Token>(rng.below(static_cast<std::uint64_t>(vocab - kNumSpecials)));
  return out;
}

inline TokenSeq random_context(Rng& rng, std::size_t n, int vocab) {
  TokenSeq c = random_tokens(rng, n, vocab);
  c.push_back(kContextEnd);
  return c;
}

inline Example random_example(Rng& rng, int vocab, std::size_t ctx_len, std::size_t tgt_len) {
  Example e;
  e.record.entity_id = "r" + std::to_string(rng.below(1000000));
  e.context_tokens = random_context(rng, ctx_len, vocab);
  e.target_tokens = random_tokens(rng, tgt_len, vocab);
  e.target_tokens.push_back(kEos);
  return e;
}

inline PreferenceTriple random_triple(Rng& rng, int vocab) {
  PreferenceTriple t;
  t.context = random_context(rng, 3 + rng.below(4), vocab);
  t.preferred = random_tokens(rng, 2 + rng.below(5), vocab);
  t.rejected = random_tokens(rng, 2 + rng.below(5), vocab);
  return t;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Fresh scratch directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("scope_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

// Small end-to-end configuration that runs in seconds.
inline PipelineConfig tiny_pipeline(const std::string& out_dir) {
  PipelineConfig c = default_pipeline_config();
  c.out_dir = out_dir;
  c.corpus.num_records = 360;
  c.heldout_count = 40;
  c.validation_count = 20;
  c.model.d_model = 16;
  c.model.d_ff = 32;
  c.pretrain.epochs = 1;
  c.sft.epochs = 1;
  c.dpo.learning_rate = 1e-4;
  c.alpha_grid = {0.3, 0.6};
  c.beta_grid = {0.1, 1.0};
  c.split_grid = {0.25, 0.5};
  return c;
}

// |a - b| / max(|a|, |b|); zero when both are zero.
inline double relative_error(double a, double b) {
  const double den = std::max(std::abs(a), std::abs(b));
  return den == 0.0 ? 0.0 : std::abs(a - b) / den;
}

struct GradCheck {
  int coordinates = 0;
  double max_relative_error = 0.0;
};

// Central differences (step h) at `count` random coordinates whose analytic
// gradient is non-negligible; coordinates untouched by the loss carry exact
// zeros and say nothing about the backward pass.
template <typename LossFn>
GradCheck finite_difference_check(Parameters params, const Parameters& analytic, LossFn&& loss,
                                  int count, std::uint64_t seed, double h = 1e-5) {
  GradCheck out;
  Rng rng(seed);
  const auto g = analytic.values();
  for (int tries = 0; out.coordinates < count && tries < 100000; ++tries) {
    const std::size_t i = static_cast<std::size_t>(rng.below(g.size()));
    if (std::abs(g[i]) < 1e-6) continue;
    double& x = params.values()[i];
    const double saved = x;
    x = saved + h;
    const double up = loss(params);
    x = saved - h;
    const double down = loss(params);
    x = saved;
    const double numeric = (up - down) / (2.0 * h);
    out.max_relative_error = std::max(out.max_relative_error, relative_error(g[i], numeric));
    ++out.coordinates;
  }
  return out;
}

}  // namespace scope::testing
