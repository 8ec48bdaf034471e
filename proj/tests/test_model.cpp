// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "scope/model.hpp"
#include "scope/training.hpp"
#include "test_util.hpp"

using namespace scope;
using namespace scope::testing;

TEST_SUITE("model") {
  TEST_CASE("next-token distributions are normalized") {
    const auto p = random_model(tiny_config(30), 11);
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
      const auto prefix = random_tokens(rng, 1 + rng.below(20), 30);
      const auto d = next_token_distribution(p, prefix);
      REQUIRE(d.probs.size() == 30);
      double s = 0.0;
      for (double x : d.probs) {
        CHECK(x >= 0.0);
        s += x;
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }

  TEST_CASE("the forward pass is causal") {
    const auto p = random_model(tiny_config(30), 12);
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      auto tokens = random_tokens(rng, 12, 30);
      ForwardPass a, b;
      a.run(p, tokens);
      const std::size_t j = 1 + rng.below(11);
      tokens[j] = tokens[j] == 5 ? 6 : 5;
      b.run(p, tokens);
      for (std::size_t t = 0; t < j; ++t) {
        CHECK((a.logits().row(static_cast<Eigen::Index>(t)) -
               b.logits().row(static_cast<Eigen::Index>(t))).cwiseAbs().maxCoeff() == 0.0);
      }
      CHECK((a.logits().row(static_cast<Eigen::Index>(j)) -
             b.logits().row(static_cast<Eigen::Index>(j))).cwiseAbs().maxCoeff() > 0.0);
    }
  }

  TEST_CASE("incremental decoding matches the full forward pass") {
    const auto p = random_model(tiny_config(30), 13);
    Rng rng(3);
    const auto tokens = random_tokens(rng, 24, 30);
    ForwardPass full;
    full.run(p, tokens);
    DecodeState state(p);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      const auto logits = state.push(tokens[t]);
      for (int v = 0; v < 30; ++v) {
        CHECK(std::abs(logits[static_cast<std::size_t>(v)] - full.logits()(static_cast<Eigen::Index>(t), v)) < 1e-12);
      }
    }
    CHECK_THROWS_AS(state.push(5), Error);  // max_seq_len reached
  }

  TEST_CASE("sequence scores agree across entry points") {
    const auto p = random_model(tiny_config(30), 14);
    Rng rng(4);
    std::vector<Example> batch;
    double total = 0.0;
    for (int i = 0; i < 4; ++i) {
      batch.push_back(random_example(rng, 30, 5, 6));
      const auto& e = batch.back();
      const auto lps = target_log_probs(p, e.context_tokens, e.target_tokens);
      const double s = sequence_log_prob(p, e.context_tokens, e.target_tokens);
      CHECK(std::abs(std::accumulate(lps.begin(), lps.end(), 0.0) - s) < 1e-12);
      total += s;
    }
    // Batching does not change per-sequence scores.
    const auto lg = mle_loss_and_grad(p, batch);
    CHECK(std::abs(lg.mean_seq_log_prob - total / 4.0) < 1e-12);
    std::vector<Example> reversed(batch.rbegin(), batch.rend());
    CHECK(std::abs(mle_loss_and_grad(p, reversed).loss - lg.loss) < 1e-12);
  }

  TEST_CASE("length and vocabulary checks") {
    const auto p = random_model(tiny_config(30, 8), 15);
    Rng rng(5);
    try {
      next_token_distribution(p, random_tokens(rng, 9, 30));
      FAIL("no throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kLengthOverflow);
    }
    CHECK_THROWS_AS(next_token_distribution(p, TokenSeq{5, 30}), Error);
    CHECK_THROWS_AS(next_token_distribution(p, TokenSeq{-1}), Error);
  }

  TEST_CASE("parameter layout") {
    const auto c = tiny_config(30);
    const Parameters p(c);
    CHECK(p.size() == count_parameters(c));
    std::size_t covered = 0;
    for (const auto& t : p.layout().tensors) covered += t.size;
    CHECK(covered == p.size());
    ModelConfig bad = c;
    bad.n_heads = 3;  // 16 is not divisible by 3
    CHECK_THROWS_AS(bad.validate(), Error);
  }

  TEST_CASE("checkpoints round-trip bit-exactly") {
    auto p = random_model(tiny_config(30), 16);
    p.set_role(ModelRole::kSft);
    const auto path = scratch_dir("ckpt") + "/m.ckpt";
    save_checkpoint(p, path);
    const auto back = load_checkpoint(path);
    CHECK(back == p);
    CHECK(back.role() == ModelRole::kSft);
    CHECK(load_checkpoint(path, tiny_config(30)) == p);

    try {
      load_checkpoint(path, tiny_config(31));
      FAIL("no throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConfigMismatch);
    }

    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out << "not a checkpoint";
    }
    CHECK_THROWS_AS(load_checkpoint(path), Error);
    CHECK_THROWS_AS(load_checkpoint(path + ".missing"), Error);
  }

  TEST_CASE("initialization is seeded") {
    auto c = tiny_config(30);
    c.seed = 1;
    const auto a = init_params(c);
    const auto b = init_params(c);
    c.seed = 2;
    const auto d = init_params(c);
    CHECK(a == b);
    CHECK(!(a.values()[0] == d.values()[0] && a.values()[1] == d.values()[1]));
  }
}
