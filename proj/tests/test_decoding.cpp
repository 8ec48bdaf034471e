// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "scope/decoding.hpp"
#include "test_util.hpp"

using namespace scope;
using namespace scope::testing;

namespace {

constexpr int kVocab = 16;

DecodeConfig decode(std::uint64_t seed, std::uint64_t stream, int max_new = 8) {
  DecodeConfig c;
  c.seed = seed;
  c.rng_stream_id = stream;
  c.max_new_tokens = max_new;
  return c;
}

void check_distribution(const std::vector<double>& p) {
  double s = 0.0;
  for (double x : p) {
    CHECK(x >= 0.0);
    s += x;
  }
  CHECK(std::abs(s - 1.0) < 1e-9);
}

}  // namespace

TEST_SUITE("decoding") {
  TEST_CASE("cad adjustment") {
    const std::vector<double> pt = {0.8, 0.2}, plm = {0.5, 0.5};
    const auto adj = cad_adjust(pt, plm, 0.5);
    // (1.5 log 0.8 - 0.5 log 0.5, 1.5 log 0.2 - 0.5 log 0.5) -> odds 4^1.5 = 8
    CHECK(std::abs(adj[0] - 8.0 / 9.0) < 1e-12);
    CHECK(std::abs(adj[1] - 1.0 / 9.0) < 1e-12);
    const std::vector<double> same = {0.1, 0.6, 0.3};
    const auto id = cad_adjust(same, same, 0.7);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(id[i] - same[i]) < 1e-12);
    check_distribution(adj);
  }

  TEST_CASE("pmi adjustment") {
    const std::vector<double> pt = {0.6, 0.4}, plm = {0.9, 0.1};
    CHECK(std::abs(entropy(pt) - 0.6730116670092565) < 1e-12);
    const auto adj = pmi_adjust(pt, plm, 1.0, 0.5);
    CHECK(std::abs(adj[0] - 1.0 / 7.0) < 1e-12);
    CHECK(std::abs(adj[1] - 6.0 / 7.0) < 1e-12);
    // Gate closed below the threshold.
    const auto closed = pmi_adjust(pt, plm, 1.0, 0.7);
    CHECK(closed == pt);
    const std::vector<double> onehot = {0.0, 1.0};
    CHECK(pmi_adjust(onehot, plm, 3.0, 0.01) == onehot);
  }

  TEST_CASE("mixture distribution") {
    const std::vector<double> a = {0.7, 0.3, 0.0}, b = {0.1, 0.1, 0.8};
    const auto m = mixture_distribution(a, b, 0.25);
    CHECK(std::abs(m[0] - 0.55) < 1e-15);
    CHECK(std::abs(m[2] - 0.2) < 1e-15);
    check_distribution(m);
  }

  TEST_CASE("one-hot model yields its greedy continuation whatever the seed") {
    std::vector<double> logits(kVocab, 0.0);
    logits[7] = 100.0;
    const auto p = constant_model(tiny_config(kVocab), logits);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto c = decode(seed, seed * 31, 5);
      CHECK(sample_sequence(p, TokenSeq{kContextEnd}, c) == TokenSeq(5, 7));
      c.greedy = true;
      CHECK(sample_sequence(p, TokenSeq{kContextEnd}, c) == TokenSeq(5, 7));
    }
  }

  TEST_CASE("sampling stops at eos and respects the length budget") {
    std::vector<double> logits(kVocab, 0.0);
    logits[kEos] = 100.0;
    const auto eos_model = constant_model(tiny_config(kVocab), logits);
    CHECK(sample_sequence(eos_model, TokenSeq{kContextEnd}, decode(1, 1)) == TokenSeq{kEos});
    const auto p = random_model(tiny_config(kVocab, 12), 41);
    auto c = decode(1, 2, 48);
    c.eos_token = -1;
    const TokenSeq ctx = {5, 6, 7, kContextEnd};
    CHECK(sample_sequence(p, ctx, c).size() == 8);  // 12 - |ctx|
  }

  TEST_CASE("uniform two-token model samples each token half the time") {
    std::vector<double> logits(kVocab, -60.0);
    logits[5] = logits[6] = 0.0;
    const auto p = constant_model(tiny_config(kVocab), logits);
    auto c = decode(3, 0, 1);
    c.eos_token = -1;
    const int n = 100000;
    int a = 0;
    for (int i = 0; i < n; ++i) {
      c.rng_stream_id = static_cast<std::uint64_t>(i);
      a += sample_sequence(p, TokenSeq{kContextEnd}, c).front() == 5;
    }
    CHECK(std::abs(static_cast<double>(a) / n - 0.5) < 0.01);
  }

  TEST_CASE("decoders are pure functions of seed and stream") {
    const auto lm = random_model(tiny_config(kVocab), 42);
    const auto th = random_model(tiny_config(kVocab), 43);
    const TokenSeq ctx = {5, 9, 11, kContextEnd};
    const auto c = decode(9, 4);
    CHECK(sample_sequence(th, ctx, c) == sample_sequence(th, ctx, c));
    NoiseConfig n;
    CHECK(noisy_generation(ctx, lm, th, n, c) == noisy_generation(ctx, lm, th, n, c));
    BaselineConfig b;
    CHECK(cad_decode(ctx, th, lm, b, c) == cad_decode(ctx, th, lm, b, c));
    CHECK(pmi_decode(ctx, th, lm, b, c) == pmi_decode(ctx, th, lm, b, c));
    int differs = 0;
    for (std::uint64_t s = 0; s < 10; ++s) differs += sample_sequence(th, ctx, decode(9, s)) != sample_sequence(th, ctx, c);
    CHECK(differs > 0);
  }

  TEST_CASE("equivalences with plain sampling") {
    const auto lm = random_model(tiny_config(kVocab), 44);
    const auto th = random_model(tiny_config(kVocab), 45);
    Rng rng(6);
    for (int i = 0; i < 30; ++i) {
      const auto ctx = random_context(rng, 3, kVocab);
      const auto c = decode(17, static_cast<std::uint64_t>(i));
      const auto plain = sample_sequence(th, ctx, c);
      CHECK(noisy_generation(ctx, lm, th, NoiseConfig{0.0}, c) == plain);
      CHECK(noisy_generation(ctx, lm, th, NoiseConfig{1.0}, c) == sample_sequence(lm, TokenSeq{kContextEnd}, c));
      BaselineConfig b;
      b.cad_alpha = 0.0;
      b.pmi_lambda = 0.0;
      CHECK(cad_decode(ctx, th, lm, b, c) == plain);
      CHECK(pmi_decode(ctx, th, lm, b, c) == plain);
    }
  }

  TEST_CASE("vocabulary mismatch is rejected") {
    const auto lm = random_model(tiny_config(kVocab), 46);
    const auto th = random_model(tiny_config(kVocab + 1), 47);
    const TokenSeq ctx = {5, kContextEnd};
    CHECK_THROWS_AS(noisy_generation(ctx, lm, th, NoiseConfig{}, decode(1, 1)), Error);
    CHECK_THROWS_AS(cad_decode(ctx, th, lm, BaselineConfig{}, decode(1, 1)), Error);
    CHECK_THROWS_AS(pmi_decode(ctx, th, lm, BaselineConfig{}, decode(1, 1)), Error);
  }

  TEST_CASE("invalid configs are rejected") {
    DecodeConfig c;
    c.max_new_tokens = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = DecodeConfig{};
    c.temperature = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK_THROWS_AS(NoiseConfig{1.5}.validate(), Error);
    CHECK_THROWS_AS(parse_strategy("beam"), Error);
    CHECK(parse_strategy("cad") == Strategy::kCad);
    CHECK(to_string(Strategy::kNoisy) == "noisy");
  }

  TEST_CASE("preference dataset construction and file round-trip") {
    CorpusConfig cc = default_corpus_config();
    cc.num_records = 40;
    const World world(cc);
    const auto d2 = generate_corpus(world);
    const auto mc = tiny_config(static_cast<int>(world.vocab().size()), 64);
    const auto lm = random_model(mc, 48, 0.05);
    const auto th = random_model(mc, 49, 0.05);
    auto c = decode(5, 0, 12);
    const auto triples = build_preference_dataset(d2, lm, th, NoiseConfig{0.5}, c);
    REQUIRE(triples.size() == d2.size());
    for (std::size_t i = 0; i < d2.size(); ++i) {
      CHECK(triples[i].preferred == d2[i].target_tokens);
      CHECK(triples[i].context == d2[i].context_tokens);
      CHECK(triples[i].entity_id == d2[i].record.entity_id);
      CHECK(triples[i].alpha == 0.5);
    }
    // Streams are keyed by entity, so reordering the inputs does not change
    // any example's negative.
    std::vector<Example> reversed(d2.rbegin(), d2.rend());
    const auto again = build_preference_dataset(reversed, lm, th, NoiseConfig{0.5}, c);
    for (std::size_t i = 0; i < d2.size(); ++i) CHECK(again[d2.size() - 1 - i] == triples[i]);

    const auto path = scratch_dir("prefs") + "/p.jsonl";
    write_preferences_jsonl(path, triples);
    CHECK(read_preferences_jsonl(path) == triples);
  }
}
