// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "scope/metrics.hpp"
#include "test_util.hpp"

using namespace scope;

namespace {

struct OracleFixture {
  World world{default_corpus_config()};
  Record record{"r", {{"name", "vaults"}, {"eat_type", "pub"}, {"food", "italian"}, {"area", "riverside"}}};

  TokenSeq gold() const {
    return verbalize(world, record, TemplateChoice{{0, 0, 0, 0}, 0});
  }
  // Gold with every token of `from` replaced by the tokens of `to`.
  TokenSeq replace(TokenSeq text, const std::string& from, const std::string& to) const {
    const auto f = world.tokenize(from), t = world.tokenize(to);
    auto it = std::search(text.begin(), text.end(), f.begin(), f.end());
    REQUIRE(it != text.end());
    it = text.erase(it, it + static_cast<std::ptrdiff_t>(f.size()));
    text.insert(it, t.begin(), t.end());
    return text;
  }
};

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE_FIXTURE(OracleFixture, "fact oracle: gold is perfect") {
    const auto v = fact_oracle(world, gold(), record);
    CHECK(v.entailed_facts == 4);
    CHECK(v.omitted_facts == 0);
    CHECK(v.hallucinated_values == 0);
    CHECK(v.score == 1.0);
  }

  TEST_CASE_FIXTURE(OracleFixture, "fact oracle: three facts plus one foreign value") {
    const auto v = fact_oracle(world, replace(gold(), "riverside", "harbour"), record);
    CHECK(v.entailed_facts == 3);
    CHECK(v.omitted_facts == 1);
    CHECK(v.hallucinated_values == 1);
    CHECK(std::abs(v.omission_score - 0.75) < 1e-12);
    CHECK(std::abs(v.hallucination_score - 0.5) < 1e-12);
    CHECK(std::abs(v.score - 0.5) < 1e-12);
  }

  TEST_CASE_FIXTURE(OracleFixture, "fact oracle: multi-token values and cues") {
    // A foreign multi-token value is one hallucination.
    const auto two = fact_oracle(world, replace(gold(), "riverside", "city centre"), record);
    CHECK(two.hallucinated_values == 1);
    // A record value without its clause cue is not entailed.
    TokenSeq bare = world.tokenize("vaults pub italian riverside");
    const auto v = fact_oracle(world, bare, record);
    CHECK(v.hallucinated_values == 0);
    CHECK(v.entailed_facts < 4);
    CHECK(v.score < 1.0);
    // Empty text omits everything.
    const auto empty = fact_oracle(world, TokenSeq{}, record);
    CHECK(empty.omission_score == 0.0);
    CHECK(empty.score == 0.0);
    CHECK(empty.hallucination_score == 1.0);
  }

  TEST_CASE_FIXTURE(OracleFixture, "oracle score is 1 exactly when nothing is wrong") {
    Rng rng(1);
    const auto vocab = static_cast<int>(world.vocab().size());
    for (int i = 0; i < 2000; ++i) {
      const auto text = scope::testing::random_tokens(rng, 1 + rng.below(20), vocab);
      const auto v = fact_oracle(world, text, record);
      CHECK(v.score == std::min(v.omission_score, v.hallucination_score));
      CHECK((v.score == 1.0) == (v.omitted_facts == 0 && v.hallucinated_values == 0));
      CHECK(std::abs(v.hallucination_score - 1.0 / (1.0 + static_cast<double>(v.hallucinated_values))) < 1e-15);
    }
  }

  TEST_CASE("parent recall") {
    // dark=1 blue=2 loft=3 the=4 is=5
    const std::vector<TokenSeq> table = {{1, 2}, {3}};
    CHECK(std::abs(parent_recall(TokenSeq{4, 3, 5, 1}, table) - 1.0 / 3.0) < 1e-12);
    CHECK(parent_recall(TokenSeq{1, 2, 3}, table) == 1.0);
    CHECK(parent_recall(TokenSeq{}, table) == 0.0);
    // Appending table tokens never lowers recall.
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
      TokenSeq cand;
      for (int k = 0; k < 5; ++k) cand.push_back(static_cast<Token>(1 + rng.below(6)));
      const double before = parent_recall(cand, table);
      const auto& v = table[rng.below(2)];
      cand.insert(cand.end(), v.begin(), v.end());
      CHECK(parent_recall(cand, table) >= before);
    }
  }

  TEST_CASE_FIXTURE(OracleFixture, "parent recall over a record") {
    CHECK(parent_recall(world, gold(), record) == 1.0);
    CHECK(parent_recall(world, TokenSeq{}, record) == 0.0);
  }

  TEST_CASE("bleu") {
    const std::vector<TokenSeq> cand = {{1, 2, 3, 4}}, ref = {{1, 2, 3, 5}};
    const double expected =
        100.0 * std::exp((std::log(3.0 / 4.0) + std::log(2.0 / 3.0) + std::log(0.5) - 9.0) / 4.0);
    CHECK(std::abs(bleu(cand, ref) - expected) < 1e-9);
    CHECK(std::abs(bleu(ref, ref) - 100.0) < 1e-9);
    const std::vector<TokenSeq> disjoint = {{7, 8, 9, 10}};
    CHECK(bleu(disjoint, ref) == 0.0);
    // Brevity penalty: a short exact prefix.
    const std::vector<TokenSeq> short_c = {{1, 2, 3, 5}}, long_r = {{1, 2, 3, 5, 6, 7, 8, 9}};
    const double bp = std::exp(1.0 - 8.0 / 4.0);
    CHECK(std::abs(bleu(short_c, long_r) - 100.0 * bp) < 1e-9);
    const std::vector<TokenSeq> none;
    CHECK_THROWS_AS(bleu(none, none), Error);
    CHECK_THROWS_AS(bleu(cand, std::vector<TokenSeq>{}), Error);
  }

  TEST_CASE("bleu is invariant to the pairing order") {
    Rng rng(3);
    std::vector<TokenSeq> c, r;
    for (int i = 0; i < 20; ++i) {
      c.push_back(scope::testing::random_tokens(rng, 4 + rng.below(6), 12));
      r.push_back(scope::testing::random_tokens(rng, 4 + rng.below(6), 12));
    }
    const double base = bleu(c, r);
    std::vector<std::size_t> order(c.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<TokenSeq> c2, r2;
    for (auto i : order) {
      c2.push_back(c[i]);
      r2.push_back(r[i]);
    }
    CHECK(bleu(c2, r2) == base);
    CHECK(base >= 0.0);
    CHECK(base <= 100.0);
  }

  TEST_CASE("rouge-l") {
    CHECK(std::abs(rouge_l(TokenSeq{1, 2, 3, 4}, TokenSeq{1, 3, 4}) - 6.0 / 7.0) < 1e-12);
    CHECK(rouge_l(TokenSeq{1, 2}, TokenSeq{1, 2}) == 1.0);
    CHECK(rouge_l(TokenSeq{1, 2}, TokenSeq{3, 4}) == 0.0);
    CHECK_THROWS_AS(rouge_l(TokenSeq{}, TokenSeq{1}), Error);
    CHECK_THROWS_AS(rouge_l(TokenSeq{1}, TokenSeq{}), Error);
  }

  TEST_CASE_FIXTURE(OracleFixture, "pairwise judge") {
    const auto g = gold();
    const auto bad = replace(g, "italian", "french");
    CHECK(pairwise_judge(world, record, g, bad) == JudgeOutcome::kWinA);
    CHECK(pairwise_judge(world, record, bad, g) == JudgeOutcome::kWinB);
    CHECK(pairwise_judge(world, record, g, g) == JudgeOutcome::kTie);
    OracleVerdict a, b;
    a.hallucinated_values = 1;
    a.omitted_facts = 0;
    b.hallucinated_values = 0;
    b.omitted_facts = 2;
    CHECK(judge_verdicts(a, b) == JudgeOutcome::kWinB);
    CHECK(judge_verdicts(b, a) == JudgeOutcome::kWinA);
  }

  TEST_CASE_FIXTURE(OracleFixture, "pairwise judge is antisymmetric") {
    Rng rng(4);
    const auto vocab = static_cast<int>(world.vocab().size());
    for (int i = 0; i < 500; ++i) {
      const auto a = scope::testing::random_tokens(rng, 1 + rng.below(12), vocab);
      const auto b = scope::testing::random_tokens(rng, 1 + rng.below(12), vocab);
      const auto ab = pairwise_judge(world, record, a, b);
      const auto ba = pairwise_judge(world, record, b, a);
      CHECK((ab == JudgeOutcome::kWinA) == (ba == JudgeOutcome::kWinB));
      CHECK((ab == JudgeOutcome::kTie) == (ba == JudgeOutcome::kTie));
    }
  }

  TEST_CASE("mcnemar") {
    const auto sym = mcnemar_test(5, 5);
    CHECK(sym.statistic == 0.0);
    CHECK(sym.p_value == 1.0);
    CHECK(mcnemar_test(10, 0).statistic == 10.0);
    const auto four = mcnemar_test(4, 0);
    CHECK(four.statistic == 4.0);
    // 2 (1 - Phi(2))
    CHECK(std::abs(four.p_value - 0.045500263896358417) < 1e-12);
    CHECK(four.test_name == "mcnemar");
    const auto swapped = mcnemar_test(0, 4);
    CHECK(swapped.statistic == four.statistic);
    CHECK(swapped.p_value == four.p_value);
    CHECK_THROWS_AS(mcnemar_test(0, 0), Error);
  }

  TEST_CASE("paired t-test") {
    const std::vector<double> a = {0.25, 0.5, 2.0};
    const auto same = paired_t_test(a, a);
    CHECK(same.statistic == 0.0);
    CHECK(same.p_value == 1.0);
    const std::vector<double> shifted = {1.25, 1.5, 3.0};
    CHECK_THROWS_AS(paired_t_test(shifted, a), Error);
    const std::vector<double> x = {1.0, 2.0, 3.0}, zero = {0.0, 0.0, 0.0};
    const auto t = paired_t_test(x, zero);
    CHECK(std::abs(t.statistic - 2.0 * std::sqrt(3.0)) < 1e-12);
    // Student t with 2 dof: two-sided p = 1 - t / sqrt(t^2 + 2).
    CHECK(std::abs(t.p_value - (1.0 - std::sqrt(12.0 / 14.0))) < 1e-10);
    CHECK(t.test_name == "paired_t");
    CHECK_THROWS_AS(paired_t_test(std::vector<double>{1.0}, std::vector<double>{0.0}), Error);
    CHECK_THROWS_AS(paired_t_test(x, std::vector<double>{0.0, 1.0}), Error);
  }

  TEST_CASE("distribution tails") {
    // One dof: two-sided p = 1 - (2/pi) atan|t|.
    CHECK(std::abs(student_t_two_sided_p(1.5, 1.0) - (1.0 - 2.0 / M_PI * std::atan(1.5))) < 1e-12);
    CHECK(std::abs(student_t_two_sided_p(1.96, 1e7) - std::erfc(1.96 / std::sqrt(2.0))) < 1e-6);
    CHECK(std::abs(chi_square_1_survival(3.841458820694124) - 0.05) < 1e-12);
    CHECK(student_t_two_sided_p(0.0, 5.0) == 1.0);
  }

  TEST_CASE("independent t-test") {
    const std::vector<double> a = {1.0, 2.0, 3.0}, b = {2.0, 3.0, 4.0};
    const auto r = independent_t_test(a, b);
    // pooled variance 1, se = sqrt(2/3)
    CHECK(std::abs(r.statistic + 1.0 / std::sqrt(2.0 / 3.0)) < 1e-12);
    CHECK(r.p_value > 0.0);
    CHECK(r.p_value < 1.0);
  }

  TEST_CASE("spearman with ties") {
    const std::vector<double> x = {1, 2, 3, 4, 5}, y = {5, 4, 3, 2, 1};
    CHECK(std::abs(spearman_rho(x, y) + 1.0) < 1e-12);
    CHECK(std::abs(spearman_rho(x, x) - 1.0) < 1e-12);
    const std::vector<double> t = {1, 1, 2, 3, 3};
    // Average ranks (1.5, 1.5, 3, 4.5, 4.5) against (1..5).
    CHECK(std::abs(spearman_rho(x, t) - 0.9486832980505138) < 1e-12);
  }
}
