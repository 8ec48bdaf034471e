// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "scope/corpus.hpp"

namespace scope {

struct OracleVerdict {
  std::size_t entailed_facts = 0;
  std::size_t omitted_facts = 0;
  std::size_t hallucinated_values = 0;
  double omission_score = 1.0;
  double hallucination_score = 1.0;
  double score = 1.0;  // min of the two sub-scores
};

// Exact faithfulness check. A fact is entailed when its full value appears
// next to one of its attribute's clause cues; each maximal run of tokens from
// a value outside the record counts as one hallucination.
OracleVerdict fact_oracle(const World& world, std::span<const Token> candidate,
                          const Record& record);

// Mean over n = 1..max_order (orders with at least one table n-gram) of the
// fraction of value n-grams present in the candidate.
double parent_recall(std::span<const Token> candidate, std::span<const TokenSeq> table_values,
                     int max_order = 4);
double parent_recall(const World& world, std::span<const Token> candidate, const Record& record,
                     int max_order = 4);

// Corpus BLEU on a 0-100 scale. Zero unigram precision gives 0; a zero
// precision at a higher order contributes exp(-9) instead.
double bleu(std::span<const TokenSeq> candidates, std::span<const TokenSeq> references,
            int max_order = 4);

// LCS F1.
double rouge_l(std::span<const Token> candidate, std::span<const Token> reference);

enum class JudgeOutcome { kWinA, kWinB, kTie };
std::string to_string(JudgeOutcome o);

// Fewer hallucinated values wins; ties fall through to fewer omitted facts.
JudgeOutcome pairwise_judge(const World& world, const Record& record,
                            std::span<const Token> text_a, std::span<const Token> text_b);
JudgeOutcome judge_verdicts(const OracleVerdict& a, const OracleVerdict& b);

struct SignificanceResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::string test_name;
};

// Chi-square with one degree of freedom over the discordant counts.
SignificanceResult mcnemar_test(std::size_t n_ab, std::size_t n_ba);
// Two-sided paired t-test on a - b, n - 1 degrees of freedom.
SignificanceResult paired_t_test(std::span<const double> a, std::span<const double> b);
// Two-sided pooled-variance two-sample t-test, 2n - 2 degrees of freedom.
SignificanceResult independent_t_test(std::span<const double> a, std::span<const double> b);

// Two-sided tail of Student's t and upper tail of chi-square with 1 dof.
double student_t_two_sided_p(double t, double dof);
double chi_square_1_survival(double x);

// Spearman rank correlation with average ranks for ties.
double spearman_rho(std::span<const double> x, std::span<const double> y);

}  // namespace scope
