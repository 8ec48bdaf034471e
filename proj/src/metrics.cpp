// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "scope/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>

namespace scope {

namespace {

bool matches_at(std::span<const Token> seq, std::size_t pos, std::span<const Token> pattern) {
  if (pos + pattern.size() > seq.size()) return false;
  return std::equal(pattern.begin(), pattern.end(), seq.begin() + static_cast<std::ptrdiff_t>(pos));
}

bool cue_adjacent(const World& world, int attribute, std::span<const Token> candidate,
                  std::size_t begin, std::size_t end) {
  for (const auto& clause : world.clauses(attribute)) {
    const auto nb = clause.before.size();
    if (nb > 0 && begin >= nb && matches_at(candidate, begin - nb, clause.before)) return true;
    if (!clause.after.empty() && matches_at(candidate, end, clause.after)) return true;
  }
  return false;
}

}  // namespace

OracleVerdict fact_oracle(const World& world, std::span<const Token> candidate,
                          const Record& record) {
  // Value id held by the record for each attribute, -1 when absent.
  std::vector<int> record_value(static_cast<std::size_t>(world.num_attributes()), -1);
  std::vector<int> fact_value(record.facts.size(), -1);
  for (std::size_t i = 0; i < record.facts.size(); ++i) {
    const int ai = world.attribute_index(record.facts[i].attribute);
    const int vid = world.value_index(ai, record.facts[i].value);
    record_value[static_cast<std::size_t>(ai)] = vid;
    fact_value[i] = vid;
  }

  std::vector<bool> value_entailed(static_cast<std::size_t>(world.num_values()), false);
  OracleVerdict v;
  std::size_t i = 0;
  while (i < candidate.size()) {
    const int vid = world.value_of_token(candidate[i]);
    if (vid < 0) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < candidate.size() && world.value_of_token(candidate[j]) == vid) ++j;
    const auto& info = world.value_info(vid);
    if (record_value[static_cast<std::size_t>(info.attribute)] != vid) {
      ++v.hallucinated_values;
    } else if (j - i == info.tokens.size() && matches_at(candidate, i, info.tokens) &&
               cue_adjacent(world, info.attribute, candidate, i, j)) {
      value_entailed[static_cast<std::size_t>(vid)] = true;
    }
    i = j;
  }

  const auto expected = world.expected_facts(record);
  for (std::size_t fi : expected) {
    if (value_entailed[static_cast<std::size_t>(fact_value[fi])]) ++v.entailed_facts;
  }
  v.omitted_facts = expected.size() - v.entailed_facts;
  v.omission_score =
      expected.empty() ? 1.0 : static_cast<double>(v.entailed_facts) / static_cast<double>(expected.size());
  v.hallucination_score = 1.0 / (1.0 + static_cast<double>(v.hallucinated_values));
  v.score = std::min(v.omission_score, v.hallucination_score);
  return v;
}

double parent_recall(std::span<const Token> candidate, std::span<const TokenSeq> table_values,
                     int max_order) {
  require(max_order >= 1, "parent_recall: max_order must be at least 1");
  if (candidate.empty()) return 0.0;
  double sum = 0.0;
  int defined = 0;
  for (int n = 1; n <= max_order; ++n) {
    const auto un = static_cast<std::size_t>(n);
    std::size_t total = 0, matched = 0;
    for (const auto& value : table_values) {
      if (value.size() < un) continue;
      for (std::size_t s = 0; s + un <= value.size(); ++s) {
        ++total;
        const std::span<const Token> gram(value.data() + s, un);
        for (std::size_t c = 0; c + un <= candidate.size(); ++c) {
          if (matches_at(candidate, c, gram)) {
            ++matched;
            break;
          }
        }
      }
    }
    if (total == 0) continue;
    sum += static_cast<double>(matched) / static_cast<double>(total);
    ++defined;
  }
  return defined == 0 ? 0.0 : sum / defined;
}

double parent_recall(const World& world, std::span<const Token> candidate, const Record& record,
                     int max_order) {
  std::vector<TokenSeq> values;
  for (std::size_t fi : world.expected_facts(record)) {
    const auto& f = record.facts[fi];
    values.push_back(world.value_info(world.value_index(world.attribute_index(f.attribute), f.value)).tokens);
  }
  return parent_recall(candidate, values, max_order);
}

double bleu(std::span<const TokenSeq> candidates, std::span<const TokenSeq> references,
            int max_order) {
  require(candidates.size() == references.size(), "bleu: candidate/reference count mismatch");
  require(!candidates.empty(), "bleu: empty corpus");
  require(max_order >= 1, "bleu: max_order must be at least 1");
  const auto orders = static_cast<std::size_t>(max_order);
  std::vector<std::size_t> matched(orders, 0), total(orders, 0);
  std::size_t cand_len = 0, ref_len = 0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto& c = candidates[k];
    const auto& r = references[k];
    cand_len += c.size();
    ref_len += r.size();
    for (std::size_t n = 1; n <= orders; ++n) {
      std::map<TokenSeq, std::size_t> ref_counts;
      for (std::size_t s = 0; s + n <= r.size(); ++s) ++ref_counts[TokenSeq(r.begin() + s, r.begin() + s + n)];
      std::map<TokenSeq, std::size_t> cand_counts;
      for (std::size_t s = 0; s + n <= c.size(); ++s) ++cand_counts[TokenSeq(c.begin() + s, c.begin() + s + n)];
      for (const auto& [gram, count] : cand_counts) {
        const auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matched[n - 1] += std::min(count, it->second);
        total[n - 1] += count;
      }
    }
  }
  if (matched[0] == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < orders; ++n) {
    if (matched[n] == 0) {
      log_sum += -9.0;
    } else {
      log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
    }
  }
  const double bp = cand_len < ref_len
                        ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
                        : 1.0;
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(orders));
}

double rouge_l(std::span<const Token> candidate, std::span<const Token> reference) {
  require(!candidate.empty() && !reference.empty(), "rouge_l: empty input");
  const std::size_t m = candidate.size(), n = reference.size();
  std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      cur[j] = candidate[i - 1] == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const auto lcs = static_cast<double>(prev[n]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(m);
  const double r = lcs / static_cast<double>(n);
  return 2.0 * p * r / (p + r);
}

std::string to_string(JudgeOutcome o) {
  switch (o) {
    case JudgeOutcome::kWinA: return "win_a";
    case JudgeOutcome::kWinB: return "win_b";
    case JudgeOutcome::kTie: return "tie";
  }
  return "tie";
}

JudgeOutcome judge_verdicts(const OracleVerdict& a, const OracleVerdict& b) {
  if (a.hallucinated_values != b.hallucinated_values)
    return a.hallucinated_values < b.hallucinated_values ? JudgeOutcome::kWinA : JudgeOutcome::kWinB;
  if (a.omitted_facts != b.omitted_facts)
    return a.omitted_facts < b.omitted_facts ? JudgeOutcome::kWinA : JudgeOutcome::kWinB;
  return JudgeOutcome::kTie;
}

JudgeOutcome pairwise_judge(const World& world, const Record& record,
                            std::span<const Token> text_a, std::span<const Token> text_b) {
  return judge_verdicts(fact_oracle(world, text_a, record), fact_oracle(world, text_b, record));
}

double chi_square_1_survival(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(x / 2.0));
}

double student_t_two_sided_p(double t, double dof) {
  require(dof > 0.0, "t distribution needs positive degrees of freedom");
  if (t == 0.0) return 1.0;
  const double x = dof / (dof + t * t);
  return std::clamp(boost::math::ibeta(dof / 2.0, 0.5, x), 0.0, 1.0);
}

SignificanceResult mcnemar_test(std::size_t n_ab, std::size_t n_ba) {
  require(n_ab + n_ba > 0, "mcnemar_test: both discordant counts are zero");
  const double diff = static_cast<double>(n_ab) - static_cast<double>(n_ba);
  const double stat = diff * diff / static_cast<double>(n_ab + n_ba);
  return {stat, chi_square_1_survival(stat), "mcnemar"};
}

namespace {

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sum_sq_dev(std::span<const double> x, double mean) {
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s;
}

}  // namespace

SignificanceResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "paired_t_test: length mismatch");
  require(a.size() >= 2, "paired_t_test: need at least two pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double n = static_cast<double>(d.size());
  const double mean = mean_of(d);
  const double ss = sum_sq_dev(d, mean);
  if (ss == 0.0) {
    require(mean == 0.0, "paired_t_test: differences have zero variance");
    return {0.0, 1.0, "paired_t"};
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  const double t = mean / (sd / std::sqrt(n));
  return {t, student_t_two_sided_p(t, n - 1.0), "paired_t"};
}

SignificanceResult independent_t_test(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "independent_t_test: length mismatch");
  require(a.size() >= 2, "independent_t_test: need at least two samples per group");
  const double n = static_cast<double>(a.size());
  const double ma = mean_of(a), mb = mean_of(b);
  const double pooled = (sum_sq_dev(a, ma) + sum_sq_dev(b, mb)) / (2.0 * n - 2.0);
  if (pooled == 0.0) {
    require(ma == mb, "independent_t_test: samples have zero variance");
    return {0.0, 1.0, "independent_t"};
  }
  const double t = (ma - mb) / std::sqrt(pooled * 2.0 / n);
  return {t, student_t_two_sided_p(t, 2.0 * n - 2.0), "independent_t"};
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return x[i] < x[j]; });
  std::vector<double> rank(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "spearman_rho: need two equal-length series");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) sxy += (rx[i] - mx) * (ry[i] - my);
  const double denom = std::sqrt(sum_sq_dev(rx, mx) * sum_sq_dev(ry, my));
  require(denom > 0.0, "spearman_rho: constant series");
  return sxy / denom;
}

}  // namespace scope
