// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "scope/common.hpp"

namespace scope {

// Reserved token ids. kContextEnd doubles as the begin-of-sequence token for
// the context-free model.
inline constexpr Token kPad = 0;
inline constexpr Token kEos = 1;
inline constexpr Token kAttrSep = 2;
inline constexpr Token kValSep = 3;
inline constexpr Token kContextEnd = 4;
inline constexpr Token kNumSpecials = 5;

enum class TaskFamily { kDataToText, kSummary };

std::string to_string(TaskFamily family);
TaskFamily parse_task_family(const std::string& name);

struct Fact {
  std::string attribute;
  std::string value;  // space-separated tokens, e.g. "golden curry"

  friend bool operator==(const Fact&, const Fact&) = default;
};

struct Record {
  std::string entity_id;
  std::vector<Fact> facts;

  friend bool operator==(const Record&, const Record&) = default;
};

struct Example {
  Record record;
  TokenSeq context_tokens;
  TokenSeq target_tokens;

  friend bool operator==(const Example&, const Example&) = default;
};

// (c, y, y-) after negative generation; y is the gold target.
struct PreferenceTriple {
  TokenSeq context;
  TokenSeq preferred;
  TokenSeq rejected;
  double alpha = 0.0;
  std::uint64_t rng_stream_id = 0;
  std::string entity_id;

  friend bool operator==(const PreferenceTriple&, const PreferenceTriple&) = default;
};

// One attribute of the closed world: its value inventory and the clause
// templates that verbalize it. A template holds exactly one "{}" slot.
struct AttributeSpec {
  std::string name;
  std::vector<std::string> values;
  std::vector<std::string> templates;
};

struct CorpusConfig {
  TaskFamily family = TaskFamily::kDataToText;
  int num_records = 5600;
  int min_facts = 2;
  int max_facts = 5;
  // Probability that the second attribute of a biased pair takes the value
  // preferred by the first, rather than a uniform draw.
  double distractor_rate = 0.8;
  // Unbiased value draws follow a Zipf law over each inventory's listed
  // order with this exponent; 0 draws uniformly.
  double value_zipf = 0.0;
  std::vector<std::pair<std::string, std::string>> biased_pairs;
  int max_target_len = 40;
  std::uint64_t seed = 7;
  // Attributes in canonical order. The first two are always present; the rest
  // are optional. An empty list selects the built-in restaurant world.
  std::vector<AttributeSpec> attributes;
  // Attributes verbalized by the summary family (ignored for data-to-text).
  std::vector<std::string> summary_attributes;
  // Connectives joining the optional clauses; one style per example.
  std::vector<std::string> joiners;

  void validate() const;
};

// The built-in world; a CorpusConfig with empty inventories resolves to it.
CorpusConfig default_corpus_config(TaskFamily family = TaskFamily::kDataToText);

void to_json(nlohmann::json& j, const CorpusConfig& c);
void from_json(const nlohmann::json& j, CorpusConfig& c);

class Vocabulary {
 public:
  Token add(const std::string& word);
  std::optional<Token> find(const std::string& word) const;
  Token id(const std::string& word) const;  // throws on unknown
  const std::string& word(Token t) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, Token> ids_;
};

std::vector<std::string> split_words(const std::string& text);

// Resolved closed world: vocabulary, value ownership, templates and the cue
// patterns the fact oracle uses to recognize a verbalized fact.
class World {
 public:
  explicit World(CorpusConfig config);

  const CorpusConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  TaskFamily family() const { return config_.family; }

  struct Clause {
    TokenSeq before;
    TokenSeq after;
  };
  struct ValueInfo {
    int attribute = -1;
    std::string text;
    TokenSeq tokens;
  };

  int attribute_index(const std::string& name) const;  // throws on unknown
  const AttributeSpec& attribute(int index) const;
  int num_attributes() const { return static_cast<int>(config_.attributes.size()); }
  const std::vector<Clause>& clauses(int attribute) const;

  // Value id for a value text within an attribute, throws on unknown.
  int value_index(int attribute, const std::string& value) const;
  const ValueInfo& value_info(int value_id) const { return values_[value_id]; }
  int num_values() const { return static_cast<int>(values_.size()); }
  // Value id owning the token, or -1 for non-value tokens.
  int value_of_token(Token t) const;

  bool is_attribute_token(Token t) const;

  // Preferred value of `target` given a value of `source` under the bias map.
  int preferred_value(int source_value_id, int target_attribute) const;

  TokenSeq linearize(const Record& record) const;
  Record parse_context(std::span<const Token> tokens) const;
  TokenSeq tokenize(const std::string& text) const;
  std::string detokenize(std::span<const Token> tokens) const;

  // Indices into record.facts that the task family is expected to verbalize.
  std::vector<std::size_t> expected_facts(const Record& record) const;

  void validate_record(const Record& record) const;

 private:
  CorpusConfig config_;
  Vocabulary vocab_;
  std::vector<std::vector<Clause>> clauses_;
  std::vector<ValueInfo> values_;
  std::vector<std::vector<int>> attribute_values_;
  std::vector<int> token_value_;
  std::vector<bool> attribute_token_;
  std::vector<bool> summary_attribute_;
  std::map<std::pair<int, int>, std::vector<int>> preference_;  // (src attr, dst attr) -> per src value
};

std::vector<Example> generate_corpus(const World& world);
inline std::vector<Example> generate_corpus(const CorpusConfig& config) {
  return generate_corpus(World(config));
}

// Gold verbalization of a record; `choice` selects the clause variant per
// attribute and the joiner style.
struct TemplateChoice {
  std::vector<int> clause_variant;  // per fact
  int joiner = 0;
};
TokenSeq verbalize(const World& world, const Record& record,
                   const TemplateChoice& choice);

TokenSeq linearize_record(const World& world, const Record& record);

struct SplitOptions {
  double ratio = 0.5;
  std::size_t heldout_count = 500;
  std::size_t validation_count = 0;
  std::uint64_t seed = 0;
};

struct SplitDataset {
  std::vector<Example> d1;
  std::vector<Example> d2;
  std::vector<Example> heldout;
  std::vector<Example> validation;
  double split_ratio = 0.5;

  std::vector<Example> train() const;  // d1 followed by d2
};

SplitDataset split_dataset(const std::vector<Example>& examples,
                           const SplitOptions& options);

// JSON-lines corpus file; every line carries its partition tag.
void write_corpus_jsonl(const std::string& path, const SplitDataset& split);
SplitDataset read_corpus_jsonl(const std::string& path, double split_ratio);

nlohmann::json record_to_json(const Record& r);
Record record_from_json(const nlohmann::json& j);

}  // namespace scope
