// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "scope/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace scope {

using nlohmann::json;

std::string to_string(TaskFamily family) {
  return family == TaskFamily::kDataToText ? "d2t" : "summ";
}

TaskFamily parse_task_family(const std::string& name) {
  if (name == "d2t") return TaskFamily::kDataToText;
  if (name == "summ") return TaskFamily::kSummary;
  fail(ErrorCode::kInvalidArgument, "unknown task family '" + name + "'");
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

CorpusConfig default_corpus_config(TaskFamily family) {
  CorpusConfig c;
  c.family = family;
  c.attributes = {
      {"name",
       {"vaults", "raja", "alimentum", "wrestlers", "cricketers", "phoenix",
        "golden curry", "eagle", "mill", "punter", "olive grove", "rice boat",
        "twenty two", "waterman", "zizzi", "strada", "loch fyne", "cotto",
        "giraffe", "clowns", "aromi", "fitzbillies", "wildwood", "blue spice",
        "plough", "dumpling tree", "travellers rest", "midsummer house",
        "green man", "bibimbap", "balti", "cambridge lodge", "anchor", "bell",
        "crown", "falcon", "fountain", "globe", "harvest", "heron", "ivy",
        "jolly", "kingfisher", "lantern", "magpie", "nutmeg", "orchard",
        "pelican", "quayside", "robin", "saffron", "thistle", "umbrella",
        "vine", "willow", "yew", "oak", "mermaid", "lion", "stag", "swan",
        "otter"},
       {"{} is", "the {} is"}},
      {"eat_type",
       {"pub", "cafe", "bistro", "diner", "brasserie", "tavern", "canteen",
        "steakhouse", "grill", "buffet"},
       {"a {}", "a popular {}"}},
      {"food",
       {"italian", "french", "chinese", "indian", "japanese", "english",
        "thai", "greek", "mexican", "spanish", "turkish", "korean",
        "vietnamese", "lebanese", "american", "german"},
       {"serving {} food", "that serves {} dishes"}},
      {"area",
       {"riverside", "city centre", "harbour", "old town", "market square",
        "university quarter", "suburbs", "docklands", "westside", "eastgate",
        "northfield", "southbank"},
       {"in the {} area", "located in {}"}},
      {"near",
       {"burger king", "adriatic", "ranch", "sunshine inn", "avalon",
        "crowne plaza", "express", "portland arms", "rainbow bridge",
        "all bar one", "yippee", "bakers", "brazil", "sorrento", "chapel",
        "marina", "castle", "library", "station", "museum", "cinema",
        "cathedral", "stadium", "gallery"},
       {"near {}", "close to {}"}},
      {"price",
       {"cheap", "moderate", "expensive", "premium", "budget"},
       {"with {} prices", "priced as {}"}},
      {"rating",
       {"poor", "average", "good", "excellent", "outstanding"},
       {"rated {}", "with a {} rating"}},
  };
  c.biased_pairs = {{"name", "eat_type"}, {"name", "food"},      {"food", "area"},
                    {"area", "near"},     {"eat_type", "price"}, {"price", "rating"}};
  c.value_zipf = 1.0;
  c.summary_attributes = {"name", "eat_type", "food", "rating"};
  c.joiners = {",", "and"};
  if (family == TaskFamily::kSummary) {
    c.min_facts = 5;
    c.max_facts = 7;
  }
  return c;
}

void CorpusConfig::validate() const {
  require(num_records > 0, "corpus config: num_records must be positive");
  require(min_facts >= 2, "corpus config: min_facts must be at least 2");
  require(max_facts >= min_facts, "corpus config: max_facts < min_facts");
  require(distractor_rate >= 0.0 && distractor_rate <= 1.0,
          "corpus config: distractor_rate must lie in [0,1]");
  require(value_zipf >= 0.0, "corpus config: value_zipf must be non-negative");
  require(max_target_len > 0, "corpus config: max_target_len must be positive");
  require(!attributes.empty(), "corpus config: empty attribute inventory");
  require(static_cast<int>(attributes.size()) >= max_facts,
          "corpus config: max_facts exceeds the attribute inventory");
  require(!joiners.empty(), "corpus config: empty joiner set");
  for (const auto& a : attributes) {
    require(!a.values.empty(), "corpus config: attribute '" + a.name + "' has no values");
    require(!a.templates.empty(),
            "corpus config: empty template set for attribute '" + a.name + "'");
  }
}

void to_json(json& j, const CorpusConfig& c) {
  json attrs = json::array();
  for (const auto& a : c.attributes) {
    attrs.push_back({{"name", a.name}, {"values", a.values}, {"templates", a.templates}});
  }
  json pairs = json::array();
  for (const auto& [a, b] : c.biased_pairs) pairs.push_back({a, b});
  j = json{{"family", to_string(c.family)},
           {"num_records", c.num_records},
           {"min_facts", c.min_facts},
           {"max_facts", c.max_facts},
           {"distractor_rate", c.distractor_rate},
           {"value_zipf", c.value_zipf},
           {"biased_pairs", pairs},
           {"max_target_len", c.max_target_len},
           {"seed", c.seed},
           {"attributes", attrs},
           {"summary_attributes", c.summary_attributes},
           {"joiners", c.joiners}};
}

void from_json(const json& j, CorpusConfig& c) {
  const TaskFamily family =
      parse_task_family(j.value("family", to_string(c.family)));
  if (family != c.family) {
    // Family switch resets family-dependent defaults before overrides apply.
    const auto seed = c.seed;
    c = default_corpus_config(family);
    c.seed = seed;
  }
  c.num_records = j.value("num_records", c.num_records);
  c.min_facts = j.value("min_facts", c.min_facts);
  c.max_facts = j.value("max_facts", c.max_facts);
  c.distractor_rate = j.value("distractor_rate", c.distractor_rate);
  c.value_zipf = j.value("value_zipf", c.value_zipf);
  c.max_target_len = j.value("max_target_len", c.max_target_len);
  c.seed = j.value("seed", c.seed);
  if (j.contains("biased_pairs")) {
    c.biased_pairs.clear();
    for (const auto& p : j.at("biased_pairs")) {
      c.biased_pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
    }
  }
  if (j.contains("attributes")) {
    c.attributes.clear();
    for (const auto& a : j.at("attributes")) {
      c.attributes.push_back({a.at("name").get<std::string>(),
                              a.at("values").get<std::vector<std::string>>(),
                              a.at("templates").get<std::vector<std::string>>()});
    }
  }
  if (j.contains("summary_attributes"))
    c.summary_attributes = j.at("summary_attributes").get<std::vector<std::string>>();
  if (j.contains("joiners")) c.joiners = j.at("joiners").get<std::vector<std::string>>();
}

Token Vocabulary::add(const std::string& word) {
  if (auto it = ids_.find(word); it != ids_.end()) return it->second;
  const auto t = static_cast<Token>(words_.size());
  words_.push_back(word);
  ids_.emplace(word, t);
  return t;
}

std::optional<Token> Vocabulary::find(const std::string& word) const {
  if (auto it = ids_.find(word); it != ids_.end()) return it->second;
  return std::nullopt;
}

Token Vocabulary::id(const std::string& word) const {
  auto t = find(word);
  require(t.has_value(), "unknown word '" + word + "'");
  return *t;
}

const std::string& Vocabulary::word(Token t) const {
  require(t >= 0 && static_cast<std::size_t>(t) < words_.size(),
          "token id " + std::to_string(t) + " out of vocabulary");
  return words_[static_cast<std::size_t>(t)];
}

World::World(CorpusConfig config) : config_(std::move(config)) {
  if (config_.attributes.empty()) {
    auto defaults = default_corpus_config(config_.family);
    config_.attributes = defaults.attributes;
    if (config_.summary_attributes.empty())
      config_.summary_attributes = defaults.summary_attributes;
    if (config_.joiners.empty()) config_.joiners = defaults.joiners;
    if (config_.biased_pairs.empty()) config_.biased_pairs = defaults.biased_pairs;
  }
  config_.validate();

  for (const char* s : {"<pad>", "<eos>", "<attr>", "<val>", "<ctx_end>"}) vocab_.add(s);

  std::set<std::string> attr_names;
  for (const auto& a : config_.attributes) {
    require(attr_names.insert(a.name).second, "duplicate attribute '" + a.name + "'");
    vocab_.add(a.name);
  }

  // Value tokens belong to exactly one value so mentions are unambiguous.
  std::unordered_map<std::string, int> token_owner;
  attribute_values_.resize(config_.attributes.size());
  for (int ai = 0; ai < num_attributes(); ++ai) {
    for (const auto& v : config_.attributes[ai].values) {
      ValueInfo info;
      info.attribute = ai;
      info.text = v;
      const auto words = split_words(v);
      require(!words.empty(), "empty value in attribute '" + config_.attributes[ai].name + "'");
      const int vid = static_cast<int>(values_.size());
      for (const auto& w : words) {
        require(!attr_names.contains(w),
                "value token '" + w + "' collides with an attribute name");
        auto [it, fresh] = token_owner.emplace(w, vid);
        require(fresh, "value token '" + w + "' is shared by two values");
        info.tokens.push_back(vocab_.add(w));
      }
      values_.push_back(std::move(info));
      attribute_values_[ai].push_back(vid);
    }
  }

  clauses_.resize(config_.attributes.size());
  for (int ai = 0; ai < num_attributes(); ++ai) {
    for (const auto& tmpl : config_.attributes[ai].templates) {
      const auto words = split_words(tmpl);
      const auto slot = std::find(words.begin(), words.end(), "{}");
      require(slot != words.end() && std::count(words.begin(), words.end(), "{}") == 1,
              "template '" + tmpl + "' must contain exactly one {} slot");
      Clause clause;
      for (auto it = words.begin(); it != words.end(); ++it) {
        if (it == slot) continue;
        require(!token_owner.contains(*it),
                "template word '" + *it + "' is also a value token");
        const Token t = vocab_.add(*it);
        (it < slot ? clause.before : clause.after).push_back(t);
      }
      require(!clause.before.empty() || !clause.after.empty(),
              "template '" + tmpl + "' has no cue words around its slot");
      clauses_[ai].push_back(std::move(clause));
    }
  }
  for (const auto& j : config_.joiners) {
    for (const auto& w : split_words(j)) {
      require(!token_owner.contains(w), "joiner word '" + w + "' is also a value token");
      vocab_.add(w);
    }
  }
  vocab_.add(".");

  token_value_.assign(vocab_.size(), -1);
  attribute_token_.assign(vocab_.size(), false);
  for (int vid = 0; vid < num_values(); ++vid) {
    for (Token t : values_[vid].tokens) token_value_[t] = vid;
  }
  for (const auto& a : config_.attributes) attribute_token_[vocab_.id(a.name)] = true;

  summary_attribute_.assign(config_.attributes.size(), false);
  for (const auto& s : config_.summary_attributes) summary_attribute_[attribute_index(s)] = true;

  for (const auto& [src, dst] : config_.biased_pairs) {
    const int si = attribute_index(src);
    const int di = attribute_index(dst);
    require(si < di, "biased pair '" + src + "' -> '" + dst +
                         "' must follow canonical attribute order");
    const auto& dst_values = attribute_values_[di];
    std::vector<int> perm(dst_values.begin(), dst_values.end());
    Rng rng(hash_name(config_.seed, "bias:" + src + ">" + dst));
    rng.shuffle(perm);
    std::vector<int> pref;
    for (std::size_t k = 0; k < attribute_values_[si].size(); ++k)
      pref.push_back(perm[k % perm.size()]);
    preference_[{si, di}] = std::move(pref);
  }
}

int World::attribute_index(const std::string& name) const {
  for (int i = 0; i < num_attributes(); ++i) {
    if (config_.attributes[i].name == name) return i;
  }
  fail(ErrorCode::kInvalidArgument, "unknown attribute '" + name + "'");
}

const AttributeSpec& World::attribute(int index) const {
  require(index >= 0 && index < num_attributes(), "attribute index out of range");
  return config_.attributes[index];
}

const std::vector<World::Clause>& World::clauses(int attribute) const {
  return clauses_.at(static_cast<std::size_t>(attribute));
}

int World::value_index(int attribute, const std::string& value) const {
  for (int vid : attribute_values_.at(static_cast<std::size_t>(attribute))) {
    if (values_[vid].text == value) return vid;
  }
  fail(ErrorCode::kInvalidArgument, "unknown value '" + value + "' for attribute '" +
                                        config_.attributes[attribute].name + "'");
}

int World::value_of_token(Token t) const {
  if (t < 0 || static_cast<std::size_t>(t) >= token_value_.size()) return -1;
  return token_value_[t];
}

bool World::is_attribute_token(Token t) const {
  return t >= 0 && static_cast<std::size_t>(t) < attribute_token_.size() && attribute_token_[t];
}

int World::preferred_value(int source_value_id, int target_attribute) const {
  const int src_attr = values_.at(source_value_id).attribute;
  auto it = preference_.find({src_attr, target_attribute});
  require(it != preference_.end(), "no bias between the requested attributes");
  const auto& src_values = attribute_values_[src_attr];
  const auto pos = std::find(src_values.begin(), src_values.end(), source_value_id) - src_values.begin();
  return it->second[static_cast<std::size_t>(pos)];
}

void World::validate_record(const Record& record) const {
  require(record.facts.size() >= static_cast<std::size_t>(config_.min_facts) &&
              record.facts.size() <= static_cast<std::size_t>(config_.max_facts),
          "record '" + record.entity_id + "' has an out-of-range fact count");
  std::set<int> seen;
  for (const auto& f : record.facts) {
    const int ai = attribute_index(f.attribute);
    require(seen.insert(ai).second,
            "record '" + record.entity_id + "' repeats attribute '" + f.attribute + "'");
    value_index(ai, f.value);
  }
}

TokenSeq World::linearize(const Record& record) const {
  validate_record(record);
  TokenSeq out;
  for (const auto& f : record.facts) {
    out.push_back(kAttrSep);
    out.push_back(vocab_.id(f.attribute));
    out.push_back(kValSep);
    const auto& v = values_[value_index(attribute_index(f.attribute), f.value)];
    out.insert(out.end(), v.tokens.begin(), v.tokens.end());
  }
  out.push_back(kContextEnd);
  return out;
}

Record World::parse_context(std::span<const Token> tokens) const {
  require(!tokens.empty() && tokens.back() == kContextEnd,
          "context must end with the context-end token");
  Record r;
  std::size_t i = 0;
  const std::size_t n = tokens.size() - 1;
  while (i < n) {
    require(i + 3 < n && tokens[i] == kAttrSep && is_attribute_token(tokens[i + 1]) &&
                tokens[i + 2] == kValSep,
            "malformed context at position " + std::to_string(i));
    Fact f;
    f.attribute = vocab_.word(tokens[i + 1]);
    i += 3;
    std::string value;
    while (i < n && tokens[i] != kAttrSep) {
      value += (value.empty() ? "" : " ") + vocab_.word(tokens[i]);
      ++i;
    }
    f.value = value;
    r.facts.push_back(std::move(f));
  }
  validate_record(r);
  return r;
}

TokenSeq World::tokenize(const std::string& text) const {
  TokenSeq out;
  for (const auto& w : split_words(text)) out.push_back(vocab_.id(w));
  return out;
}

std::string World::detokenize(std::span<const Token> tokens) const {
  std::string out;
  for (Token t : tokens) {
    if (!out.empty()) out += ' ';
    out += vocab_.word(t);
  }
  return out;
}

std::vector<std::size_t> World::expected_facts(const Record& record) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < record.facts.size(); ++i) {
    if (config_.family == TaskFamily::kDataToText ||
        summary_attribute_[attribute_index(record.facts[i].attribute)])
      idx.push_back(i);
  }
  return idx;
}

TokenSeq linearize_record(const World& world, const Record& record) {
  return world.linearize(record);
}

TokenSeq verbalize(const World& world, const Record& record, const TemplateChoice& choice) {
  require(choice.clause_variant.size() == record.facts.size(),
          "template choice does not match the record");
  const auto& vocab = world.vocab();
  const auto& joiner = world.config().joiners.at(static_cast<std::size_t>(choice.joiner));
  TokenSeq out;
  // Attributes 0 and 1 form the opening clause; joiners separate the clauses
  // that follow it.
  int optional_emitted = 0;
  for (std::size_t fi : world.expected_facts(record)) {
    const auto& f = record.facts[fi];
    const int ai = world.attribute_index(f.attribute);
    if (ai >= 2 && optional_emitted++ > 0) {
      for (const auto& w : split_words(joiner)) out.push_back(vocab.id(w));
    }
    const auto& clause = world.clauses(ai).at(static_cast<std::size_t>(choice.clause_variant[fi]));
    out.insert(out.end(), clause.before.begin(), clause.before.end());
    const auto& v = world.value_info(world.value_index(ai, f.value));
    out.insert(out.end(), v.tokens.begin(), v.tokens.end());
    out.insert(out.end(), clause.after.begin(), clause.after.end());
  }
  out.push_back(vocab.id("."));
  out.push_back(kEos);
  return out;
}

std::vector<Example> generate_corpus(const World& world) {
  const auto& cfg = world.config();
  const int n_attr = world.num_attributes();

  // Per-attribute value distribution for unbiased draws.
  std::vector<std::vector<double>> value_probs(static_cast<std::size_t>(n_attr));
  for (int ai = 0; ai < n_attr; ++ai) {
    auto& p = value_probs[static_cast<std::size_t>(ai)];
    const auto n = world.attribute(ai).values.size();
    double z = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      p.push_back(std::pow(static_cast<double>(k + 1), -cfg.value_zipf));
      z += p.back();
    }
    for (auto& v : p) v /= z;
  }

  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(cfg.num_records));
  const int width = static_cast<int>(std::to_string(cfg.num_records).size());
  for (int i = 0; i < cfg.num_records; ++i) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));

    // Attributes 0 and 1 are always present; the optional rest are drawn
    // without replacement and kept in canonical order.
    const int lo = std::max(0, cfg.min_facts - 2);
    const int hi = cfg.max_facts - 2;
    const int n_optional = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    std::vector<int> optional(static_cast<std::size_t>(n_attr - 2));
    std::iota(optional.begin(), optional.end(), 2);
    rng.shuffle(optional);
    std::vector<int> attrs = {0, 1};
    attrs.insert(attrs.end(), optional.begin(), optional.begin() + n_optional);
    std::sort(attrs.begin(), attrs.end());

    std::vector<int> chosen(static_cast<std::size_t>(n_attr), -1);
    for (int ai : attrs) {
      const auto& values = world.attribute(ai).values;
      int vid = -1;
      for (const auto& [src, dst] : cfg.biased_pairs) {
        const int si = world.attribute_index(src);
        if (world.attribute_index(dst) != ai || chosen[si] < 0) continue;
        if (rng.uniform() < cfg.distractor_rate) vid = world.preferred_value(chosen[si], ai);
        break;
      }
      if (vid < 0) {
        const auto k = cfg.value_zipf == 0.0
                           ? rng.below(values.size())
                           : sample_index(value_probs[static_cast<std::size_t>(ai)], rng.uniform());
        vid = world.value_index(ai, values[k]);
      }
      chosen[ai] = vid;
    }

    Example ex;
    std::string id = std::to_string(i);
    ex.record.entity_id = "e" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
    TemplateChoice choice;
    for (int ai : attrs) {
      ex.record.facts.push_back({world.attribute(ai).name, world.value_info(chosen[ai]).text});
      choice.clause_variant.push_back(
          static_cast<int>(rng.below(world.clauses(ai).size())));
    }
    choice.joiner = static_cast<int>(rng.below(cfg.joiners.size()));
    ex.context_tokens = world.linearize(ex.record);
    ex.target_tokens = verbalize(world, ex.record, choice);
    require(ex.target_tokens.size() <= static_cast<std::size_t>(cfg.max_target_len),
            "corpus config: max_target_len too small for the template set");
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> SplitDataset::train() const {
  std::vector<Example> all = d1;
  all.insert(all.end(), d2.begin(), d2.end());
  return all;
}

SplitDataset split_dataset(const std::vector<Example>& examples, const SplitOptions& options) {
  require(options.ratio > 0.0 && options.ratio < 1.0, "split ratio must lie in (0,1)");
  require(options.heldout_count + options.validation_count < examples.size(),
          "held-out and validation sets leave no training examples");

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(options.seed);
  rng.shuffle(order);

  SplitDataset s;
  s.split_ratio = options.ratio;
  std::size_t pos = 0;
  for (; pos < options.heldout_count; ++pos) s.heldout.push_back(examples[order[pos]]);
  for (std::size_t k = 0; k < options.validation_count; ++k, ++pos)
    s.validation.push_back(examples[order[pos]]);
  const std::size_t n_train = examples.size() - pos;
  const auto n_d1 = static_cast<std::size_t>(std::llround(options.ratio * static_cast<double>(n_train)));
  require(n_d1 > 0 && n_d1 < n_train, "split produces an empty partition");
  for (std::size_t k = 0; k < n_train; ++k, ++pos) {
    (k < n_d1 ? s.d1 : s.d2).push_back(examples[order[pos]]);
  }
  return s;
}

json record_to_json(const Record& r) {
  json facts = json::array();
  for (const auto& f : r.facts) facts.push_back({{"attribute", f.attribute}, {"value", f.value}});
  return json{{"entity_id", r.entity_id}, {"facts", facts}};
}

Record record_from_json(const json& j) {
  Record r;
  r.entity_id = j.at("entity_id").get<std::string>();
  for (const auto& f : j.at("facts"))
    r.facts.push_back({f.at("attribute").get<std::string>(), f.at("value").get<std::string>()});
  return r;
}

void write_corpus_jsonl(const std::string& path, const SplitDataset& split) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot open '" + path + "' for writing", ErrorCode::kIo);
  auto emit = [&](const std::vector<Example>& part, const char* tag) {
    for (const auto& e : part) {
      json line{{"record", record_to_json(e.record)},
                {"context_tokens", e.context_tokens},
                {"target_tokens", e.target_tokens},
                {"split", tag}};
      out << line.dump() << '\n';
    }
  };
  emit(split.d1, "d1");
  emit(split.d2, "d2");
  emit(split.validation, "validation");
  emit(split.heldout, "heldout");
  require(out.good(), "write to '" + path + "' failed", ErrorCode::kIo);
}

SplitDataset read_corpus_jsonl(const std::string& path, double split_ratio) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open '" + path + "'", ErrorCode::kIo);
  SplitDataset s;
  s.split_ratio = split_ratio;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::kIo, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    Example e;
    e.record = record_from_json(j.at("record"));
    e.context_tokens = j.at("context_tokens").get<TokenSeq>();
    e.target_tokens = j.at("target_tokens").get<TokenSeq>();
    const auto tag = j.at("split").get<std::string>();
    if (tag == "d1") s.d1.push_back(std::move(e));
    else if (tag == "d2") s.d2.push_back(std::move(e));
    else if (tag == "validation") s.validation.push_back(std::move(e));
    else if (tag == "heldout") s.heldout.push_back(std::move(e));
    else fail(ErrorCode::kIo, path + ":" + std::to_string(lineno) + ": unknown split '" + tag + "'");
  }
  return s;
}

}  // namespace scope
