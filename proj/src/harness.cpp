// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "scope/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace scope {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

void PipelineConfig::validate() const {
  corpus.validate();
  pretrain.validate();
  sft.validate();
  dpo.validate();
  noise.validate();
  baseline.validate();
  negative_decode.validate();
  eval_decode.validate();
  require(split_ratio > 0.0 && split_ratio < 1.0, "pipeline config: split_ratio must lie in (0,1)");
  require(heldout_count > 0, "pipeline config: heldout_count must be positive");
  require(!alpha_grid.empty() && !beta_grid.empty() && !split_grid.empty(),
          "pipeline config: sweep grids must be non-empty");
  for (double a : alpha_grid) require(a >= 0.0 && a <= 1.0, "pipeline config: alpha grid outside [0,1]");
  for (double b : beta_grid) require(b > 0.0, "pipeline config: beta grid must be positive");
  for (double r : split_grid) require(r > 0.0 && r < 1.0, "pipeline config: split grid outside (0,1)");
  require(regime_epsilon >= 0.0, "pipeline config: regime_epsilon must be non-negative");
  require(!out_dir.empty(), "pipeline config: empty output directory");
}

PipelineConfig default_pipeline_config() {
  PipelineConfig c;
  c.pretrain.epochs = 3;
  c.pretrain.learning_rate = 3e-3;
  c.sft.epochs = 3;
  c.sft.learning_rate = 3e-3;
  c.sft.batch_size = 8;
  c.dpo.epochs = 1;
  c.dpo.beta = 0.1;
  c.dpo.learning_rate = 2e-5;
  c.dpo.log_every = 10;
  c.eval_decode.max_new_tokens = c.corpus.max_target_len;
  c.negative_decode.max_new_tokens = c.corpus.max_target_len;
  return c;
}

void to_json(json& j, const PipelineConfig& c) {
  j = json{{"corpus", c.corpus},
           {"model", c.model},
           {"pretrain", c.pretrain},
           {"sft", c.sft},
           {"dpo", c.dpo},
           {"noise", {{"alpha", c.noise.alpha}}},
           {"baseline", c.baseline},
           {"negative_decode", c.negative_decode},
           {"eval_decode", c.eval_decode},
           {"split_ratio", c.split_ratio},
           {"heldout_count", c.heldout_count},
           {"validation_count", c.validation_count},
           {"alpha_grid", c.alpha_grid},
           {"beta_grid", c.beta_grid},
           {"split_grid", c.split_grid},
           {"regime_epsilon", c.regime_epsilon},
           {"out_dir", c.out_dir},
           {"master_seed", c.master_seed}};
}

void from_json(const json& j, PipelineConfig& c) {
  if (j.contains("corpus")) j.at("corpus").get_to(c.corpus);
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("pretrain")) j.at("pretrain").get_to(c.pretrain);
  if (j.contains("sft")) j.at("sft").get_to(c.sft);
  if (j.contains("dpo")) j.at("dpo").get_to(c.dpo);
  if (j.contains("noise")) c.noise.alpha = j.at("noise").value("alpha", c.noise.alpha);
  if (j.contains("baseline")) j.at("baseline").get_to(c.baseline);
  if (j.contains("negative_decode")) j.at("negative_decode").get_to(c.negative_decode);
  if (j.contains("eval_decode")) j.at("eval_decode").get_to(c.eval_decode);
  c.split_ratio = j.value("split_ratio", c.split_ratio);
  c.heldout_count = j.value("heldout_count", c.heldout_count);
  c.validation_count = j.value("validation_count", c.validation_count);
  c.alpha_grid = j.value("alpha_grid", c.alpha_grid);
  c.beta_grid = j.value("beta_grid", c.beta_grid);
  c.split_grid = j.value("split_grid", c.split_grid);
  c.regime_epsilon = j.value("regime_epsilon", c.regime_epsilon);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.master_seed = j.value("master_seed", c.master_seed);
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open config '" + path + "'", ErrorCode::kIo);
  PipelineConfig c = default_pipeline_config();
  try {
    from_json(json::parse(in), c);
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument, "config '" + path + "': " + e.what());
  }
  return c;
}

std::uint64_t stage_seed(std::uint64_t master, const std::string& stage) {
  return hash_name(master, stage);
}

// ---------------------------------------------------------------- regimes

std::string to_string(RegimeLabel r) {
  switch (r) {
    case RegimeLabel::kDegenerate: return "degenerate";
    case RegimeLabel::kEffective: return "effective";
    case RegimeLabel::kTrivial: return "trivial";
  }
  return "effective";
}

RegimeLabel classify_regime(const TrainingTrace& trace, double epsilon) {
  require(!trace.rows.empty(), "classify_regime: empty trace");
  const auto& first = trace.rows.front();
  const auto& last = trace.rows.back();
  if (last.logp_preferred < first.logp_preferred - epsilon) return RegimeLabel::kDegenerate;
  // Row 0 is logged before any update, so the first logged training step is
  // the first row past it.
  const TraceRow* early = &first;
  for (const auto& r : trace.rows) {
    if (r.step >= 1) {
      early = &r;
      break;
    }
  }
  if (last.margin > 0.0 && early->margin > 0.9 * last.margin) return RegimeLabel::kTrivial;
  return RegimeLabel::kEffective;
}

// ---------------------------------------------------------------- evaluation

const SystemReport& EvalReport::system(const std::string& name) const {
  for (const auto& s : systems) {
    if (s.name == name) return s;
  }
  fail(ErrorCode::kInvalidArgument, "report has no system '" + name + "'");
}

const std::vector<std::string>& report_metric_names() {
  static const std::vector<std::string> names = {
      "bleu",          "rouge_l",           "parent_recall", "oracle_omission",
      "oracle_hallucination", "oracle_score", "hallucination_rate",
      "judge_win",     "judge_tie",         "judge_loss"};
  return names;
}

namespace {

json significance_json(const std::optional<SignificanceResult>& s) {
  if (!s) return nullptr;
  return json{{"test_name", s->test_name}, {"statistic", s->statistic}, {"p_value", s->p_value}};
}

double metric_value(const SystemReport& s, const std::string& metric) {
  if (metric == "bleu") return s.bleu;
  if (metric == "rouge_l") return s.rouge_l;
  if (metric == "parent_recall") return s.parent_recall;
  if (metric == "oracle_omission") return s.oracle_omission;
  if (metric == "oracle_hallucination") return s.oracle_hallucination;
  if (metric == "oracle_score") return s.oracle_score;
  if (metric == "hallucination_rate") return s.hallucination_rate;
  if (metric == "judge_win") return static_cast<double>(s.judge.win);
  if (metric == "judge_tie") return static_cast<double>(s.judge.tie);
  if (metric == "judge_loss") return static_cast<double>(s.judge.loss);
  fail(ErrorCode::kInternal, "unknown metric '" + metric + "'");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Short stable label for grid values in file names: 0.5 -> "0.5".
std::string grid_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot open '" + path + "' for writing", ErrorCode::kIo);
  out << text;
  require(out.good(), "write to '" + path + "' failed", ErrorCode::kIo);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

json to_json(const EvalReport& report) {
  json systems = json::object();
  for (const auto& s : report.systems) {
    systems[s.name] = json{{"bleu", s.bleu},
                           {"rouge_l", s.rouge_l},
                           {"parent_recall", s.parent_recall},
                           {"oracle_omission", s.oracle_omission},
                           {"oracle_hallucination", s.oracle_hallucination},
                           {"oracle_score", s.oracle_score},
                           {"hallucination_rate", s.hallucination_rate},
                           {"judge", {{"win", s.judge.win}, {"tie", s.judge.tie}, {"loss", s.judge.loss}}},
                           {"significance",
                            {{"mcnemar", significance_json(s.mcnemar)},
                             {"paired_t", significance_json(s.paired_t)}}}};
  }
  json order = json::array();
  for (const auto& s : report.systems) order.push_back(s.name);
  return json{{"comparison_system", report.comparison_system},
              {"num_examples", report.num_examples},
              {"system_order", order},
              {"systems", systems}};
}

double mean_oracle_score(const World& world, std::span<const Example> examples,
                         std::span<const TokenSeq> outputs) {
  require(examples.size() == outputs.size() && !examples.empty(),
          "mean_oracle_score: outputs do not match examples");
  double sum = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i)
    sum += fact_oracle(world, outputs[i], examples[i].record).score;
  return sum / static_cast<double>(examples.size());
}

EvalReport evaluate_systems(const World& world, std::span<const Example> examples,
                            std::span<const SystemOutputs> systems,
                            const std::string& comparison) {
  require(!examples.empty(), "evaluate_systems: no examples");
  const std::size_t n = examples.size();
  std::vector<TokenSeq> refs;
  refs.reserve(n);
  for (const auto& e : examples) refs.push_back(e.target_tokens);

  std::vector<std::vector<OracleVerdict>> verdicts(systems.size());
  std::size_t cmp = systems.size();
  for (std::size_t s = 0; s < systems.size(); ++s) {
    require(systems[s].outputs.size() == n,
            "evaluate_systems: system '" + systems[s].name + "' has the wrong number of outputs");
    if (systems[s].name == comparison) cmp = s;
    for (std::size_t i = 0; i < n; ++i)
      verdicts[s].push_back(fact_oracle(world, systems[s].outputs[i], examples[i].record));
  }
  require(cmp < systems.size(), "evaluate_systems: unknown comparison system '" + comparison + "'");

  EvalReport report;
  report.comparison_system = comparison;
  report.num_examples = n;
  for (std::size_t s = 0; s < systems.size(); ++s) {
    SystemReport r;
    r.name = systems[s].name;
    r.bleu = bleu(systems[s].outputs, refs);
    double rl = 0.0, pr = 0.0, om = 0.0, ha = 0.0, sc = 0.0, rate = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& out = systems[s].outputs[i];
      rl += out.empty() ? 0.0 : rouge_l(out, refs[i]);
      pr += parent_recall(world, out, examples[i].record);
      const auto& v = verdicts[s][i];
      om += v.omission_score;
      ha += v.hallucination_score;
      sc += v.score;
      rate += v.hallucinated_values > 0 ? 1.0 : 0.0;
      r.per_example_score.push_back(v.score);
      switch (judge_verdicts(v, verdicts[cmp][i])) {
        case JudgeOutcome::kWinA: ++r.judge.win; break;
        case JudgeOutcome::kWinB: ++r.judge.loss; break;
        case JudgeOutcome::kTie: ++r.judge.tie; break;
      }
    }
    const double inv = 1.0 / static_cast<double>(n);
    r.rouge_l = rl * inv;
    r.parent_recall = pr * inv;
    r.oracle_omission = om * inv;
    r.oracle_hallucination = ha * inv;
    r.oracle_score = sc * inv;
    r.hallucination_rate = rate * inv;
    report.systems.push_back(std::move(r));
  }
  // Significance against the comparison system; undefined cells stay null.
  const auto& base = report.systems[cmp].per_example_score;
  for (auto& r : report.systems) {
    if (r.judge.win + r.judge.loss > 0) r.mcnemar = mcnemar_test(r.judge.win, r.judge.loss);
    if (n >= 2) {
      try {
        r.paired_t = paired_t_test(r.per_example_score, base);
      } catch (const Error&) {
        r.paired_t.reset();
      }
    }
  }
  return report;
}

void emit_report(const EvalReport& report, const std::string& dir) {
  fs::create_directories(dir);
  write_text((fs::path(dir) / "eval.json").string(), to_json(report).dump(2) + "\n");
  std::string csv = "system,metric,value\n";
  for (const auto& s : report.systems) {
    for (const auto& m : report_metric_names()) csv += s.name + "," + m + "," + format_double(metric_value(s, m)) + "\n";
  }
  write_text((fs::path(dir) / "eval.csv").string(), csv);
}

// ---------------------------------------------------------------- lab

namespace {

const char* kDatasets = "datasets";
const char* kCheckpoints = "checkpoints";
const char* kTraces = "traces";
const char* kReports = "reports";

void write_outputs_jsonl(const std::string& path, std::span<const Example> examples,
                         std::span<const TokenSeq> outputs) {
  std::string text;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    text += json{{"entity_id", examples[i].record.entity_id}, {"output_tokens", outputs[i]}}.dump();
    text += "\n";
  }
  write_text(path, text);
}

}  // namespace

Lab::Lab(PipelineConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto m = config_.master_seed;
  config_.corpus.seed = stage_seed(m, "corpus");
  config_.model.seed = stage_seed(m, "init");
  config_.pretrain.seed = stage_seed(m, "pretrain");
  config_.sft.seed = stage_seed(m, "sft");
  config_.dpo.seed = stage_seed(m, "dpo");
  config_.negative_decode.seed = stage_seed(m, "negatives");
  config_.eval_decode.seed = stage_seed(m, "eval");
  world_ = std::make_unique<World>(config_.corpus);
  const auto vocab = static_cast<int>(world_->vocab().size());
  require(config_.model.vocab_size == 0 || config_.model.vocab_size == vocab,
          "model vocab_size " + std::to_string(config_.model.vocab_size) +
              " does not match the corpus vocabulary (" + std::to_string(vocab) + ")",
          ErrorCode::kConfigMismatch);
  config_.model.vocab_size = vocab;
  config_.model.validate();
  for (const char* d : {kDatasets, kCheckpoints, kTraces, kReports})
    fs::create_directories(fs::path(config_.out_dir) / d);
}

std::string Lab::path(const std::string& relative) const {
  return (fs::path(config_.out_dir) / relative).string();
}

std::string Lab::fingerprint(const std::string& stage) const {
  const auto& c = config_;
  json j;
  j["corpus"] = c.corpus;
  j["heldout_count"] = c.heldout_count;
  j["validation_count"] = c.validation_count;
  j["master_seed"] = c.master_seed;
  j["split_ratio"] = c.split_ratio;
  if (stage == "corpus") return j.dump();
  j["model"] = c.model;
  j["pretrain"] = c.pretrain;
  if (stage == "pretrain") return j.dump();
  j["sft"] = c.sft;
  j["eval_decode"] = c.eval_decode;
  if (stage == "sft_full") return j.dump();
  if (stage == "sft_d1") return j.dump();
  j["negative_decode"] = c.negative_decode;
  if (stage.starts_with("negatives")) return j.dump() + stage;
  j["dpo"] = c.dpo;
  return j.dump() + stage;
}

bool Lab::fresh(const std::string& artifact, const std::string& stage) const {
  if (!fs::exists(path(artifact))) return false;
  return read_text(path(artifact + ".stamp")) == fingerprint(stage);
}

void Lab::stamp(const std::string& artifact, const std::string& stage) const {
  write_text(path(artifact + ".stamp"), fingerprint(stage));
}

const SplitDataset& Lab::data() {
  if (data_) return *data_;
  const std::string file = std::string(kDatasets) + "/corpus.jsonl";
  if (fresh(file, "corpus")) {
    data_ = read_corpus_jsonl(path(file), config_.split_ratio);
    return *data_;
  }
  SplitOptions opt;
  opt.ratio = config_.split_ratio;
  opt.heldout_count = config_.heldout_count;
  opt.validation_count = config_.validation_count;
  opt.seed = stage_seed(config_.master_seed, "split");
  const auto examples = generate_corpus(*world_);
  const auto max_len = static_cast<std::size_t>(config_.model.max_seq_len);
  for (const auto& e : examples) {
    require(e.context_tokens.size() + e.target_tokens.size() - 1 <= max_len,
            "example " + e.record.entity_id + " does not fit max_seq_len " + std::to_string(max_len),
            ErrorCode::kLengthOverflow);
  }
  data_ = split_dataset(examples, opt);
  write_corpus_jsonl(path(file), *data_);
  stamp(file, "corpus");
  return *data_;
}

double Lab::validation_score(const Parameters& model) {
  const auto& d = data();
  if (d.validation.empty()) return 0.0;
  DecodeConfig dc = config_.eval_decode;
  dc.seed = stage_seed(config_.master_seed, "validation");
  double sum = 0.0;
  for (const auto& e : d.validation) {
    dc.rng_stream_id = stream_id_for(e.record.entity_id);
    sum += fact_oracle(*world_, sample_sequence(model, e.context_tokens, dc), e.record).score;
  }
  return sum / static_cast<double>(d.validation.size());
}

const Parameters& Lab::pretrained() {
  if (pretrained_) return *pretrained_;
  const std::string file = std::string(kCheckpoints) + "/p_lm.ckpt";
  if (fresh(file, "pretrain")) {
    pretrained_ = load_checkpoint(path(file), config_.model);
    return *pretrained_;
  }
  const auto train = data().train();
  const auto stripped = strip_context(train);
  auto result = train_sft(init_params(config_.model), stripped, config_.pretrain);
  result.params.set_role(ModelRole::kPretrained);
  result.trace.write_csv(path(std::string(kTraces) + "/pretrain.csv"));
  save_checkpoint(result.params, path(file));
  stamp(file, "pretrain");
  pretrained_ = std::move(result.params);
  return *pretrained_;
}

Parameters Lab::train_sft_stage(const std::string& name, std::span<const Example> data) {
  const std::string file = std::string(kCheckpoints) + "/" + name + ".ckpt";
  if (fresh(file, name)) return load_checkpoint(path(file), config_.model);
  TrainConfig tc = config_.sft;
  tc.seed = stage_seed(config_.master_seed, name);
  auto result = train_sft(pretrained(), data, tc,
                          [this](const Parameters& p) { return validation_score(p); });
  result.params.set_role(ModelRole::kSft);
  result.trace.write_csv(path(std::string(kTraces) + "/" + name + ".csv"));
  save_checkpoint(result.params, path(file));
  stamp(file, name);
  return std::move(result.params);
}

const Parameters& Lab::sft_d1() {
  if (!sft_d1_) sft_d1_ = train_sft_stage("sft_d1", data().d1);
  return *sft_d1_;
}

const Parameters& Lab::sft_full() {
  if (!sft_full_) sft_full_ = train_sft_stage("sft_full", data().train());
  return *sft_full_;
}

const std::vector<PreferenceTriple>& Lab::negatives(double alpha) {
  if (auto it = negatives_.find(alpha); it != negatives_.end()) return it->second;
  const std::string stage = "negatives_a" + grid_label(alpha);
  const std::string file = std::string(kDatasets) + "/preferences_a" + grid_label(alpha) + ".jsonl";
  if (fresh(file, stage)) return negatives_[alpha] = read_preferences_jsonl(path(file));
  NoiseConfig noise = config_.noise;
  noise.alpha = alpha;
  auto triples = build_preference_dataset(data().d2, pretrained(), sft_d1(), noise, config_.negative_decode);
  write_preferences_jsonl(path(file), triples);
  stamp(file, stage);
  return negatives_[alpha] = std::move(triples);
}

const DpoRun& Lab::dpo(double alpha, double beta) {
  const auto key = std::make_pair(alpha, beta);
  if (auto it = dpo_.find(key); it != dpo_.end()) return it->second;
  const std::string tag = "a" + grid_label(alpha) + "_b" + grid_label(beta);
  const std::string stage = "dpo_" + tag;
  const std::string file = std::string(kCheckpoints) + "/scope_" + tag + ".ckpt";
  const std::string trace_file = path(std::string(kTraces) + "/dpo_" + tag + ".csv");
  DpoRun run;
  if (fresh(file, stage) && fs::exists(trace_file)) {
    run.params = load_checkpoint(path(file), config_.model);
    run.trace = TrainingTrace::read_csv(trace_file);
  } else {
    const auto& triples = negatives(alpha);
    TrainConfig tc = config_.dpo;
    tc.beta = beta;
    auto result = train_dpo(sft_d1(), triples, tc,
                            [this](const Parameters& p) { return validation_score(p); });
    result.trace.write_csv(trace_file);
    save_checkpoint(result.params, path(file));
    stamp(file, stage);
    run.params = std::move(result.params);
    run.trace = std::move(result.trace);
  }
  run.regime = classify_regime(run.trace, config_.regime_epsilon);
  return dpo_[key] = std::move(run);
}

std::vector<TokenSeq> Lab::decode_heldout(const Parameters& model, Strategy strategy,
                                          std::span<const Example> examples) {
  std::vector<TokenSeq> out;
  out.reserve(examples.size());
  DecodeConfig dc = config_.eval_decode;
  for (const auto& e : examples) {
    dc.rng_stream_id = stream_id_for(e.record.entity_id);
    switch (strategy) {
      case Strategy::kPlain: out.push_back(sample_sequence(model, e.context_tokens, dc)); break;
      case Strategy::kCad:
        out.push_back(cad_decode(e.context_tokens, model, pretrained(), config_.baseline, dc));
        break;
      case Strategy::kPmi:
        out.push_back(pmi_decode(e.context_tokens, model, pretrained(), config_.baseline, dc));
        break;
      case Strategy::kNoisy:
        out.push_back(noisy_generation(e.context_tokens, pretrained(), model, config_.noise, dc));
        break;
    }
  }
  return out;
}

EvalReport Lab::evaluate() {
  const auto& heldout = data().heldout;
  const auto& scope = dpo(config_.noise.alpha, config_.dpo.beta);
  std::vector<SystemOutputs> systems = {
      {"sft_full", decode_heldout(sft_full(), Strategy::kPlain, heldout)},
      {"sft_d1", decode_heldout(sft_d1(), Strategy::kPlain, heldout)},
      {"scope", decode_heldout(scope.params, Strategy::kPlain, heldout)},
      {"cad", decode_heldout(sft_full(), Strategy::kCad, heldout)},
      {"pmi", decode_heldout(sft_full(), Strategy::kPmi, heldout)},
  };
  for (const auto& s : systems)
    write_outputs_jsonl(path(std::string(kTraces) + "/decode_" + s.name + ".jsonl"), heldout, s.outputs);
  return evaluate_systems(*world_, heldout, systems, "sft_full");
}

void Lab::adopt_upstream(Lab& parent) {
  require(parent.config_.corpus.seed == config_.corpus.seed &&
              parent.config_.heldout_count == config_.heldout_count &&
              parent.config_.validation_count == config_.validation_count,
          "adopt_upstream: corpora differ", ErrorCode::kConfigMismatch);
  SplitDataset split = parent.data();
  SplitOptions opt;
  // Re-split the same train pool at this lab's ratio; held-out and validation
  // partitions are unchanged.
  auto train = split.train();
  const auto n1 = static_cast<std::size_t>(std::llround(config_.split_ratio * static_cast<double>(train.size())));
  require(n1 > 0 && n1 < train.size(), "adopt_upstream: ratio leaves an empty partition");
  split.d1.assign(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n1));
  split.d2.assign(train.begin() + static_cast<std::ptrdiff_t>(n1), train.end());
  split.split_ratio = config_.split_ratio;
  data_ = std::move(split);
  pretrained_ = parent.pretrained();
}

EvalReport run_scope_pipeline(const PipelineConfig& config) {
  Lab lab(config);
  auto report = lab.evaluate();
  write_text(lab.path(std::string(kReports) + "/config.json"), json(lab.config()).dump(2) + "\n");
  emit_report(report, lab.path(kReports));
  return report;
}

// ---------------------------------------------------------------- sweeps

json SweepReport::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    json values = json::object();
    for (const auto& [k, v] : r.values) values[k] = v;
    rows_json.push_back(json{{"cell", r.cell}, {"values", values}, {"regime", r.regime}, {"error", r.error}});
  }
  return json{{"param", param}, {"rows", rows_json}};
}

void SweepReport::write(const std::string& dir) const {
  fs::create_directories(dir);
  write_text((fs::path(dir) / ("sweep_" + param + ".json")).string(), to_json().dump(2) + "\n");
  // The full cell configuration lives in the JSON; the CSV keys rows by the
  // swept coordinates.
  std::string csv = "alpha,beta,split_ratio,metric,value,regime,error\n";
  const auto quote = [](const std::string& text) {
    std::string q = "\"";
    for (char ch : text) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  };
  for (const auto& r : rows) {
    const std::string key = format_double(r.cell.at("alpha").get<double>()) + "," +
                            format_double(r.cell.at("beta").get<double>()) + "," +
                            format_double(r.cell.at("split_ratio").get<double>()) + ",";
    const std::string tail = "," + r.regime + "," + quote(r.error) + "\n";
    for (const auto& [k, v] : r.values) csv += key + k + "," + format_double(v) + tail;
    if (r.values.empty()) csv += key + "," + tail;
  }
  write_text((fs::path(dir) / ("sweep_" + param + ".csv")).string(), csv);
}

namespace {

json cell_config(const Lab& lab, double alpha, double beta, double ratio) {
  const auto& c = lab.config();
  TrainConfig dpo = c.dpo;
  dpo.beta = beta;
  return json{{"alpha", alpha},
              {"beta", beta},
              {"split_ratio", ratio},
              {"master_seed", c.master_seed},
              {"dpo", dpo},
              {"negative_decode", c.negative_decode},
              {"eval_decode", c.eval_decode}};
}

void record_scope_eval(Lab& lab, const Parameters& params, SweepRow& row) {
  const auto& heldout = lab.data().heldout;
  std::vector<SystemOutputs> sys = {{"scope", lab.decode_heldout(params, Strategy::kPlain, heldout)}};
  const auto rep = evaluate_systems(lab.world(), heldout, sys, "scope");
  const auto& s = rep.systems.front();
  row.values["oracle_score"] = s.oracle_score;
  row.values["hallucination_rate"] = s.hallucination_rate;
  row.values["bleu"] = s.bleu;
  row.values["rouge_l"] = s.rouge_l;
  row.values["parent_recall"] = s.parent_recall;
}

double negatives_score(Lab& lab, const std::vector<PreferenceTriple>& triples) {
  const auto& d2 = lab.data().d2;
  std::vector<TokenSeq> outs;
  for (const auto& t : triples) outs.push_back(t.rejected);
  return mean_oracle_score(lab.world(), d2, outs);
}

}  // namespace

SweepReport alpha_sweep(Lab& lab, const std::vector<double>& grid) {
  SweepReport rep;
  rep.param = "alpha";
  const double beta = lab.config().dpo.beta;
  for (double alpha : grid) {
    SweepRow row;
    row.cell = cell_config(lab, alpha, beta, lab.config().split_ratio);
    try {
      require(alpha >= 0.0 && alpha <= 1.0, "alpha outside [0,1]");
      row.values["negative_oracle_score"] = negatives_score(lab, lab.negatives(alpha));
      const auto& run = lab.dpo(alpha, beta);
      record_scope_eval(lab, run.params, row);
      row.regime = to_string(run.regime);
    } catch (const Error& e) {
      row.error = e.what();
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

SweepReport beta_sweep(Lab& lab, const std::vector<double>& grid) {
  SweepReport rep;
  rep.param = "beta";
  const double alpha = lab.config().noise.alpha;
  double reference = std::nan("");
  for (double beta : grid) {
    SweepRow row;
    row.cell = cell_config(lab, alpha, beta, lab.config().split_ratio);
    try {
      require(beta > 0.0, "beta must be positive");
      if (std::isnan(reference)) {
        const auto& heldout = lab.data().heldout;
        reference = mean_oracle_score(lab.world(), heldout,
                                      lab.decode_heldout(lab.sft_d1(), Strategy::kPlain, heldout));
      }
      row.values["reference_oracle_score"] = reference;
      const auto& run = lab.dpo(alpha, beta);
      record_scope_eval(lab, run.params, row);
      row.regime = to_string(run.regime);
    } catch (const Error& e) {
      row.error = e.what();
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

SweepReport split_ablation(Lab& lab, const std::vector<double>& ratios) {
  SweepReport rep;
  rep.param = "split";
  for (double ratio : ratios) {
    SweepRow row;
    row.cell = cell_config(lab, lab.config().noise.alpha, lab.config().dpo.beta, ratio);
    try {
      require(ratio > 0.0 && ratio < 1.0, "split ratio outside (0,1)");
      PipelineConfig c = lab.config();
      c.split_ratio = ratio;
      c.out_dir = lab.path("split/r" + grid_label(ratio));
      Lab sub(c);
      sub.adopt_upstream(lab);
      const auto& heldout = sub.data().heldout;
      row.values["sft_full_oracle_score"] =
          mean_oracle_score(lab.world(), heldout, lab.decode_heldout(lab.sft_full(), Strategy::kPlain, heldout));
      row.values["sft_d1_oracle_score"] =
          mean_oracle_score(sub.world(), heldout, sub.decode_heldout(sub.sft_d1(), Strategy::kPlain, heldout));
      const auto& run = sub.dpo(c.noise.alpha, c.dpo.beta);
      record_scope_eval(sub, run.params, row);
      row.values["scope_oracle_score"] = row.values["oracle_score"];
      row.regime = to_string(run.regime);
    } catch (const Error& e) {
      row.error = e.what();
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

}  // namespace scope
