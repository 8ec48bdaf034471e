// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end over the C API.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scope/scope.h"

namespace {

using nlohmann::json;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "scope_out";
  std::vector<std::string> overrides;
};

// "a.b.c=value" -> {"a":{"b":{"c":value}}}; value is parsed as JSON when it
// is valid JSON, otherwise taken as a string.
json override_patch(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected KEY=VALUE, got '" + spec + "'");
  const std::string key = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json patch = json::object();
  json* node = &patch;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
  return patch;
}

std::string build_config(const Globals& g) {
  json config = json::object();
  if (!g.config_path.empty()) {
    std::ifstream in(g.config_path);
    if (!in) throw std::runtime_error("cannot open config '" + g.config_path + "'");
    config = json::parse(in);
  }
  for (const auto& o : g.overrides) config.merge_patch(override_patch(o));
  config["out_dir"] = g.out_dir;
  if (g.seed) config["master_seed"] = *g.seed;
  return config.dump();
}

int report_failure(scope_status s) {
  std::fprintf(stderr, "scope: %s (%s)\n", scope_last_error(), scope_status_name(s));
  return static_cast<int>(s);
}

// Owns a lab for the duration of one command.
class LabHandle {
 public:
  explicit LabHandle(const Globals& g) {
    status_ = scope_lab_create(build_config(g).c_str(), &lab_);
  }
  ~LabHandle() { scope_lab_free(lab_); }
  LabHandle(const LabHandle&) = delete;
  LabHandle& operator=(const LabHandle&) = delete;

  scope_status status() const { return status_; }
  scope_lab* get() { return lab_; }

 private:
  scope_lab* lab_ = nullptr;
  scope_status status_ = SCOPE_OK;
};

int print_and_free(scope_status s, char* text) {
  if (s != SCOPE_OK) return report_failure(s);
  if (text) std::cout << text << '\n';
  scope_string_free(text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scope: self-supervised preference tuning lab on a synthetic data-to-text task"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON pipeline configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed override");
  app.add_option("--out", g.out_dir, "artifact directory")->capture_default_str();
  app.add_option("--set", g.overrides, "config override KEY=VALUE, dotted keys (repeatable)");

  std::function<int(LabHandle&)> action;

  auto* corpus = app.add_subcommand("gen-corpus", "generate and split the corpus");
  corpus->callback([&] { action = [](LabHandle& l) { return print_and_free(scope_lab_gen_corpus(l.get()), nullptr); }; });

  auto* pretrain = app.add_subcommand("pretrain", "train the context-free model");
  pretrain->callback([&] { action = [](LabHandle& l) { return print_and_free(scope_lab_pretrain(l.get()), nullptr); }; });

  std::string which = "d1";
  auto* sft = app.add_subcommand("sft", "supervised fine-tuning on D1 or on all of D");
  sft->add_option("--which", which, "d1 or full")->check(CLI::IsMember({"d1", "full"}))->capture_default_str();
  sft->callback([&] {
    action = [&](LabHandle& l) { return print_and_free(scope_lab_sft(l.get(), which.c_str()), nullptr); };
  });

  std::optional<double> alpha;
  auto* negs = app.add_subcommand("gen-negatives", "noisy generation of rejected samples on D2");
  negs->add_option("--alpha", alpha, "mixture weight of the context-free model")->required();
  negs->callback([&] {
    action = [&](LabHandle& l) { return print_and_free(scope_lab_gen_negatives(l.get(), *alpha), nullptr); };
  });

  std::optional<double> beta;
  std::optional<double> dpo_alpha;
  auto* dpo = app.add_subcommand("dpo", "preference tuning from the D1 model");
  dpo->add_option("--beta", beta, "preference temperature")->required();
  dpo->add_option("--alpha", dpo_alpha, "noise level of the negatives (default: config)");
  dpo->callback([&] {
    action = [&](LabHandle& l) {
      double a = 0.0;
      if (dpo_alpha) {
        a = *dpo_alpha;
      } else {
        char* cfg = nullptr;
        if (auto s = scope_lab_config(l.get(), &cfg); s != SCOPE_OK) return report_failure(s);
        a = json::parse(cfg).at("noise").at("alpha").get<double>();
        scope_string_free(cfg);
      }
      char* regime = nullptr;
      const auto s = scope_lab_dpo(l.get(), a, *beta, &regime);
      if (s == SCOPE_OK) std::cout << "regime: " << regime << '\n';
      scope_string_free(regime);
      return s == SCOPE_OK ? 0 : report_failure(s);
    };
  });

  std::string strategy = "plain";
  std::string checkpoint;
  std::string output;
  auto* decode = app.add_subcommand("decode", "decode the held-out set with a checkpoint");
  decode->add_option("--strategy", strategy)->check(CLI::IsMember({"plain", "cad", "pmi", "noisy"}))->capture_default_str();
  decode->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  decode->add_option("--output", output, "JSON-lines output (default: OUT/traces/decode_<strategy>.jsonl)");
  decode->callback([&] {
    action = [&](LabHandle& l) {
      const std::string path = output.empty() ? g.out_dir + "/traces/decode_" + strategy + ".jsonl" : output;
      const auto s = scope_lab_decode(l.get(), checkpoint.c_str(), strategy.c_str(), path.c_str());
      if (s == SCOPE_OK) std::cout << path << '\n';
      return s == SCOPE_OK ? 0 : report_failure(s);
    };
  });

  auto* eval = app.add_subcommand("eval", "held-out metrics of one checkpoint");
  eval->add_option("--strategy", strategy)->check(CLI::IsMember({"plain", "cad", "pmi", "noisy"}))->capture_default_str();
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->callback([&] {
    action = [&](LabHandle& l) {
      char* text = nullptr;
      const auto s = scope_lab_eval(l.get(), checkpoint.c_str(), strategy.c_str(), &text);
      return print_and_free(s, text);
    };
  });

  std::string param;
  auto* sweep = app.add_subcommand("sweep", "alpha, beta or split-ratio sweep");
  sweep->add_option("--param", param)->required()->check(CLI::IsMember({"alpha", "beta", "split"}));
  sweep->callback([&] {
    action = [&](LabHandle& l) {
      char* text = nullptr;
      const auto s = scope_lab_sweep(l.get(), param.c_str(), &text);
      return print_and_free(s, text);
    };
  });

  auto* report = app.add_subcommand("report", "run missing stages and write the comparison report");
  report->callback([&] {
    action = [](LabHandle& l) {
      char* text = nullptr;
      const auto s = scope_lab_report(l.get(), &text);
      return print_and_free(s, text);
    };
  });

  CLI11_PARSE(app, argc, argv);
  try {
    LabHandle lab(g);
    if (lab.status() != SCOPE_OK) return report_failure(lab.status());
    return action(lab);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "scope: %s\n", e.what());
    return 1;
  }
}
