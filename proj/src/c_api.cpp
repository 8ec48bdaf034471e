// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "scope/scope.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "scope/harness.hpp"

struct scope_lab {
  explicit scope_lab(scope::PipelineConfig c) : lab(std::move(c)) {}
  scope::Lab lab;
};

struct scope_model {
  scope::Parameters params;
};

namespace {

thread_local std::string g_last_error;

scope_status status_of(scope::ErrorCode code) {
  switch (code) {
    case scope::ErrorCode::kInvalidArgument: return SCOPE_ERR_INVALID_ARGUMENT;
    case scope::ErrorCode::kIo: return SCOPE_ERR_IO;
    case scope::ErrorCode::kConfigMismatch: return SCOPE_ERR_CONFIG_MISMATCH;
    case scope::ErrorCode::kLengthOverflow: return SCOPE_ERR_LENGTH_OVERFLOW;
    case scope::ErrorCode::kNumeric: return SCOPE_ERR_NUMERIC;
    case scope::ErrorCode::kStage: return SCOPE_ERR_STAGE;
    case scope::ErrorCode::kInternal: return SCOPE_ERR_INTERNAL;
  }
  return SCOPE_ERR_INTERNAL;
}

// Runs `body`, mapping exceptions to a status and the thread's last error.
// `stage` prefixes the message so failures name the step that raised them.
template <typename F>
scope_status guarded(const char* stage, F&& body) {
  const std::string prefix = stage ? std::string(stage) + ": " : std::string();
  try {
    body();
    g_last_error.clear();
    return SCOPE_OK;
  } catch (const scope::Error& e) {
    g_last_error = prefix + e.what();
    return status_of(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = prefix + e.what();
    return SCOPE_ERR_IO;
  } catch (const nlohmann::json::exception& e) {
    g_last_error = prefix + e.what();
    return SCOPE_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    g_last_error = prefix + "out of memory";
    return SCOPE_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = prefix + e.what();
    return SCOPE_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put_string(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

void need(const void* p, const char* what) {
  scope::require(p != nullptr, std::string(what) + " must not be null");
}

nlohmann::json system_json(const scope::SystemReport& s) {
  return {{"bleu", s.bleu},
          {"rouge_l", s.rouge_l},
          {"parent_recall", s.parent_recall},
          {"oracle_omission", s.oracle_omission},
          {"oracle_hallucination", s.oracle_hallucination},
          {"oracle_score", s.oracle_score},
          {"hallucination_rate", s.hallucination_rate}};
}

}  // namespace

extern "C" {

const char* scope_version(void) { return "0.1.0"; }

const char* scope_last_error(void) { return g_last_error.c_str(); }

const char* scope_status_name(scope_status status) {
  switch (status) {
    case SCOPE_OK: return "ok";
    case SCOPE_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case SCOPE_ERR_IO: return "io";
    case SCOPE_ERR_CONFIG_MISMATCH: return "config_mismatch";
    case SCOPE_ERR_LENGTH_OVERFLOW: return "length_overflow";
    case SCOPE_ERR_NUMERIC: return "numeric";
    case SCOPE_ERR_STAGE: return "stage";
    case SCOPE_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void scope_string_free(char* s) { std::free(s); }

scope_status scope_default_config(char** json_out) {
  return guarded(nullptr, [&] {
    need(json_out, "json_out");
    put_string(json_out, nlohmann::json(scope::default_pipeline_config()).dump(2));
  });
}

scope_status scope_lab_create(const char* config_json, scope_lab** out) {
  return guarded("config", [&] {
    need(out, "out");
    *out = nullptr;
    auto config = scope::default_pipeline_config();
    if (config_json && *config_json) scope::from_json(nlohmann::json::parse(config_json), config);
    *out = new scope_lab(std::move(config));
  });
}

void scope_lab_free(scope_lab* lab) { delete lab; }

scope_status scope_lab_config(scope_lab* lab, char** json_out) {
  return guarded(nullptr, [&] {
    need(lab, "lab");
    need(json_out, "json_out");
    put_string(json_out, nlohmann::json(lab->lab.config()).dump(2));
  });
}

scope_status scope_lab_gen_corpus(scope_lab* lab) {
  return guarded("gen-corpus", [&] {
    need(lab, "lab");
    lab->lab.data();
  });
}

scope_status scope_lab_pretrain(scope_lab* lab) {
  return guarded("pretrain", [&] {
    need(lab, "lab");
    lab->lab.pretrained();
  });
}

scope_status scope_lab_sft(scope_lab* lab, const char* which) {
  return guarded("sft", [&] {
    need(lab, "lab");
    const std::string w = which ? which : "d1";
    if (w == "d1") {
      lab->lab.sft_d1();
    } else if (w == "full") {
      lab->lab.sft_full();
    } else {
      scope::fail(scope::ErrorCode::kInvalidArgument, "unknown SFT variant '" + w + "' (use d1 or full)");
    }
  });
}

scope_status scope_lab_gen_negatives(scope_lab* lab, double alpha) {
  return guarded("gen-negatives", [&] {
    need(lab, "lab");
    scope::require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0,1]");
    lab->lab.negatives(alpha);
  });
}

scope_status scope_lab_dpo(scope_lab* lab, double alpha, double beta, char** regime_out) {
  return guarded("dpo", [&] {
    need(lab, "lab");
    scope::require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0,1]");
    scope::require(beta > 0.0, "beta must be positive");
    const auto& run = lab->lab.dpo(alpha, beta);
    put_string(regime_out, scope::to_string(run.regime));
  });
}

scope_status scope_lab_decode(scope_lab* lab, const char* checkpoint_path, const char* strategy,
                              const char* output_path) {
  return guarded("decode", [&] {
    need(lab, "lab");
    need(checkpoint_path, "checkpoint_path");
    need(output_path, "output_path");
    const auto s = scope::parse_strategy(strategy ? strategy : "plain");
    const auto model = scope::load_checkpoint(checkpoint_path, lab->lab.config().model);
    const auto& heldout = lab->lab.data().heldout;
    const auto outs = lab->lab.decode_heldout(model, s, heldout);
    std::ofstream out(output_path, std::ios::binary | std::ios::trunc);
    scope::require(out.good(), std::string("cannot open '") + output_path + "' for writing",
                   scope::ErrorCode::kIo);
    const auto& world = lab->lab.world();
    for (std::size_t i = 0; i < heldout.size(); ++i) {
      out << nlohmann::json{{"entity_id", heldout[i].record.entity_id},
                            {"output_tokens", outs[i]},
                            {"text", world.detokenize(outs[i])}}
                 .dump()
          << '\n';
    }
    scope::require(out.good(), std::string("write to '") + output_path + "' failed",
                   scope::ErrorCode::kIo);
  });
}

scope_status scope_lab_eval(scope_lab* lab, const char* checkpoint_path, const char* strategy,
                            char** json_out) {
  return guarded("eval", [&] {
    need(lab, "lab");
    need(checkpoint_path, "checkpoint_path");
    const auto s = scope::parse_strategy(strategy ? strategy : "plain");
    const auto model = scope::load_checkpoint(checkpoint_path, lab->lab.config().model);
    const auto& heldout = lab->lab.data().heldout;
    std::vector<scope::SystemOutputs> sys = {{"model", lab->lab.decode_heldout(model, s, heldout)}};
    const auto rep = scope::evaluate_systems(lab->lab.world(), heldout, sys, "model");
    auto j = system_json(rep.systems.front());
    j["strategy"] = scope::to_string(s);
    j["checkpoint"] = checkpoint_path;
    j["num_examples"] = rep.num_examples;
    put_string(json_out, j.dump(2));
  });
}

scope_status scope_lab_report(scope_lab* lab, char** json_out) {
  return guarded("report", [&] {
    need(lab, "lab");
    auto& l = lab->lab;
    const auto report = l.evaluate();
    {
      std::ofstream cfg(l.path("reports/config.json"), std::ios::binary | std::ios::trunc);
      cfg << nlohmann::json(l.config()).dump(2) << '\n';
    }
    scope::emit_report(report, l.path("reports"));
    put_string(json_out, scope::to_json(report).dump(2));
  });
}

scope_status scope_lab_sweep(scope_lab* lab, const char* param, char** json_out) {
  return guarded("sweep", [&] {
    need(lab, "lab");
    need(param, "param");
    auto& l = lab->lab;
    const std::string p = param;
    scope::SweepReport rep;
    if (p == "alpha") {
      rep = scope::alpha_sweep(l, l.config().alpha_grid);
    } else if (p == "beta") {
      rep = scope::beta_sweep(l, l.config().beta_grid);
    } else if (p == "split") {
      rep = scope::split_ablation(l, l.config().split_grid);
    } else {
      scope::fail(scope::ErrorCode::kInvalidArgument, "unknown sweep parameter '" + p + "' (use alpha, beta or split)");
    }
    rep.write(l.path("reports"));
    put_string(json_out, rep.to_json().dump(2));
  });
}

scope_status scope_model_load(const char* path, scope_model** out) {
  return guarded("load", [&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new scope_model{scope::load_checkpoint(path)};
  });
}

void scope_model_free(scope_model* model) { delete model; }

size_t scope_model_num_parameters(const scope_model* model) {
  return model ? model->params.size() : 0;
}

int32_t scope_model_vocab_size(const scope_model* model) {
  return model ? model->params.config().vocab_size : 0;
}

scope_status scope_model_sequence_log_prob(const scope_model* model, const int32_t* context,
                                           size_t context_len, const int32_t* target,
                                           size_t target_len, double* out) {
  return guarded(nullptr, [&] {
    need(model, "model");
    need(out, "out");
    scope::require(context_len == 0 || context != nullptr, "context must not be null");
    scope::require(target_len == 0 || target != nullptr, "target must not be null");
    *out = scope::sequence_log_prob(model->params, std::span<const int32_t>(context, context_len),
                                    std::span<const int32_t>(target, target_len));
  });
}

}  // extern "C"
