// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "scope/common.hpp"

namespace scope {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 256;
  int max_seq_len = 64;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// pretrained = p_LM, sft = the supervised reference, scope = the
// preference-tuned policy.
enum class ModelRole { kPretrained, kSft, kScope };
std::string to_string(ModelRole role);
ModelRole parse_model_role(const std::string& name);

struct TensorSlot {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Offsets of every tensor inside the flat parameter buffer.
struct ParameterLayout {
  struct Layer {
    std::size_t ln1_g, ln1_b, qkv_w, qkv_b, attn_w, attn_b;
    std::size_t ln2_g, ln2_b, fc_w, fc_b, proj_w, proj_b;
  };
  std::size_t wte = 0, wpe = 0, lnf_g = 0, lnf_b = 0, out_w = 0;
  std::vector<Layer> layers;
  std::vector<TensorSlot> tensors;
  std::size_t total = 0;

  explicit ParameterLayout(const ModelConfig& c);
};

std::size_t count_parameters(const ModelConfig& config);

// All weights of one model in a single contiguous float64 buffer. Layer-norm
// gains are stored as offsets from 1, so a freshly initialized model has
// every stored value near zero. Gradients and optimizer moments use the same
// type.
class Parameters {
 public:
  Parameters() = default;
  explicit Parameters(const ModelConfig& config, ModelRole role = ModelRole::kPretrained);

  const ModelConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return *layout_; }
  ModelRole role() const { return role_; }
  void set_role(ModelRole role) { role_ = role; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  const TensorSlot& tensor(std::string_view name) const;
  std::span<double> tensor_values(std::string_view name);
  std::span<const double> tensor_values(std::string_view name) const;

  double* at(std::size_t offset) { return data_.data() + offset; }
  const double* at(std::size_t offset) const { return data_.data() + offset; }

  void set_zero();
  // this += scale * other
  void add_scaled(const Parameters& other, double scale);
  bool all_finite() const;
  // Name of the first tensor holding a non-finite value, empty if none.
  std::string first_non_finite() const;

  friend bool operator==(const Parameters& a, const Parameters& b) {
    return a.config_ == b.config_ && a.role_ == b.role_ && a.data_ == b.data_;
  }

 private:
  ModelConfig config_;
  ModelRole role_ = ModelRole::kPretrained;
  std::shared_ptr<const ParameterLayout> layout_;
  std::vector<double> data_;
};

// Scaled-normal initialization (std 0.02) of every weight matrix; biases and
// layer-norm offsets start at zero.
Parameters init_params(const ModelConfig& config);

struct TokenDistribution {
  std::vector<double> probs;
};

std::vector<double> softmax(std::span<const double> logits);

// Full-sequence forward pass that keeps the activations needed by backward.
class ForwardPass {
 public:
  void run(const Parameters& params, std::span<const Token> tokens);
  // Logits for every position, shape [T, vocab].
  const Matrix& logits() const { return logits_; }
  std::size_t length() const { return tokens_.size(); }

  // Accumulates d(loss)/d(params) into grad given d(loss)/d(logits).
  void backward(const Parameters& params, const Matrix& dlogits, Parameters& grad);

 private:
  struct Norm {
    Matrix xhat;
    Eigen::VectorXd rstd;
  };
  struct LayerCache {
    Matrix x_in, h1, qkv, att, x_mid, h2, fc_pre, fc_act;
    Norm ln1, ln2;
    std::vector<Matrix> probs;  // per head, [T, T]
  };

  TokenSeq tokens_;
  std::vector<LayerCache> layers_;
  Matrix x_out_, hf_, logits_;
  Norm lnf_;
};

// Incremental decoding with a key/value cache. Feeding tokens one at a time
// yields the same next-token logits as a full forward over the prefix.
class DecodeState {
 public:
  explicit DecodeState(const Parameters& params);

  // Appends a token and returns the logits for the next position.
  std::span<const double> push(Token token);
  std::size_t length() const { return length_; }
  const Parameters& params() const { return *params_; }

 private:
  const Parameters* params_;
  std::size_t length_ = 0;
  std::vector<Matrix> keys_, values_;  // per layer, [max_seq_len, d_model]
  std::vector<double> logits_;
};

void check_tokens(const ModelConfig& config, std::span<const Token> tokens);

TokenDistribution next_token_distribution(const Parameters& params,
                                          std::span<const Token> prefix);

// log p(target | context) in nats.
double sequence_log_prob(const Parameters& params, std::span<const Token> context,
                         std::span<const Token> target);

// Per-token log-probabilities of `target` after `context`.
std::vector<double> target_log_probs(const Parameters& params,
                                     std::span<const Token> context,
                                     std::span<const Token> target);

void save_checkpoint(const Parameters& params, const std::string& path);
Parameters load_checkpoint(const std::string& path);
// Fails with kConfigMismatch unless the stored config equals `expected`
// (the seed field is ignored).
Parameters load_checkpoint(const std::string& path, const ModelConfig& expected);

}  // namespace scope
