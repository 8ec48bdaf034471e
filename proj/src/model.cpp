// Copyright (C) 2026 The scope-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "scope/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace scope {

using nlohmann::json;

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;
constexpr char kCheckpointMagic[8] = {'S', 'C', 'O', 'P', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

using MatMap = Eigen::Map<Matrix>;
using ConstMatMap = Eigen::Map<const Matrix>;
using RowMap = Eigen::Map<Eigen::RowVectorXd>;
using ConstRowMap = Eigen::Map<const Eigen::RowVectorXd>;

ConstMatMap mat(const Parameters& p, std::size_t off, int rows, int cols) {
  return ConstMatMap(p.at(off), rows, cols);
}
MatMap mat(Parameters& p, std::size_t off, int rows, int cols) {
  return MatMap(p.at(off), rows, cols);
}
ConstRowMap vec(const Parameters& p, std::size_t off, int n) { return ConstRowMap(p.at(off), n); }
RowMap vec(Parameters& p, std::size_t off, int n) { return RowMap(p.at(off), n); }

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) {
  const double u = kGeluC * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

// y = xhat * (1 + g) + b over rows of x.
void layer_norm(const Matrix& x, ConstRowMap g, ConstRowMap b, Matrix& y, Matrix& xhat,
                Eigen::VectorXd& rstd) {
  const auto rows = x.rows();
  xhat.resize(rows, x.cols());
  y.resize(rows, x.cols());
  rstd.resize(rows);
  for (Eigen::Index t = 0; t < rows; ++t) {
    const double mean = x.row(t).mean();
    const double var = (x.row(t).array() - mean).square().mean();
    const double r = 1.0 / std::sqrt(var + kLayerNormEps);
    rstd(t) = r;
    xhat.row(t) = (x.row(t).array() - mean) * r;
    y.row(t) = xhat.row(t).array() * (1.0 + g.array()) + b.array();
  }
}

// Returns dx; accumulates dg and db.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, const Eigen::VectorXd& rstd,
                           ConstRowMap g, RowMap dg, RowMap db) {
  dg += (dy.array() * xhat.array()).colwise().sum().matrix();
  db += dy.colwise().sum();
  Matrix dxhat = dy.array().rowwise() * (1.0 + g.array());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index t = 0; t < dy.rows(); ++t) {
    const double m1 = dxhat.row(t).mean();
    const double m2 = (dxhat.row(t).array() * xhat.row(t).array()).mean();
    dx.row(t) = rstd(t) * (dxhat.row(t).array() - m1 - xhat.row(t).array() * m2);
  }
  return dx;
}

void softmax_rows_causal(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j <= i; ++j) m = std::max(m, s(i, j));
    double z = 0.0;
    for (Eigen::Index j = 0; j <= i; ++j) {
      s(i, j) = std::exp(s(i, j) - m);
      z += s(i, j);
    }
    for (Eigen::Index j = 0; j <= i; ++j) s(i, j) /= z;
    for (Eigen::Index j = i + 1; j < s.cols(); ++j) s(i, j) = 0.0;
  }
}

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  require(in.gcount() == static_cast<std::streamsize>(sizeof(T)),
          "checkpoint '" + path + "' is truncated", ErrorCode::kIo);
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

void put_section_header(std::ostream& out, const std::string& name, std::uint64_t payload) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint64_t>(out, payload);
}

}  // namespace

void ModelConfig::validate() const {
  require(vocab_size > 0, "model config: vocab_size must be positive");
  require(d_model > 0 && n_layers > 0 && n_heads > 0 && d_ff > 0 && max_seq_len > 0,
          "model config: all sizes must be positive");
  require(d_model % n_heads == 0, "model config: d_model must be divisible by n_heads");
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model},   {"n_layers", c.n_layers},
           {"n_heads", c.n_heads},       {"d_ff", c.d_ff},         {"max_seq_len", c.max_seq_len},
           {"seed", c.seed}};
}

void from_json(const json& j, ModelConfig& c) {
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.d_model = j.value("d_model", c.d_model);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.seed = j.value("seed", c.seed);
}

std::string to_string(ModelRole role) {
  switch (role) {
    case ModelRole::kPretrained: return "pretrained";
    case ModelRole::kSft: return "sft";
    case ModelRole::kScope: return "scope";
  }
  return "pretrained";
}

ModelRole parse_model_role(const std::string& name) {
  if (name == "pretrained") return ModelRole::kPretrained;
  if (name == "sft") return ModelRole::kSft;
  if (name == "scope") return ModelRole::kScope;
  fail(ErrorCode::kInvalidArgument, "unknown model role '" + name + "'");
}

ParameterLayout::ParameterLayout(const ModelConfig& c) {
  c.validate();
  auto add = [&](std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int s : shape) n *= static_cast<std::size_t>(s);
    tensors.push_back({std::move(name), std::move(shape), total, n});
    total += n;
    return tensors.back().offset;
  };
  const int D = c.d_model, F = c.d_ff;
  wte = add("wte", {c.vocab_size, D});
  wpe = add("wpe", {c.max_seq_len, D});
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    Layer L{};
    L.ln1_g = add(p + "ln1.g", {D});
    L.ln1_b = add(p + "ln1.b", {D});
    L.qkv_w = add(p + "attn.qkv.w", {D, 3 * D});
    L.qkv_b = add(p + "attn.qkv.b", {3 * D});
    L.attn_w = add(p + "attn.proj.w", {D, D});
    L.attn_b = add(p + "attn.proj.b", {D});
    L.ln2_g = add(p + "ln2.g", {D});
    L.ln2_b = add(p + "ln2.b", {D});
    L.fc_w = add(p + "mlp.fc.w", {D, F});
    L.fc_b = add(p + "mlp.fc.b", {F});
    L.proj_w = add(p + "mlp.proj.w", {F, D});
    L.proj_b = add(p + "mlp.proj.b", {D});
    layers.push_back(L);
  }
  lnf_g = add("lnf.g", {D});
  lnf_b = add("lnf.b", {D});
  out_w = add("out.w", {D, c.vocab_size});
}

std::size_t count_parameters(const ModelConfig& config) { return ParameterLayout(config).total; }

Parameters::Parameters(const ModelConfig& config, ModelRole role)
    : config_(config), role_(role), layout_(std::make_shared<const ParameterLayout>(config)) {
  data_.assign(layout_->total, 0.0);
}

const TensorSlot& Parameters::tensor(std::string_view name) const {
  require(layout_ != nullptr, "empty parameter set");
  for (const auto& t : layout_->tensors) {
    if (t.name == name) return t;
  }
  fail(ErrorCode::kInvalidArgument, "unknown tensor '" + std::string(name) + "'");
}

std::span<double> Parameters::tensor_values(std::string_view name) {
  const auto& t = tensor(name);
  return std::span<double>(data_).subspan(t.offset, t.size);
}

std::span<const double> Parameters::tensor_values(std::string_view name) const {
  const auto& t = tensor(name);
  return std::span<const double>(data_).subspan(t.offset, t.size);
}

void Parameters::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

void Parameters::add_scaled(const Parameters& other, double scale) {
  require(other.data_.size() == data_.size(), "add_scaled: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

bool Parameters::all_finite() const { return first_non_finite().empty(); }

std::string Parameters::first_non_finite() const {
  if (!layout_) return {};
  for (const auto& t : layout_->tensors) {
    for (std::size_t i = 0; i < t.size; ++i) {
      if (!std::isfinite(data_[t.offset + i])) return t.name;
    }
  }
  return {};
}

Parameters init_params(const ModelConfig& config) {
  Parameters p(config, ModelRole::kPretrained);
  const auto& L = p.layout();
  Rng rng(hash_name(config.seed, "init"));
  auto fill_normal = [&](std::size_t off, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) *p.at(off + i) = kInitStd * rng.normal();
  };
  const std::size_t D = static_cast<std::size_t>(config.d_model);
  const std::size_t F = static_cast<std::size_t>(config.d_ff);
  fill_normal(L.wte, static_cast<std::size_t>(config.vocab_size) * D);
  fill_normal(L.wpe, static_cast<std::size_t>(config.max_seq_len) * D);
  for (const auto& l : L.layers) {
    fill_normal(l.qkv_w, D * 3 * D);
    fill_normal(l.attn_w, D * D);
    fill_normal(l.fc_w, D * F);
    fill_normal(l.proj_w, F * D);
  }
  fill_normal(L.out_w, D * static_cast<std::size_t>(config.vocab_size));
  return p;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
  return p;
}

void check_tokens(const ModelConfig& config, std::span<const Token> tokens) {
  require(tokens.size() <= static_cast<std::size_t>(config.max_seq_len),
          "sequence of length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
              std::to_string(config.max_seq_len),
          ErrorCode::kLengthOverflow);
  for (Token t : tokens) {
    require(t >= 0 && t < config.vocab_size,
            "token id " + std::to_string(t) + " is outside the vocabulary");
  }
}

void ForwardPass::run(const Parameters& params, std::span<const Token> tokens) {
  const auto& c = params.config();
  const auto& L = params.layout();
  check_tokens(c, tokens);
  require(!tokens.empty(), "forward pass needs at least one token");
  const int T = static_cast<int>(tokens.size());
  const int D = c.d_model, F = c.d_ff, H = c.n_heads, hd = D / H, V = c.vocab_size;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  tokens_.assign(tokens.begin(), tokens.end());

  Matrix x(T, D);
  const auto wte = mat(params, L.wte, V, D);
  const auto wpe = mat(params, L.wpe, c.max_seq_len, D);
  for (int t = 0; t < T; ++t) x.row(t) = wte.row(tokens[t]) + wpe.row(t);

  layers_.resize(static_cast<std::size_t>(c.n_layers));
  for (int l = 0; l < c.n_layers; ++l) {
    const auto& P = L.layers[static_cast<std::size_t>(l)];
    auto& C = layers_[static_cast<std::size_t>(l)];
    C.x_in = x;
    layer_norm(C.x_in, vec(params, P.ln1_g, D), vec(params, P.ln1_b, D), C.h1, C.ln1.xhat,
               C.ln1.rstd);
    C.qkv.noalias() = C.h1 * mat(params, P.qkv_w, D, 3 * D);
    C.qkv.rowwise() += vec(params, P.qkv_b, 3 * D);
    C.att.resize(T, D);
    C.probs.resize(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
      const auto q = C.qkv.middleCols(h * hd, hd);
      const auto k = C.qkv.middleCols(D + h * hd, hd);
      const auto v = C.qkv.middleCols(2 * D + h * hd, hd);
      Matrix& s = C.probs[static_cast<std::size_t>(h)];
      s.noalias() = (q * k.transpose()) * scale;
      softmax_rows_causal(s);
      C.att.middleCols(h * hd, hd).noalias() = s * v;
    }
    C.x_mid = C.x_in;
    C.x_mid.noalias() += C.att * mat(params, P.attn_w, D, D);
    C.x_mid.rowwise() += vec(params, P.attn_b, D);
    layer_norm(C.x_mid, vec(params, P.ln2_g, D), vec(params, P.ln2_b, D), C.h2, C.ln2.xhat,
               C.ln2.rstd);
    C.fc_pre.noalias() = C.h2 * mat(params, P.fc_w, D, F);
    C.fc_pre.rowwise() += vec(params, P.fc_b, F);
    C.fc_act = C.fc_pre.unaryExpr([](double v) { return gelu(v); });
    x = C.x_mid;
    x.noalias() += C.fc_act * mat(params, P.proj_w, F, D);
    x.rowwise() += vec(params, P.proj_b, D);
  }
  x_out_ = std::move(x);
  layer_norm(x_out_, vec(params, L.lnf_g, D), vec(params, L.lnf_b, D), hf_, lnf_.xhat, lnf_.rstd);
  logits_.noalias() = hf_ * mat(params, L.out_w, D, V);
}

void ForwardPass::backward(const Parameters& params, const Matrix& dlogits, Parameters& grad) {
  const auto& c = params.config();
  const auto& L = params.layout();
  const int T = static_cast<int>(tokens_.size());
  const int D = c.d_model, F = c.d_ff, H = c.n_heads, hd = D / H, V = c.vocab_size;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  require(dlogits.rows() == T && dlogits.cols() == V, "backward: dlogits shape mismatch");
  require(grad.size() == params.size(), "backward: gradient shape mismatch");

  mat(grad, L.out_w, D, V).noalias() += hf_.transpose() * dlogits;
  Matrix dhf = dlogits * mat(params, L.out_w, D, V).transpose();
  Matrix dx = layer_norm_backward(dhf, lnf_.xhat, lnf_.rstd, vec(params, L.lnf_g, D),
                                  vec(grad, L.lnf_g, D), vec(grad, L.lnf_b, D));

  for (int l = c.n_layers - 1; l >= 0; --l) {
    const auto& P = L.layers[static_cast<std::size_t>(l)];
    const auto& C = layers_[static_cast<std::size_t>(l)];

    // MLP block.
    mat(grad, P.proj_w, F, D).noalias() += C.fc_act.transpose() * dx;
    vec(grad, P.proj_b, D) += dx.colwise().sum();
    Matrix dfc = dx * mat(params, P.proj_w, F, D).transpose();
    for (Eigen::Index i = 0; i < dfc.size(); ++i) dfc.data()[i] *= gelu_grad(C.fc_pre.data()[i]);
    mat(grad, P.fc_w, D, F).noalias() += C.h2.transpose() * dfc;
    vec(grad, P.fc_b, F) += dfc.colwise().sum();
    Matrix dh2 = dfc * mat(params, P.fc_w, D, F).transpose();
    dx += layer_norm_backward(dh2, C.ln2.xhat, C.ln2.rstd, vec(params, P.ln2_g, D),
                              vec(grad, P.ln2_g, D), vec(grad, P.ln2_b, D));

    // Attention block.
    mat(grad, P.attn_w, D, D).noalias() += C.att.transpose() * dx;
    vec(grad, P.attn_b, D) += dx.colwise().sum();
    Matrix datt = dx * mat(params, P.attn_w, D, D).transpose();
    Matrix dqkv(T, 3 * D);
    for (int h = 0; h < H; ++h) {
      const Matrix& p = C.probs[static_cast<std::size_t>(h)];
      const auto q = C.qkv.middleCols(h * hd, hd);
      const auto k = C.qkv.middleCols(D + h * hd, hd);
      const auto v = C.qkv.middleCols(2 * D + h * hd, hd);
      const auto dout = datt.middleCols(h * hd, hd);
      Matrix dp = dout * v.transpose();
      dqkv.middleCols(2 * D + h * hd, hd).noalias() = p.transpose() * dout;
      const Eigen::VectorXd rowdot = (dp.array() * p.array()).rowwise().sum();
      Matrix ds = p.array() * (dp.colwise() - rowdot).array();
      dqkv.middleCols(h * hd, hd).noalias() = (ds * k) * scale;
      dqkv.middleCols(D + h * hd, hd).noalias() = (ds.transpose() * q) * scale;
    }
    mat(grad, P.qkv_w, D, 3 * D).noalias() += C.h1.transpose() * dqkv;
    vec(grad, P.qkv_b, 3 * D) += dqkv.colwise().sum();
    Matrix dh1 = dqkv * mat(params, P.qkv_w, D, 3 * D).transpose();
    dx += layer_norm_backward(dh1, C.ln1.xhat, C.ln1.rstd, vec(params, P.ln1_g, D),
                              vec(grad, P.ln1_g, D), vec(grad, P.ln1_b, D));
  }

  auto dwte = mat(grad, L.wte, V, D);
  auto dwpe = mat(grad, L.wpe, c.max_seq_len, D);
  for (int t = 0; t < T; ++t) {
    dwte.row(tokens_[static_cast<std::size_t>(t)]) += dx.row(t);
    dwpe.row(t) += dx.row(t);
  }
}

DecodeState::DecodeState(const Parameters& params) : params_(&params) {
  const auto& c = params.config();
  keys_.assign(static_cast<std::size_t>(c.n_layers), Matrix(c.max_seq_len, c.d_model));
  values_.assign(static_cast<std::size_t>(c.n_layers), Matrix(c.max_seq_len, c.d_model));
  logits_.resize(static_cast<std::size_t>(c.vocab_size));
}

std::span<const double> DecodeState::push(Token token) {
  const auto& p = *params_;
  const auto& c = p.config();
  const auto& L = p.layout();
  require(length_ < static_cast<std::size_t>(c.max_seq_len),
          "decode state exceeds max_seq_len " + std::to_string(c.max_seq_len),
          ErrorCode::kLengthOverflow);
  require(token >= 0 && token < c.vocab_size,
          "token id " + std::to_string(token) + " is outside the vocabulary");
  const int D = c.d_model, F = c.d_ff, H = c.n_heads, hd = D / H, V = c.vocab_size;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const auto pos = static_cast<Eigen::Index>(length_);
  const auto n = pos + 1;

  Matrix x = mat(p, L.wte, V, D).row(token) + mat(p, L.wpe, c.max_seq_len, D).row(pos);
  Matrix h, xhat, att(1, D), qkv, fc;
  Eigen::VectorXd rstd;
  for (int l = 0; l < c.n_layers; ++l) {
    const auto& P = L.layers[static_cast<std::size_t>(l)];
    auto& K = keys_[static_cast<std::size_t>(l)];
    auto& Vc = values_[static_cast<std::size_t>(l)];
    layer_norm(x, vec(p, P.ln1_g, D), vec(p, P.ln1_b, D), h, xhat, rstd);
    qkv.noalias() = h * mat(p, P.qkv_w, D, 3 * D);
    qkv.rowwise() += vec(p, P.qkv_b, 3 * D);
    K.row(pos) = qkv.middleCols(D, D);
    Vc.row(pos) = qkv.middleCols(2 * D, D);
    for (int hh = 0; hh < H; ++hh) {
      const auto q = qkv.middleCols(hh * hd, hd);
      Eigen::RowVectorXd s = (q * K.block(0, hh * hd, n, hd).transpose()) * scale;
      const double m = s.maxCoeff();
      s = (s.array() - m).exp();
      s /= s.sum();
      att.middleCols(hh * hd, hd).noalias() = s * Vc.block(0, hh * hd, n, hd);
    }
    x.noalias() += att * mat(p, P.attn_w, D, D);
    x += vec(p, P.attn_b, D);
    layer_norm(x, vec(p, P.ln2_g, D), vec(p, P.ln2_b, D), h, xhat, rstd);
    fc.noalias() = h * mat(p, P.fc_w, D, F);
    fc += vec(p, P.fc_b, F);
    fc = fc.unaryExpr([](double v) { return gelu(v); });
    x.noalias() += fc * mat(p, P.proj_w, F, D);
    x += vec(p, P.proj_b, D);
  }
  layer_norm(x, vec(p, L.lnf_g, D), vec(p, L.lnf_b, D), h, xhat, rstd);
  Eigen::Map<Eigen::RowVectorXd>(logits_.data(), V).noalias() = h * mat(p, L.out_w, D, V);
  ++length_;
  return logits_;
}

TokenDistribution next_token_distribution(const Parameters& params, std::span<const Token> prefix) {
  require(!prefix.empty(), "next_token_distribution: empty prefix");
  ForwardPass fp;
  fp.run(params, prefix);
  const auto& lg = fp.logits();
  const auto last = lg.row(lg.rows() - 1);
  return {softmax(std::span<const double>(last.data(), static_cast<std::size_t>(last.size())))};
}

std::vector<double> target_log_probs(const Parameters& params, std::span<const Token> context,
                                     std::span<const Token> target) {
  if (target.empty()) return {};
  require(!context.empty(), "target_log_probs: empty context");
  require(context.size() + target.size() <= static_cast<std::size_t>(params.config().max_seq_len),
          "context plus target exceed max_seq_len", ErrorCode::kLengthOverflow);
  TokenSeq input(context.begin(), context.end());
  input.insert(input.end(), target.begin(), target.end() - 1);
  ForwardPass fp;
  fp.run(params, input);
  const auto& lg = fp.logits();
  std::vector<double> out(target.size());
  const std::size_t c = context.size();
  for (std::size_t j = 0; j < target.size(); ++j) {
    const auto row = lg.row(static_cast<Eigen::Index>(c - 1 + j));
    const double lse = log_sum_exp(
        std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    require(target[j] >= 0 && target[j] < params.config().vocab_size,
            "target token outside the vocabulary");
    out[j] = row(target[j]) - lse;
  }
  return out;
}

double sequence_log_prob(const Parameters& params, std::span<const Token> context,
                         std::span<const Token> target) {
  double s = 0.0;
  for (double v : target_log_probs(params, context, target)) s += v;
  return s;
}

void save_checkpoint(const Parameters& params, const std::string& path) {
  require(!params.empty(), "cannot save an empty parameter set");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot open '" + path + "' for writing", ErrorCode::kIo);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  const auto& tensors = params.layout().tensors;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size() + 1));

  json header{{"config", params.config()}, {"role", to_string(params.role())}};
  const std::string h = header.dump();
  put_section_header(out, "header", h.size());
  out.write(h.data(), static_cast<std::streamsize>(h.size()));

  for (const auto& t : tensors) {
    put_section_header(out, t.name, 4 + 8 * t.shape.size() + 8 * t.size);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (std::size_t i = 0; i < t.size; ++i) put<double>(out, *params.at(t.offset + i));
  }
  require(out.good(), "write to '" + path + "' failed", ErrorCode::kIo);
}

Parameters load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open checkpoint '" + path + "'", ErrorCode::kIo);
  char magic[8];
  in.read(magic, sizeof(magic));
  require(in.gcount() == 8 && std::memcmp(magic, kCheckpointMagic, 8) == 0,
          "'" + path + "' is not a checkpoint", ErrorCode::kIo);
  require(get<std::uint32_t>(in, path) == kCheckpointVersion,
          "unsupported checkpoint version in '" + path + "'", ErrorCode::kIo);
  const auto n_sections = get<std::uint32_t>(in, path);

  auto read_name = [&]() {
    const auto len = get<std::uint32_t>(in, path);
    require(len < 4096, "corrupt section name in '" + path + "'", ErrorCode::kIo);
    std::string name(len, '\0');
    in.read(name.data(), len);
    require(in.gcount() == static_cast<std::streamsize>(len),
            "checkpoint '" + path + "' is truncated", ErrorCode::kIo);
    return name;
  };

  require(n_sections >= 1 && read_name() == "header",
          "checkpoint '" + path + "' lacks a header", ErrorCode::kIo);
  const auto hlen = get<std::uint64_t>(in, path);
  require(hlen < (1u << 20), "corrupt header in '" + path + "'", ErrorCode::kIo);
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  json header;
  try {
    header = json::parse(htext);
  } catch (const json::exception& e) {
    fail(ErrorCode::kIo, "corrupt header in '" + path + "': " + e.what());
  }
  const auto config = header.at("config").get<ModelConfig>();
  Parameters p(config, parse_model_role(header.at("role").get<std::string>()));
  const auto& tensors = p.layout().tensors;
  require(n_sections == tensors.size() + 1,
          "checkpoint '" + path + "' has an unexpected tensor count", ErrorCode::kConfigMismatch);

  for (const auto& t : tensors) {
    require(read_name() == t.name, "checkpoint '" + path + "' tensor order mismatch at " + t.name,
            ErrorCode::kConfigMismatch);
    const auto payload = get<std::uint64_t>(in, path);
    const auto ndim = get<std::uint32_t>(in, path);
    require(ndim == t.shape.size() && payload == 4 + 8 * ndim + 8 * t.size,
            "tensor '" + t.name + "' has the wrong rank", ErrorCode::kConfigMismatch);
    for (int d : t.shape) {
      require(get<std::uint64_t>(in, path) == static_cast<std::uint64_t>(d),
              "tensor '" + t.name + "' has the wrong shape", ErrorCode::kConfigMismatch);
    }
    for (std::size_t i = 0; i < t.size; ++i) *p.at(t.offset + i) = get<double>(in, path);
  }
  return p;
}

Parameters load_checkpoint(const std::string& path, const ModelConfig& expected) {
  Parameters p = load_checkpoint(path);
  ModelConfig got = p.config();
  got.seed = expected.seed;
  require(got == expected,
          "checkpoint '" + path + "' config " + json(p.config()).dump() +
              " does not match the expected " + json(expected).dump(),
          ErrorCode::kConfigMismatch);
  return p;
}

}  // namespace scope
