// SPDX-License-Identifier: Apache-2.0
#include "vlg/text/transformer.hpp"

#include <cmath>

#include "vlg/errors.hpp"
#include "vlg/numerics/adam.hpp"
#include "vlg/numerics/ops.hpp"
#include "vlg/numerics/random.hpp"
#include "vlg/numerics/tape.hpp"

namespace vlg::text {

using num::Real;
using num::Shape;
using num::Tensor;

void LMConfig::validate() const {
  if (layers == 0 || heads == 0 || d_model == 0 || ffn_dim == 0 || max_len == 0) {
    throw ConfigError("LMConfig: sizes must be positive");
  }
  if (d_model % heads != 0) {
    throw ConfigError("LMConfig: d_model " + std::to_string(d_model) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (hidden_dim != d_model) {
    throw ConfigError("LMConfig: hidden_dim must equal d_model for a tied transformer");
  }
  if (vocab_size < 6) throw ConfigError("LMConfig: vocab_size " + std::to_string(vocab_size) + " too small");
}

void to_json(nlohmann::json& j, const LMConfig& c) {
  j = nlohmann::json{{"layers", c.layers},     {"heads", c.heads},           {"d_model", c.d_model},
                     {"hidden_dim", c.hidden_dim}, {"ffn_dim", c.ffn_dim},   {"vocab_size", c.vocab_size},
                     {"max_len", c.max_len},   {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, LMConfig& c) {
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.d_model = j.value("d_model", c.d_model);
  c.hidden_dim = j.value("hidden_dim", c.d_model);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_len = j.value("max_len", c.max_len);
  c.seed = j.value("seed", c.seed);
}

void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = nlohmann::json{{"steps", c.steps},       {"batch_size", c.batch_size},     {"window", c.window},
                     {"lr", c.lr},             {"warmup_steps", c.warmup_steps}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PretrainConfig& c) {
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.window = j.value("window", c.window);
  c.lr = j.value("lr", c.lr);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.seed = j.value("seed", c.seed);
}

TransformerLM::TransformerLM(const LMConfig& config) : config_(config) {
  config_.validate();
  num::Rng rng(config_.seed);
  const std::size_t d = config_.d_model, f = config_.ffn_dim;
  const Real proj_std = 0.02 / std::sqrt(2.0 * static_cast<Real>(config_.layers));
  tok_emb_ = num::normal_tensor(Shape{config_.vocab_size - 1, d}, rng, 0.02);
  pos_emb_ = num::normal_tensor(Shape{config_.max_len, d}, rng, 0.02);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    Layer layer;
    layer.ln1_gain = Tensor::filled(Shape{d}, 1.0);
    layer.ln1_bias = Tensor(Shape{d});
    layer.w_q = num::normal_tensor(Shape{d, d}, rng, 0.02);
    layer.b_q = Tensor(Shape{d});
    layer.w_k = num::normal_tensor(Shape{d, d}, rng, 0.02);
    layer.b_k = Tensor(Shape{d});
    layer.w_v = num::normal_tensor(Shape{d, d}, rng, 0.02);
    layer.b_v = Tensor(Shape{d});
    layer.w_o = num::normal_tensor(Shape{d, d}, rng, proj_std);
    layer.b_o = Tensor(Shape{d});
    layer.ln2_gain = Tensor::filled(Shape{d}, 1.0);
    layer.ln2_bias = Tensor(Shape{d});
    layer.w_fc1 = num::normal_tensor(Shape{d, f}, rng, 0.02);
    layer.b_fc1 = Tensor(Shape{f});
    layer.w_fc2 = num::normal_tensor(Shape{f, d}, rng, proj_std);
    layer.b_fc2 = Tensor(Shape{d});
    layers_.push_back(std::move(layer));
  }
  lnf_gain_ = Tensor::filled(Shape{d}, 1.0);
  lnf_bias_ = Tensor(Shape{d});
  index_parameters();
}

void TransformerLM::index_parameters() {
  params_.clear();
  params_.push_back({"tok_emb", tok_emb_});
  params_.push_back({"pos_emb", pos_emb_});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    auto& L = layers_[l];
    params_.push_back({p + "ln1.gain", L.ln1_gain});
    params_.push_back({p + "ln1.bias", L.ln1_bias});
    params_.push_back({p + "attn.w_q", L.w_q});
    params_.push_back({p + "attn.b_q", L.b_q});
    params_.push_back({p + "attn.w_k", L.w_k});
    params_.push_back({p + "attn.b_k", L.b_k});
    params_.push_back({p + "attn.w_v", L.w_v});
    params_.push_back({p + "attn.b_v", L.b_v});
    params_.push_back({p + "attn.w_o", L.w_o});
    params_.push_back({p + "attn.b_o", L.b_o});
    params_.push_back({p + "ln2.gain", L.ln2_gain});
    params_.push_back({p + "ln2.bias", L.ln2_bias});
    params_.push_back({p + "ffn.w_fc1", L.w_fc1});
    params_.push_back({p + "ffn.b_fc1", L.b_fc1});
    params_.push_back({p + "ffn.w_fc2", L.w_fc2});
    params_.push_back({p + "ffn.b_fc2", L.b_fc2});
  }
  params_.push_back({"ln_f.gain", lnf_gain_});
  params_.push_back({"ln_f.bias", lnf_bias_});
}

TransformerLM TransformerLM::clone() const {
  TransformerLM copy;
  copy.config_ = config_;
  auto dup = [](const Tensor& t) {
    Tensor c = t.clone();
    if (t.requires_grad()) c.set_requires_grad(true);
    return c;
  };
  copy.tok_emb_ = dup(tok_emb_);
  copy.pos_emb_ = dup(pos_emb_);
  for (const auto& L : layers_) {
    copy.layers_.push_back(Layer{dup(L.ln1_gain), dup(L.ln1_bias), dup(L.w_q), dup(L.b_q), dup(L.w_k),
                                 dup(L.b_k), dup(L.w_v), dup(L.b_v), dup(L.w_o), dup(L.b_o), dup(L.ln2_gain),
                                 dup(L.ln2_bias), dup(L.w_fc1), dup(L.b_fc1), dup(L.w_fc2), dup(L.b_fc2)});
  }
  copy.lnf_gain_ = dup(lnf_gain_);
  copy.lnf_bias_ = dup(lnf_bias_);
  copy.index_parameters();
  return copy;
}

Tensor& TransformerLM::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ContractError("language model has no parameter '" + name + "'");
}

void TransformerLM::set_trainable(bool on) {
  for (auto& p : params_) p.tensor.set_requires_grad(on);
}

std::string TransformerLM::digest() const { return num::digest(params_); }

Tensor TransformerLM::token_table(const Tensor& ret_row) const {
  const std::size_t d = config_.d_model;
  if (ret_row.numel() != d) {
    throw DimensionError("[RET] row has " + std::to_string(ret_row.numel()) + " entries, expected " +
                         std::to_string(d));
  }
  const Tensor parts[] = {tok_emb_, num::reshape(ret_row, Shape{1, d})};
  return num::concat_rows(parts);
}

Tensor TransformerLM::embed(std::span<const TokenId> ids, const Tensor& ret_row) const {
  // Gathering from the base table alone keeps [RET]-free sequences off the
  // [RET] row's gradient path.
  bool has_ret = false;
  const auto ret_id = static_cast<TokenId>(config_.vocab_size - 1);
  for (auto id : ids) has_ret = has_ret || id == ret_id;
  if (!has_ret) return num::gather_rows(tok_emb_, ids);
  return num::gather_rows(token_table(ret_row), ids);
}

Tensor TransformerLM::embed(std::span<const TokenId> ids) const { return embed(ids, default_ret_row()); }

Tensor TransformerLM::default_ret_row() const {
  const std::size_t rows = tok_emb_.dim(0), d = tok_emb_.dim(1);
  Tensor out(Shape{d});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += tok_emb_[i * d + j];
  for (auto& x : out.data()) x /= static_cast<Real>(rows);
  return out;
}

LMOutput TransformerLM::forward(const Tensor& inputs, const Tensor& ret_row, bool with_logits) const {
  const std::size_t d = config_.d_model;
  if (inputs.rank() != 2 || inputs.dim(1) != d) {
    throw DimensionError("lm forward: inputs " + num::shape_str(inputs.shape()) + " must be T×" + std::to_string(d));
  }
  const std::size_t t_len = inputs.dim(0);
  if (t_len > config_.max_len) {
    throw ContractError("lm forward: sequence of " + std::to_string(t_len) + " positions exceeds max length " +
                        std::to_string(config_.max_len));
  }
  Tensor x = num::add(inputs, num::slice_rows(pos_emb_, 0, t_len));
  for (const auto& L : layers_) {
    Tensor h = num::layer_norm(x, L.ln1_gain, L.ln1_bias);
    Tensor q = num::add_bias(num::matmul(h, L.w_q), L.b_q);
    Tensor k = num::add_bias(num::matmul(h, L.w_k), L.b_k);
    Tensor v = num::add_bias(num::matmul(h, L.w_v), L.b_v);
    Tensor a = num::causal_attention(q, k, v, config_.heads);
    x = num::add(x, num::add_bias(num::matmul(a, L.w_o), L.b_o));
    Tensor h2 = num::layer_norm(x, L.ln2_gain, L.ln2_bias);
    Tensor f = num::gelu(num::add_bias(num::matmul(h2, L.w_fc1), L.b_fc1));
    x = num::add(x, num::add_bias(num::matmul(f, L.w_fc2), L.b_fc2));
  }
  LMOutput out;
  out.hidden = num::layer_norm(x, lnf_gain_, lnf_bias_);
  if (with_logits) out.logits = num::matmul_nt(out.hidden, token_table(ret_row));
  return out;
}

LMOutput TransformerLM::forward(const Tensor& inputs) const { return forward(inputs, default_ret_row()); }

num::TensorArchive TransformerLM::to_archive(const Vocabulary& vocab) const {
  num::TensorArchive archive;
  archive.header["kind"] = "lm";
  archive.header["format_version"] = 1;
  archive.header["config"] = config_;
  archive.header["vocab"] = vocab.tokens();
  archive.header["frozen_hash"] = digest();
  for (const auto& p : params_) archive.tensors.push_back({p.name, p.tensor.clone()});
  return archive;
}

TransformerLM TransformerLM::from_archive(const num::TensorArchive& archive) {
  if (archive.header.value("kind", "") != "lm") throw FormatError("archive does not hold a language model");
  TransformerLM lm(archive.header.at("config").get<LMConfig>());
  for (auto& p : lm.params_) {
    const Tensor& stored = archive.get(p.name);
    if (stored.shape() != p.tensor.shape()) {
      throw FormatError("lm tensor '" + p.name + "' has shape " + num::shape_str(stored.shape()) + ", expected " +
                        num::shape_str(p.tensor.shape()));
    }
    std::copy(stored.data().begin(), stored.data().end(), p.tensor.data().begin());
  }
  if (archive.header.contains("frozen_hash") && archive.header["frozen_hash"] != lm.digest()) {
    throw FormatError("lm weights do not match the recorded frozen hash");
  }
  return lm;
}

void save_lm(const std::filesystem::path& path, const TransformerLM& lm, const Vocabulary& vocab) {
  lm.to_archive(vocab).save(path);
}

LoadedLM load_lm(const std::filesystem::path& path) {
  auto archive = num::TensorArchive::load(path);
  auto vocab = Vocabulary::from_tokens(archive.header.at("vocab").get<std::vector<std::string>>());
  auto lm = TransformerLM::from_archive(archive);
  if (lm.config().vocab_size != vocab.size()) throw FormatError("lm vocabulary size disagrees with its config");
  return LoadedLM{std::move(vocab), std::move(lm)};
}

Tensor log_likelihood(const TransformerLM& lm, std::span<const TokenId> ids, const Tensor& prefix,
                      const Tensor& ret_row) {
  if (ids.empty()) throw ContractError("log_likelihood: empty token sequence");
  const Tensor ret = ret_row.valid() ? ret_row : lm.default_ret_row();
  std::vector<Tensor> parts;
  std::size_t lead = 1;
  if (prefix.valid()) {
    parts.push_back(prefix);
    lead = prefix.dim(0);
  } else {
    const TokenId bos = 1;
    parts.push_back(lm.embed(std::span<const TokenId>(&bos, 1), ret));
  }
  parts.push_back(lm.embed(ids, ret));
  auto out = lm.forward(num::concat_rows(parts), ret);
  const std::size_t t_len = ids.size();
  Tensor logits = num::slice_rows(out.logits, lead - 1, t_len);
  const std::vector<bool> mask(t_len, true);
  return num::scale(num::cross_entropy(logits, ids, mask), -static_cast<Real>(t_len));
}

Tensor last_hidden_at(const TransformerLM& lm, const Tensor& inputs, std::size_t position, const Tensor& ret_row) {
  if (inputs.rank() != 2 || position >= inputs.dim(0)) {
    throw ContractError("last_hidden_at: position " + std::to_string(position) + " outside sequence of shape " +
                        num::shape_str(inputs.shape()));
  }
  const Tensor ret = ret_row.valid() ? ret_row : lm.default_ret_row();
  auto out = lm.forward(inputs, ret, false);
  return num::row(out.hidden, position);
}

TransformerLM pretrain_lm(std::span<const std::string> corpus, const Vocabulary& vocab, const LMConfig& config,
                          const PretrainConfig& pretrain) {
  if (corpus.empty()) throw ContractError("pretrain_lm: empty corpus");
  if (config.vocab_size != vocab.size()) {
    throw ConfigError("pretrain_lm: config vocab_size " + std::to_string(config.vocab_size) +
                      " differs from vocabulary size " + std::to_string(vocab.size()));
  }
  TransformerLM lm(config);
  if (pretrain.steps == 0) return lm;

  std::vector<TokenId> stream;
  std::vector<std::size_t> starts;
  for (const auto& line : corpus) {
    auto ids = vocab.tokenize(line);
    if (ids.empty()) continue;
    starts.push_back(stream.size());
    stream.insert(stream.end(), ids.begin(), ids.end());
    stream.push_back(vocab.eos());
  }
  if (starts.empty()) throw ContractError("pretrain_lm: corpus has no tokens");
  const std::size_t window = std::min(pretrain.window, config.max_len);

  lm.set_trainable(true);
  std::vector<Tensor> params;
  for (const auto& p : lm.parameters()) params.push_back(p.tensor);
  num::AdamConfig adam_cfg;
  adam_cfg.lr = pretrain.lr;
  adam_cfg.warmup_steps = pretrain.warmup_steps;
  auto adam = num::make_adam_state(adam_cfg, params);
  num::Rng rng(pretrain.seed);

  for (std::size_t step = 0; step < pretrain.steps; ++step) {
    for (auto& p : params) p.zero_grad();
    num::Tape tape;
    {
      num::TapeScope scope(tape);
      Tensor ret = lm.default_ret_row();
      std::vector<Tensor> losses;
      for (std::size_t b = 0; b < pretrain.batch_size; ++b) {
        const std::size_t s = starts[rng.below(starts.size())];
        const std::size_t len = std::min(window, stream.size() - s);
        std::vector<TokenId> inputs{vocab.bos()};
        inputs.insert(inputs.end(), stream.begin() + static_cast<std::ptrdiff_t>(s),
                      stream.begin() + static_cast<std::ptrdiff_t>(s + len - 1));
        std::span<const TokenId> targets(stream.data() + s, len);
        auto out = lm.forward(lm.embed(inputs, ret), ret);
        losses.push_back(num::cross_entropy(out.logits, targets, std::vector<bool>(len, true)));
      }
      Tensor total = losses[0];
      for (std::size_t i = 1; i < losses.size(); ++i) total = num::add(total, losses[i]);
      total = num::scale(total, 1.0 / static_cast<Real>(losses.size()));
      if (!std::isfinite(total.item())) throw NumericError("pretrain_lm: non-finite loss at step " + std::to_string(step));
      num::backward(tape, total);
    }
    num::adam_step(adam, params);
  }
  lm.set_trainable(false);
  return lm;
}

}  // namespace vlg::text
