// SPDX-License-Identifier: Apache-2.0
#include "vlg/grounding/adapters.hpp"

#include <algorithm>
#include <cmath>

#include "vlg/errors.hpp"
#include "vlg/numerics/ops.hpp"
#include "vlg/numerics/random.hpp"

namespace vlg::ground {

using num::Real;
using num::Shape;
using num::Tensor;

void AdapterConfig::validate() const {
  if (k == 0 || q == 0 || m == 0 || d == 0) throw ConfigError("AdapterConfig: sizes must be positive");
  if (!(tau_init >= kMinTau && tau_init <= kMaxTau)) {
    throw ConfigError("AdapterConfig: tau_init " + std::to_string(tau_init) + " outside [0.01, 100]");
  }
}

void to_json(nlohmann::json& j, const AdapterConfig& c) {
  j = nlohmann::json{{"k", c.k}, {"q", c.q}, {"m", c.m}, {"d", c.d}, {"tau_init", c.tau_init}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, AdapterConfig& c) {
  c.k = j.value("k", c.k);
  c.q = j.value("q", c.q);
  c.m = j.value("m", c.m);
  c.d = j.value("d", c.d);
  c.tau_init = j.value("tau_init", c.tau_init);
  c.seed = j.value("seed", c.seed);
}

GroundingAdapters GroundingAdapters::init(const AdapterConfig& config, const text::TransformerLM& lm) {
  config.validate();
  if (lm.config().d_model != config.d) {
    throw ConfigError("adapter width d=" + std::to_string(config.d) + " differs from LM width " +
                      std::to_string(lm.config().d_model));
  }
  num::Rng rng(config.seed);
  const Real sm = 1.0 / std::sqrt(static_cast<Real>(config.m));
  const Real sd = 1.0 / std::sqrt(static_cast<Real>(config.d));
  GroundingAdapters a;
  a.config = config;
  a.w_c = num::uniform_tensor(Shape{config.m, config.k * config.d}, rng, -sm, sm);
  a.w_t = num::uniform_tensor(Shape{config.d, config.q}, rng, -sd, sd);
  a.w_i = num::uniform_tensor(Shape{config.m, config.q}, rng, -sm, sm);
  a.ret_embedding = lm.default_ret_row();
  a.log_tau = Tensor::scalar(std::log(config.tau_init));
  return a;
}

GroundingAdapters GroundingAdapters::clone() const {
  GroundingAdapters a;
  a.config = config;
  a.w_c = w_c.clone();
  a.w_t = w_t.clone();
  a.w_i = w_i.clone();
  a.ret_embedding = ret_embedding.clone();
  a.log_tau = log_tau.clone();
  a.set_trainable(w_c.requires_grad());
  return a;
}

double GroundingAdapters::tau() const { return std::exp(log_tau.item()); }

void GroundingAdapters::clamp_tau() {
  log_tau[0] = std::clamp(log_tau[0], std::log(kMinTau), std::log(kMaxTau));
}

void GroundingAdapters::set_trainable(bool on) {
  for (auto& t : tensors()) t.set_requires_grad(on);
}

std::vector<num::NamedTensor> GroundingAdapters::named() const {
  return {{"W_c", w_c}, {"W_t", w_t}, {"W_i", w_i}, {"ret_embedding", ret_embedding}, {"log_tau", log_tau}};
}

std::vector<Tensor> GroundingAdapters::tensors() const { return {w_c, w_t, w_i, ret_embedding, log_tau}; }

Tensor map_image_to_prefix(const GroundingAdapters& adapters, const Tensor& v) {
  const auto& c = adapters.config;
  if (v.numel() != c.m) {
    throw ContractError("image embedding has dimension " + std::to_string(v.numel()) + ", W_c expects " +
                        std::to_string(c.m));
  }
  return num::reshape(num::matmul(num::reshape(v, Shape{1, c.m}), adapters.w_c), Shape{c.k, c.d});
}

Tensor embed_sequence(const text::TransformerLM& lm, const GroundingAdapters& adapters, const MixedSequence& seq,
                      const ImageLookup& images) {
  if (seq.tokens.empty()) throw ContractError("embed_sequence: empty sequence");
  const std::size_t k = adapters.config.k;
  std::vector<Tensor> parts;
  std::size_t pos = 0, next_prefix = 0;
  while (pos < seq.tokens.size()) {
    if (next_prefix < seq.prefixes.size() && seq.prefixes[next_prefix].position == pos) {
      const auto& p = seq.prefixes[next_prefix++];
      if (pos + k > seq.tokens.size()) throw ContractError("prefix at position " + std::to_string(pos) + " overruns sequence");
      for (std::size_t i = 0; i < k; ++i) {
        if (seq.tokens[pos + i] != kPrefixSlot) {
          throw ContractError("prefix at position " + std::to_string(pos) + " does not cover " + std::to_string(k) +
                              " placeholder slots");
        }
      }
      parts.push_back(map_image_to_prefix(adapters, images(p.image_id)));
      pos += k;
      continue;
    }
    std::size_t end = pos;
    while (end < seq.tokens.size() && seq.tokens[end] != kPrefixSlot &&
           !(next_prefix < seq.prefixes.size() && seq.prefixes[next_prefix].position == end)) {
      ++end;
    }
    if (end == pos) throw ContractError("placeholder at position " + std::to_string(pos) + " has no image");
    parts.push_back(lm.embed(std::span<const TokenId>(seq.tokens.data() + pos, end - pos), adapters.ret_embedding));
    pos = end;
  }
  if (next_prefix != seq.prefixes.size()) throw ContractError("embed_sequence: prefixes out of order or past the end");
  return parts.size() == 1 ? parts[0] : num::concat_rows(parts);
}

Tensor retrieval_from_hidden(const GroundingAdapters& adapters, const Tensor& hidden) {
  const std::size_t d = adapters.config.d;
  if (hidden.numel() != d) throw ContractError("hidden row has " + std::to_string(hidden.numel()) + " entries, W_t expects " + std::to_string(d));
  return num::l2_normalize(num::reshape(num::matmul(num::reshape(hidden, Shape{1, d}), adapters.w_t),
                                        Shape{adapters.config.q}));
}

Tensor text_retrieval_embedding(const text::TransformerLM& lm, const GroundingAdapters& adapters,
                                const MixedSequence& seq, const ImageLookup& images) {
  const auto ret_id = static_cast<TokenId>(lm.config().vocab_size - 1);
  if (seq.tokens.empty() || seq.tokens.back() != ret_id) {
    throw ContractError("text retrieval embedding needs a sequence ending in [RET]");
  }
  Tensor x = embed_sequence(lm, adapters, seq, images);
  return retrieval_from_hidden(adapters, text::last_hidden_at(lm, x, seq.size() - 1, adapters.ret_embedding));
}

Tensor image_retrieval_embedding(const GroundingAdapters& adapters, const Tensor& v) {
  const std::size_t m = adapters.config.m;
  if (v.numel() != m) {
    throw ContractError("image embedding has dimension " + std::to_string(v.numel()) + ", W_i expects " +
                        std::to_string(m));
  }
  return num::l2_normalize(num::reshape(num::matmul(num::reshape(v, Shape{1, m}), adapters.w_i),
                                        Shape{adapters.config.q}));
}

Tensor sim(const Tensor& x, const Tensor& y) {
  if (x.numel() != y.numel()) {
    throw DimensionError("sim: lengths " + std::to_string(x.numel()) + " and " + std::to_string(y.numel()));
  }
  return num::sum(num::mul(num::l2_normalize(num::reshape(x, Shape{x.numel()})),
                           num::l2_normalize(num::reshape(y, Shape{y.numel()}))));
}

Tensor caption_example_loss(const Tensor& logits, const MixedSequence& seq, CaptionReduction reduction) {
  const std::size_t t_len = seq.size();
  if (seq.scored.size() != t_len) throw ContractError("captioning: scoring mask length differs from sequence");
  if (t_len < 2 || seq.scored[0]) throw ContractError("captioning: position 0 has no context to be scored from");
  std::vector<bool> mask(seq.scored.begin() + 1, seq.scored.end());
  std::span<const TokenId> targets(seq.tokens.data() + 1, t_len - 1);
  Tensor loss = num::cross_entropy(num::slice_rows(logits, 0, t_len - 1), targets, mask);
  if (reduction == CaptionReduction::kSum) {
    std::size_t count = 0;
    for (bool b : mask) count += b ? 1 : 0;
    loss = num::scale(loss, static_cast<Real>(count));
  }
  return loss;
}

Tensor captioning_loss(const text::TransformerLM& lm, const GroundingAdapters& adapters,
                       std::span<const MixedSequence> batch, const ImageLookup& images, CaptionReduction reduction) {
  if (batch.empty()) throw ContractError("captioning_loss: empty batch");
  Tensor total;
  for (const auto& seq : batch) {
    auto out = lm.forward(embed_sequence(lm, adapters, seq, images), adapters.ret_embedding);
    Tensor l = caption_example_loss(out.logits, seq, reduction);
    total = total.valid() ? num::add(total, l) : l;
  }
  return num::scale(total, 1.0 / static_cast<Real>(batch.size()));
}

namespace {

void require_unit_rows(const Tensor& x, const char* what) {
  if (x.rank() != 2) throw DimensionError(std::string(what) + " must be N×q, got " + num::shape_str(x.shape()));
  const std::size_t n = x.dim(0), q = x.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    Real s = 0;
    for (std::size_t j = 0; j < q; ++j) s += x[i * q + j] * x[i * q + j];
    if (std::abs(std::sqrt(s) - 1.0) > 1e-6) {
      throw ContractError(std::string(what) + " row " + std::to_string(i) + " has norm " +
                          std::to_string(std::sqrt(s)) + ", expected unit norm");
    }
  }
}

// Mean over rows of -log softmax(S/τ)[i, i] for S = a·bᵀ.
Tensor contrastive(const Tensor& a, const Tensor& b, const Tensor& log_tau, const char* name_a, const char* name_b) {
  require_unit_rows(a, name_a);
  require_unit_rows(b, name_b);
  if (a.shape() != b.shape()) {
    throw DimensionError("infonce: " + num::shape_str(a.shape()) + " vs " + num::shape_str(b.shape()));
  }
  if (log_tau.numel() != 1) throw DimensionError("infonce: temperature must be a scalar");
  const std::size_t n = a.dim(0);
  Tensor logits = num::scale_by(num::matmul_nt(a, b), num::exp(num::scale(log_tau, -1.0)));
  std::vector<std::int64_t> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = static_cast<std::int64_t>(i);
  return num::cross_entropy(logits, diag, std::vector<bool>(n, true));
}

}  // namespace

Tensor infonce_t2i(const Tensor& text_embeds, const Tensor& image_embeds, const Tensor& log_tau) {
  return contrastive(text_embeds, image_embeds, log_tau, "text embeddings", "image embeddings");
}

Tensor infonce_i2t(const Tensor& image_embeds, const Tensor& text_embeds, const Tensor& log_tau) {
  return contrastive(image_embeds, text_embeds, log_tau, "image embeddings", "text embeddings");
}

Tensor total_loss(const Tensor& l_c, const Tensor& l_t2i, const Tensor& l_i2t, const LossWeights& weights) {
  if (weights.captioning < 0 || weights.retrieval < 0) throw ConfigError("loss weights must be non-negative");
  const std::pair<const char*, const Tensor*> parts[] = {{"L_c", &l_c}, {"L_t2i", &l_t2i}, {"L_i2t", &l_i2t}};
  for (const auto& [name, t] : parts) {
    if (t->valid() && !std::isfinite(t->item())) {
      throw NumericError(std::string("non-finite loss component ") + name + " = " + std::to_string(t->item()));
    }
  }
  Tensor total = Tensor::scalar(0.0);
  if (l_c.valid()) total = num::add(total, num::scale(l_c, weights.captioning));
  if (l_t2i.valid()) total = num::add(total, num::scale(l_t2i, weights.retrieval));
  if (l_i2t.valid()) total = num::add(total, num::scale(l_i2t, weights.retrieval));
  return total;
}

}  // namespace vlg::ground
