// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlg/numerics/tensor.hpp"
#include "vlg/text/transformer.hpp"

namespace vlg::ground {

using text::TokenId;

// Marks token positions occupied by a visual prefix.
inline constexpr TokenId kPrefixSlot = -1;

struct AdapterConfig {
  std::size_t k = 1;   // visual prefix length
  std::size_t q = 32;  // retrieval dimension
  std::size_t m = 48;  // image embedding dimension
  std::size_t d = 64;  // LM width (= last hidden width)
  double tau_init = 0.07;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const AdapterConfig& c);
void from_json(const nlohmann::json& j, AdapterConfig& c);

inline constexpr double kMinTau = 0.01;
inline constexpr double kMaxTau = 100.0;

// The trainable state: W_c (m×kd), W_t (d×q), W_i (m×q), the [RET]
// embedding (d) and log τ (1).
struct GroundingAdapters {
  AdapterConfig config;
  num::Tensor w_c, w_t, w_i, ret_embedding, log_tau;

  // Seeded uniform(±1/√fan_in) mappings; [RET] starts at the mean of the
  // LM's other token embeddings.
  static GroundingAdapters init(const AdapterConfig& config, const text::TransformerLM& lm);

  GroundingAdapters clone() const;
  double tau() const;
  // Projects log τ back into [ln kMinTau, ln kMaxTau].
  void clamp_tau();
  void set_trainable(bool on);

  // Names: W_c, W_t, W_i, ret_embedding, log_tau.
  std::vector<num::NamedTensor> named() const;
  std::vector<num::Tensor> tensors() const;
};

// Token ids with kPrefixSlot placeholders (k per image) and the image id of
// each prefix. `scored[t]` marks positions whose token is a prediction
// target; it may be empty when nothing is scored.
struct MixedSequence {
  struct Prefix {
    std::size_t position = 0;
    std::string image_id;
  };
  std::vector<TokenId> tokens;
  std::vector<Prefix> prefixes;
  std::vector<bool> scored;

  std::size_t size() const { return tokens.size(); }
};

// Image id → m-dim visual embedding.
using ImageLookup = std::function<num::Tensor(const std::string&)>;

// vᵀW_c viewed as k rows of d.
num::Tensor map_image_to_prefix(const GroundingAdapters& adapters, const num::Tensor& v);

// T×d LM input: tokens embedded (with the adapters' [RET] row), prefixes mapped through W_c.
num::Tensor embed_sequence(const text::TransformerLM& lm, const GroundingAdapters& adapters, const MixedSequence& seq,
                           const ImageLookup& images);

// normalize(hᵀW_t) for one d-dim hidden row.
num::Tensor retrieval_from_hidden(const GroundingAdapters& adapters, const num::Tensor& hidden);

// Retrieval embedding at the final position, which must hold [RET].
num::Tensor text_retrieval_embedding(const text::TransformerLM& lm, const GroundingAdapters& adapters,
                                     const MixedSequence& seq, const ImageLookup& images);

// normalize(vᵀW_i).
num::Tensor image_retrieval_embedding(const GroundingAdapters& adapters, const num::Tensor& v);

// Cosine similarity as a scalar tensor.
num::Tensor sim(const num::Tensor& x, const num::Tensor& y);

enum class CaptionReduction { kMean, kSum };

// Per example: mean (or sum) over scored positions of -log p(token | prefix
// of the sequence); then the batch mean.
num::Tensor captioning_loss(const text::TransformerLM& lm, const GroundingAdapters& adapters,
                            std::span<const MixedSequence> batch, const ImageLookup& images,
                            CaptionReduction reduction = CaptionReduction::kMean);

// Captioning loss for one example from precomputed logits.
num::Tensor caption_example_loss(const num::Tensor& logits, const MixedSequence& seq, CaptionReduction reduction);

// Rows of both inputs must be unit-norm (within 1e-6). τ = exp(log_tau).
num::Tensor infonce_t2i(const num::Tensor& text_embeds, const num::Tensor& image_embeds, const num::Tensor& log_tau);
num::Tensor infonce_i2t(const num::Tensor& image_embeds, const num::Tensor& text_embeds, const num::Tensor& log_tau);

struct LossWeights {
  double captioning = 1.0;  // λ_c
  double retrieval = 1.0;   // λ_r
};

// λ_c·L_c + λ_r·(L_t2i + L_i2t). Absent components count as zero.
num::Tensor total_loss(const num::Tensor& l_c, const num::Tensor& l_t2i, const num::Tensor& l_i2t,
                       const LossWeights& weights);

// Read-only bundle of what inference needs.
struct GroundedModel {
  const text::Vocabulary& vocab;
  const text::TransformerLM& lm;
  const GroundingAdapters& adapters;
  ImageLookup images;
  // Read the retrieval embedding at an appended [RET]; when false, at the
  // last token of the input (the disable_ret ablation).
  bool ret_readout = true;
};

}  // namespace vlg::ground
