// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlg/numerics/archive.hpp"
#include "vlg/numerics/tensor.hpp"
#include "vlg/text/vocabulary.hpp"

namespace vlg::text {

struct LMConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d_model = 64;
  // Width of the last hidden layer. Must equal d_model for a tied pre-norm
  // transformer; kept separate so configs name both.
  std::size_t hidden_dim = 64;
  std::size_t ffn_dim = 256;
  // Includes every special token, [RET] among them.
  std::size_t vocab_size = 0;
  std::size_t max_len = 256;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const LMConfig& c);
void from_json(const nlohmann::json& j, LMConfig& c);

struct LMOutput {
  num::Tensor logits;  // T×V, absent when not requested
  num::Tensor hidden;  // T×d, final layer-norm output
};

// Pre-norm causal transformer with learned positions and an output layer
// tied to the token embeddings. The [RET] row of the embedding table is
// supplied by the caller so it can live outside the frozen weights.
class TransformerLM {
 public:
  explicit TransformerLM(const LMConfig& config);

  TransformerLM clone() const;
  const LMConfig& config() const { return config_; }

  LMOutput forward(const num::Tensor& inputs, const num::Tensor& ret_row, bool with_logits = true) const;
  LMOutput forward(const num::Tensor& inputs) const;

  // (V-1)×d embeddings of every token except [RET].
  const num::Tensor& base_embeddings() const { return tok_emb_; }
  // Full V×d table with `ret_row` appended as the [RET] row.
  num::Tensor token_table(const num::Tensor& ret_row) const;
  num::Tensor embed(std::span<const TokenId> ids, const num::Tensor& ret_row) const;
  num::Tensor embed(std::span<const TokenId> ids) const;
  // Mean of the base embeddings, detached. Stands in for [RET] when no
  // adapter supplies one.
  num::Tensor default_ret_row() const;

  std::span<const num::NamedTensor> parameters() const { return params_; }
  num::Tensor& parameter(const std::string& name);
  void set_trainable(bool on);
  std::string digest() const;

  num::TensorArchive to_archive(const Vocabulary& vocab) const;
  static TransformerLM from_archive(const num::TensorArchive& archive);

 private:
  struct Layer {
    num::Tensor ln1_gain, ln1_bias;
    num::Tensor w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
    num::Tensor ln2_gain, ln2_bias;
    num::Tensor w_fc1, b_fc1, w_fc2, b_fc2;
  };

  TransformerLM() = default;
  void index_parameters();

  LMConfig config_;
  num::Tensor tok_emb_;
  num::Tensor pos_emb_;
  std::vector<Layer> layers_;
  num::Tensor lnf_gain_, lnf_bias_;
  std::vector<num::NamedTensor> params_;
};

// Σ_t log p(ids[t] | context, ids[<t]). The context is `prefix` (k×d) when
// given, else a single <s>. Prefix positions are never scored.
num::Tensor log_likelihood(const TransformerLM& lm, std::span<const TokenId> ids,
                           const num::Tensor& prefix = {}, const num::Tensor& ret_row = {});

// Row `position` of the final hidden states for `inputs` (T×d).
num::Tensor last_hidden_at(const TransformerLM& lm, const num::Tensor& inputs, std::size_t position,
                           const num::Tensor& ret_row = {});

struct PretrainConfig {
  std::size_t steps = 400;
  std::size_t batch_size = 16;
  // Windows start at a caption boundary and may run across following lines.
  std::size_t window = 48;
  double lr = 3e-3;
  std::uint64_t warmup_steps = 20;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

// Next-token training of every weight on `corpus` (one caption per line),
// then freezes the result.
TransformerLM pretrain_lm(std::span<const std::string> corpus, const Vocabulary& vocab, const LMConfig& config,
                          const PretrainConfig& pretrain);

struct LoadedLM {
  Vocabulary vocab;
  TransformerLM lm;
};

void save_lm(const std::filesystem::path& path, const TransformerLM& lm, const Vocabulary& vocab);
LoadedLM load_lm(const std::filesystem::path& path);

}  // namespace vlg::text
