// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "vlg/data/manifest.hpp"
#include "vlg/grounding/adapters.hpp"

namespace vlg::retrieval {

// Ordered unit vectors in the retrieval space, keyed by image id.
class RetrievalIndex {
 public:
  explicit RetrievalIndex(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<num::Real>& vector(std::size_t i) const { return vectors_.at(i); }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  // Rejects duplicate ids, wrong widths and vectors off the unit sphere.
  void add(const std::string& id, std::vector<num::Real> embedding);

  // {"dim": q, "count": n} header, then {"id", "embedding"} lines.
  std::string serialize() const;
  static RetrievalIndex deserialize(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static RetrievalIndex load(const std::filesystem::path& path);

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<std::vector<num::Real>> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ScoredId {
  std::string id;
  num::Real score = 0;
};

using IdSet = std::unordered_set<std::string>;

// One record per distinct image of `records`, in manifest order.
RetrievalIndex index_build(std::span<const data::CaptionedImage> records, const ground::ImageLookup& images,
                           const ground::GroundingAdapters& adapters);

// Top-k by dot product, descending, ties by insertion order. Ids in
// `exclude` are skipped.
std::vector<ScoredId> index_topk(const RetrievalIndex& index, std::span<const num::Real> query, std::size_t k,
                                 const IdSet& exclude = {});

// Unit query embedding for an already encoded sequence.
num::Tensor query_embedding(const ground::GroundedModel& model, const ground::MixedSequence& seq);

// Encodes the context (images as prefixes, [RET] appended unless the model
// reads out at the last token) and ranks the index against it.
std::vector<ScoredId> contextual_retrieve(const ground::GroundedModel& model, const data::InterleavedSequence& context,
                                          const RetrievalIndex& index, std::size_t k, const IdSet& exclude = {});

// Mean of per-item retrieval embeddings, renormalized.
std::vector<ScoredId> average_embedding_baseline(const ground::GroundedModel& model,
                                                 const data::InterleavedSequence& context,
                                                 const RetrievalIndex& index, std::size_t k,
                                                 const IdSet& exclude = {});

enum class PerplexityNorm { kToken, kSequence };

// Negative log-likelihood of each candidate's tokens after the context.
std::vector<num::Real> candidate_nll(const ground::GroundedModel& model, const data::InterleavedSequence& context,
                                     std::span<const std::string> candidates);

// Candidate indices by ascending perplexity, ties by index.
std::vector<std::size_t> rank_answers_by_perplexity(const ground::GroundedModel& model,
                                                    const data::InterleavedSequence& context,
                                                    std::span<const std::string> candidates,
                                                    PerplexityNorm norm = PerplexityNorm::kToken);

struct GenerationConfig {
  std::size_t max_tokens = 32;
  bool greedy = true;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  double ret_logit_scale = 1.0;
  bool allow_ret = true;
  bool feedback_retrieved_image = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const GenerationConfig& c);
void from_json(const nlohmann::json& j, GenerationConfig& c);

struct GenerationTrace {
  data::InterleavedSequence output;
  std::vector<text::TokenId> tokens;  // emitted ids, [RET] included
};

GenerationTrace generate_trace(const ground::GroundedModel& model, const data::InterleavedSequence& prompt,
                               const GenerationConfig& config, const RetrievalIndex& index);

// The continuation only: generated text, with each emitted [RET] replaced by
// the top-1 retrieved image.
data::InterleavedSequence generate_interleaved(const ground::GroundedModel& model,
                                               const data::InterleavedSequence& prompt,
                                               const GenerationConfig& config, const RetrievalIndex& index);

}  // namespace vlg::retrieval
