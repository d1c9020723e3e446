// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlg/data/examples.hpp"
#include "vlg/data/manifest.hpp"
#include "vlg/grounding/adapters.hpp"
#include "vlg/numerics/adam.hpp"
#include "vlg/numerics/archive.hpp"
#include "vlg/text/transformer.hpp"
#include "vlg/vision/encoder.hpp"

namespace vlg::train {

struct TrainConfig {
  double lr = 3e-4;
  std::uint64_t warmup_steps = 100;
  std::size_t batch_size = 32;
  std::size_t steps = 500;
  double lambda_c = 1.0;
  double lambda_r = 1.0;
  double p_concat = 0.5;
  std::uint64_t seed = 0;
  bool unfreeze_lm = false;
  bool disable_ret = false;
  bool retrieval_concat = false;
  // Global L2 clipping of the update; 0 disables it.
  double max_grad_norm = 0.0;
  ground::CaptionReduction caption_reduction = ground::CaptionReduction::kMean;
  std::size_t k = 1;
  std::size_t q = 32;
  double tau_init = 0.07;
  // Also write the checkpoint every this many steps (0: only at the end).
  std::size_t checkpoint_every = 0;
  // Store θ inside the checkpoint instead of referencing the LM file.
  bool embed_lm = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Tensor name → SHA-256 digest, keyed "lm/…", "encoder/…", "adapters/…".
using ParameterDigests = std::map<std::string, std::string>;

struct TrainingState {
  TrainConfig config;
  text::Vocabulary vocab;
  text::TransformerLM lm;
  // Where the LM was read from; recorded in checkpoints that do not embed θ.
  std::string lm_source;
  std::string lm_frozen_hash;
  vision::VisualEncoder encoder;
  ground::GroundingAdapters adapters;
  num::AdamState adam;
  std::uint64_t step = 0;
  ParameterDigests initial_digests;

  static TrainingState create(const TrainConfig& config, const text::LoadedLM& lm, std::string lm_source,
                              const vision::EncoderConfig& encoder);

  // The five adapter tensors, then θ when the LM is unfrozen.
  std::vector<num::NamedTensor> trainable() const;
  ParameterDigests digests() const;
  ground::GroundedModel model(ground::ImageLookup images) const;
};

// Lookup backed by the encoder (rasters) and the store (precomputed embeddings).
ground::ImageLookup store_lookup(const vision::VisualEncoder& encoder, const vision::EmbeddingStore& store);

struct StepReport {
  std::uint64_t step = 0;
  double l_c = 0, l_t2i = 0, l_i2t = 0, l = 0;
  double lr = 0;
  double tau = 0;  // τ used by this step, before the update
  std::map<std::string, double> grad_norms;
  double grad_norm = 0;  // global, before clipping
};

struct BatchLosses {
  num::Tensor l_c, l_t2i, l_i2t, total;
};

// The three objectives and their weighted sum for one batch, recorded on
// whatever tape is active.
BatchLosses batch_losses(const TrainingState& state, std::span<const data::TrainingExample> batch,
                         const ground::ImageLookup& images);

// One optimization step on already-built (and augmented) examples.
StepReport train_step(TrainingState& state, std::span<const data::TrainingExample> batch,
                      const ground::ImageLookup& images);

// The examples of every record, built with the state's k and [RET] setting.
std::vector<data::TrainingExample> build_examples(const TrainingState& state,
                                                  std::span<const data::CaptionedImage> records);

// The augmented batch for step `t`: a seeded epoch shuffle, then each row
// concatenated after a random partner with probability p_concat.
std::vector<data::TrainingExample> scheduled_batch(const TrainConfig& config,
                                                   std::span<const data::TrainingExample> examples, std::uint64_t t);

struct LoopOptions {
  std::filesystem::path metrics_path;
  std::filesystem::path checkpoint_path;
  std::function<void(const StepReport&)> on_step;
};

// Runs from state.step up to config.steps on the records.
void train_loop(TrainingState& state, std::span<const data::CaptionedImage> records,
                const vision::EmbeddingStore& store, const LoopOptions& options = {});

nlohmann::ordered_json metrics_line(const StepReport& report);

// Checkpoint container. Tensors: adapters/<name>, adam/m/<name>,
// adam/v/<name>, and lm/<name> when θ is embedded.
num::TensorArchive make_checkpoint(const TrainingState& state);
TrainingState restore_checkpoint(const num::TensorArchive& archive);
void save_checkpoint(const std::filesystem::path& path, const TrainingState& state);
TrainingState load_checkpoint(const std::filesystem::path& path);

struct FrozenReport {
  bool passed = false;
  bool intentionally_unfrozen = false;
  std::vector<std::string> changed;
  std::vector<std::string> violations;

  std::string summary() const;
};

FrozenReport verify_frozen(const TrainingState& state, const ParameterDigests& before);

struct InBatchRecall {
  double t2i_r1 = 0, i2t_r1 = 0;
  double l_t2i = 0, l_i2t = 0;
};

// Contrastive metrics over the given single-segment examples as one batch.
InBatchRecall in_batch_recall(const TrainingState& state, std::span<const data::TrainingExample> examples,
                              const ground::ImageLookup& images);

}  // namespace vlg::train
