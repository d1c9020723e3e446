// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vlg/data/manifest.hpp"
#include "vlg/grounding/adapters.hpp"
#include "vlg/retrieval/retrieval.hpp"

namespace vlg::eval {

const std::vector<std::string>& protocol_names();

struct ProtocolSpec {
  std::string name = "story_retrieval_5cap4img";
  // Leave the story's own context images out of the candidate pool.
  bool unseen_only = true;
  std::vector<std::size_t> ks{1, 5, 10};

  void validate() const;
};

void to_json(nlohmann::json& j, const ProtocolSpec& s);
void from_json(const nlohmann::json& j, ProtocolSpec& s);

struct EvalReport {
  std::string protocol;
  std::size_t samples = 0;
  std::vector<std::pair<std::size_t, double>> recall;  // (k, R@k), k ascending
  double mrr = 0;
  nlohmann::json config;

  double recall_at(std::size_t k) const;
  nlohmann::ordered_json to_json() const;
};

// 1 when gold is among the first k, else 0. Throws ScoringError when gold
// is not ranked at all.
int recall_at_k(std::span<const std::string> ranked, const std::string& gold, std::size_t k);
double mrr(std::span<const std::string> ranked, const std::string& gold);

// Last `captions` captions and the last `images` of the first four images,
// in story order with each image ahead of its caption.
data::InterleavedSequence story_context(const data::Story& story, std::size_t captions, std::size_t images);

// Story retrieval with an explicit context size; the protocol name only
// labels the report.
EvalReport evaluate_story_context(const ProtocolSpec& spec, std::span<const data::Story> stories,
                                  const ground::GroundedModel& model, const retrieval::RetrievalIndex& index,
                                  std::size_t captions, std::size_t images);

EvalReport run_story_protocol(const ProtocolSpec& spec, const data::DatasetManifest& manifest,
                              const ground::GroundedModel& model, const retrieval::RetrievalIndex& index);

struct DialogueOptions {
  // 0 accepts any candidate count.
  std::size_t expected_candidates = 100;
  retrieval::PerplexityNorm norm = retrieval::PerplexityNorm::kToken;
  std::vector<std::size_t> ks{1, 5, 10};
};

// (IT2T, T2I). IT2T ranks candidate answers given the image and dialogue;
// T2I retrieves the image from the dialogue text alone.
std::pair<EvalReport, EvalReport> run_dialogue_protocols(const data::DatasetManifest& manifest,
                                                         const ground::GroundedModel& model,
                                                         const retrieval::RetrievalIndex& index,
                                                         const DialogueOptions& options = {});

struct SweepCell {
  std::size_t captions = 0;
  std::size_t images = 0;
  EvalReport report;
};

struct SweepResult {
  std::vector<SweepCell> cells;  // captions 1..5 outer, images 0..4 inner
  nlohmann::json config;

  const EvalReport& at(std::size_t captions, std::size_t images) const;
  nlohmann::ordered_json to_json() const;
};

SweepResult run_context_sweep(const ProtocolSpec& spec, const data::DatasetManifest& manifest,
                              const ground::GroundedModel& model, const retrieval::RetrievalIndex& index);

}  // namespace vlg::eval
