// SPDX-License-Identifier: Apache-2.0
#include "vlg/eval/protocols.hpp"

#include <algorithm>

#include "vlg/errors.hpp"

namespace vlg::eval {

const std::vector<std::string>& protocol_names() {
  static const std::vector<std::string> names{"story_retrieval_1cap", "story_retrieval_5cap",
                                              "story_retrieval_5cap4img", "dialogue_it2t",
                                              "dialogue_t2i", "context_sweep"};
  return names;
}

void ProtocolSpec::validate() const {
  const auto& names = protocol_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    throw ConfigError("unknown protocol '" + name + "'");
  }
  if (ks.empty()) throw ConfigError("protocol needs at least one k");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == 0) throw ConfigError("protocol k values must be positive");
    if (i > 0 && ks[i] <= ks[i - 1]) throw ConfigError("protocol k list must be strictly ascending");
  }
}

void to_json(nlohmann::json& j, const ProtocolSpec& s) {
  j = nlohmann::json{{"name", s.name}, {"unseen_only", s.unseen_only}, {"ks", s.ks}};
}

void from_json(const nlohmann::json& j, ProtocolSpec& s) {
  ProtocolSpec d;
  s.name = j.value("name", d.name);
  s.unseen_only = j.value("unseen_only", d.unseen_only);
  s.ks = j.value("ks", d.ks);
}

double EvalReport::recall_at(std::size_t k) const {
  for (const auto& [kk, r] : recall) {
    if (kk == k) return r;
  }
  throw ContractError("report has no R@" + std::to_string(k));
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["protocol"] = protocol;
  j["samples"] = samples;
  for (const auto& [k, r] : recall) j["R@" + std::to_string(k)] = r;
  j["MRR"] = mrr;
  j["config"] = config;
  return j;
}

namespace {

std::size_t rank_of(std::span<const std::string> ranked, const std::string& gold) {
  const auto it = std::find(ranked.begin(), ranked.end(), gold);
  if (it == ranked.end()) throw ScoringError("gold '" + gold + "' is not in the candidate pool");
  return static_cast<std::size_t>(it - ranked.begin()) + 1;
}

// Accumulates per-sample ranks into a report.
struct Tally {
  std::vector<std::size_t> ks;
  std::vector<double> hits;
  double reciprocal = 0;
  std::size_t n = 0;

  explicit Tally(std::vector<std::size_t> k) : ks(std::move(k)), hits(ks.size(), 0.0) {}

  void add(std::span<const std::string> ranked, const std::string& gold) {
    for (std::size_t i = 0; i < ks.size(); ++i) hits[i] += recall_at_k(ranked, gold, ks[i]);
    reciprocal += mrr(ranked, gold);
    ++n;
  }

  EvalReport report(std::string protocol, nlohmann::json config) const {
    EvalReport r;
    r.protocol = std::move(protocol);
    r.samples = n;
    r.config = std::move(config);
    for (std::size_t i = 0; i < ks.size(); ++i) r.recall.emplace_back(ks[i], n ? hits[i] / static_cast<double>(n) : 0.0);
    r.mrr = n ? reciprocal / static_cast<double>(n) : 0.0;
    return r;
  }
};

std::vector<std::string> ids_of(const std::vector<retrieval::ScoredId>& ranked) {
  std::vector<std::string> out;
  out.reserve(ranked.size());
  for (const auto& r : ranked) out.push_back(r.id);
  return out;
}

std::pair<std::size_t, std::size_t> context_size(const std::string& protocol) {
  if (protocol == "story_retrieval_1cap") return {1, 0};
  if (protocol == "story_retrieval_5cap") return {5, 0};
  if (protocol == "story_retrieval_5cap4img") return {5, 4};
  throw ConfigError("'" + protocol + "' is not a story retrieval protocol");
}

}  // namespace

int recall_at_k(std::span<const std::string> ranked, const std::string& gold, std::size_t k) {
  return rank_of(ranked, gold) <= k ? 1 : 0;
}

double mrr(std::span<const std::string> ranked, const std::string& gold) {
  return 1.0 / static_cast<double>(rank_of(ranked, gold));
}

data::InterleavedSequence story_context(const data::Story& story, std::size_t captions, std::size_t images) {
  const std::size_t len = data::kStoryLength;
  if (captions < 1 || captions > len || images > len - 1) {
    throw ContractError("story context of " + std::to_string(captions) + " captions and " + std::to_string(images) +
                        " images does not fit a story of 5");
  }
  if (story.items.size() != len) throw DataError("story '" + story.id + "' does not have 5 items");
  data::InterleavedSequence seq;
  for (std::size_t pos = 0; pos < len; ++pos) {
    const auto* item = story.items[pos];
    if (!item) throw DataError("story '" + story.id + "' is missing position " + std::to_string(pos));
    if (pos < len - 1 && pos >= len - 1 - images) seq.add_image(item->image_id);
    if (pos >= len - captions) seq.add_text(item->caption);
  }
  return seq;
}

EvalReport evaluate_story_context(const ProtocolSpec& spec, std::span<const data::Story> stories,
                                  const ground::GroundedModel& model, const retrieval::RetrievalIndex& index,
                                  std::size_t captions, std::size_t images) {
  spec.validate();
  Tally tally(spec.ks);
  for (const auto& story : stories) {
    const auto context = story_context(story, captions, images);
    retrieval::IdSet exclude;
    if (spec.unseen_only) {
      for (std::size_t pos = 0; pos + 1 < data::kStoryLength; ++pos) exclude.insert(story.items[pos]->image_id);
    }
    const auto ranked = ids_of(retrieval::contextual_retrieve(model, context, index, index.size(), exclude));
    tally.add(ranked, story.items.back()->image_id);
  }
  nlohmann::json config = spec;
  config["captions"] = captions;
  config["images"] = images;
  return tally.report(spec.name, config);
}

EvalReport run_story_protocol(const ProtocolSpec& spec, const data::DatasetManifest& manifest,
                              const ground::GroundedModel& model, const retrieval::RetrievalIndex& index) {
  const auto [captions, images] = context_size(spec.name);
  const auto stories = manifest.stories();
  if (stories.empty()) throw DataError("manifest holds no stories");
  return evaluate_story_context(spec, stories, model, index, captions, images);
}

std::pair<EvalReport, EvalReport> run_dialogue_protocols(const data::DatasetManifest& manifest,
                                                         const ground::GroundedModel& model,
                                                         const retrieval::RetrievalIndex& index,
                                                         const DialogueOptions& options) {
  const auto dialogues = manifest.dialogues();
  if (dialogues.empty()) throw DataError("manifest holds no dialogues");
  Tally it2t(options.ks), t2i(options.ks);
  for (const auto* r : dialogues) {
    const auto& d = *r->dialogue;
    if (options.expected_candidates && d.candidates.size() != options.expected_candidates) {
      throw DataError("dialogue '" + r->id + "' has " + std::to_string(d.candidates.size()) + " candidates, expected " +
                      std::to_string(options.expected_candidates));
    }
    if (d.gold >= d.candidates.size()) throw DataError("dialogue '" + r->id + "' has a gold index out of range");
    data::InterleavedSequence with_image, text;
    with_image.add_image(r->image_id);
    for (const auto& round : d.rounds) {
      with_image.add_text(round);
      text.add_text(round);
    }
    const auto order = retrieval::rank_answers_by_perplexity(model, with_image, d.candidates, options.norm);
    std::vector<std::string> ranked;
    ranked.reserve(order.size());
    for (auto i : order) ranked.push_back(std::to_string(i));
    it2t.add(ranked, std::to_string(d.gold));
    t2i.add(ids_of(retrieval::contextual_retrieve(model, text, index, index.size())), r->image_id);
  }
  nlohmann::json config{{"expected_candidates", options.expected_candidates},
                        {"norm", options.norm == retrieval::PerplexityNorm::kToken ? "token" : "sequence"},
                        {"ks", options.ks}};
  return {it2t.report("dialogue_it2t", config), t2i.report("dialogue_t2i", config)};
}

const EvalReport& SweepResult::at(std::size_t captions, std::size_t images) const {
  for (const auto& c : cells) {
    if (c.captions == captions && c.images == images) return c.report;
  }
  throw ContractError("sweep has no cell (" + std::to_string(captions) + ", " + std::to_string(images) + ")");
}

nlohmann::ordered_json SweepResult::to_json() const {
  nlohmann::ordered_json j;
  j["protocol"] = "context_sweep";
  j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    auto cell = c.report.to_json();
    cell.erase("protocol");
    cell.erase("config");
    nlohmann::ordered_json row;
    row["captions"] = c.captions;
    row["images"] = c.images;
    row.update(cell);
    j["cells"].push_back(row);
  }
  // Plot-ready: one row per caption count, one column per image count.
  nlohmann::ordered_json grid;
  if (!cells.empty()) {
    for (const auto& [k, unused] : cells.front().report.recall) {
      auto rows = nlohmann::ordered_json::array();
      for (std::size_t c = 1; c <= data::kStoryLength; ++c) {
        auto cols = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < data::kStoryLength; ++i) cols.push_back(at(c, i).recall_at(k));
        rows.push_back(cols);
      }
      grid["R@" + std::to_string(k)] = rows;
    }
  }
  j["grid"] = grid;
  j["config"] = config;
  return j;
}

SweepResult run_context_sweep(const ProtocolSpec& spec, const data::DatasetManifest& manifest,
                              const ground::GroundedModel& model, const retrieval::RetrievalIndex& index) {
  const auto stories = manifest.stories();
  if (stories.empty()) throw DataError("manifest holds no stories");
  ProtocolSpec cell_spec = spec;
  cell_spec.name = "context_sweep";
  SweepResult out;
  out.config = cell_spec;
  for (std::size_t c = 1; c <= data::kStoryLength; ++c) {
    for (std::size_t i = 0; i < data::kStoryLength; ++i) {
      out.cells.push_back({c, i, evaluate_story_context(cell_spec, stories, model, index, c, i)});
    }
  }
  return out;
}

}  // namespace vlg::eval
