// SPDX-License-Identifier: Apache-2.0
#include "vlg/training/gradient_suite.hpp"

#include <algorithm>

#include "vlg/data/synthetic.hpp"
#include "vlg/training/trainer.hpp"

namespace vlg::train {

double GradientSuiteReport::max_rel_error() const {
  double m = 0;
  for (const auto& c : checks) m = std::max(m, c.report.max_rel_error);
  return m;
}

bool GradientSuiteReport::passed() const { return !checks.empty() && max_rel_error() < tolerance; }

nlohmann::ordered_json GradientSuiteReport::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["max_rel_error"] = max_rel_error();
  j["tolerance"] = tolerance;
  j["passed"] = passed();
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    nlohmann::ordered_json e;
    e["loss"] = c.loss;
    e["max_rel_error"] = c.report.max_rel_error;
    e["max_abs_error"] = c.report.max_abs_error;
    e["entries"] = c.report.entries;
    e["worst"] = c.report.worst;
    arr.push_back(e);
  }
  j["checks"] = arr;
  return j;
}

namespace {

struct PrecisionGuard {
  num::Precision saved = num::precision();
  PrecisionGuard() { num::set_precision(num::Precision::k64); }
  ~PrecisionGuard() { num::set_precision(saved); }
};

}  // namespace

GradientSuiteReport end_to_end_gradient_check(std::uint64_t seed, double tolerance) {
  PrecisionGuard guard;
  data::SyntheticSpec spec;
  spec.seed = seed;
  spec.n_pairs = 8;
  spec.n_stories = 0;
  spec.n_dialogues = 0;
  spec.n_text_stories = 0;
  spec.dim = 6;
  const auto corpus = data::generate_synthetic_corpus(spec);
  auto vocab = data::corpus_vocabulary(corpus);

  text::LMConfig lc;
  lc.layers = 1;
  lc.heads = 2;
  lc.d_model = lc.hidden_dim = 8;
  lc.ffn_dim = 16;
  lc.vocab_size = vocab.size();
  lc.max_len = 32;
  lc.seed = seed;
  text::TransformerLM lm(lc);

  TrainConfig config;
  config.batch_size = 3;
  config.p_concat = 1.0;
  config.q = 5;
  config.seed = seed;
  vision::EncoderConfig ec;
  ec.out_dim = spec.dim;
  auto state = TrainingState::create(config, text::LoadedLM{std::move(vocab), std::move(lm)}, "", ec);
  const auto records = corpus.manifest.filter_split("train").records;
  const auto examples = build_examples(state, records);
  const auto batch = scheduled_batch(config, examples, 0);
  const auto images = store_lookup(state.encoder, corpus.store);
  const auto params = state.trainable();

  GradientSuiteReport out;
  out.seed = seed;
  out.tolerance = tolerance;
  const std::vector<std::pair<std::string, num::Tensor BatchLosses::*>> objectives{
      {"L_c", &BatchLosses::l_c}, {"L_t2i", &BatchLosses::l_t2i}, {"L_i2t", &BatchLosses::l_i2t}};
  for (const auto& [name, member] : objectives) {
    const auto report = num::check_gradients([&] { return batch_losses(state, batch, images).*member; }, params);
    out.checks.push_back({name, report});
  }
  return out;
}

}  // namespace vlg::train
