// SPDX-License-Identifier: Apache-2.0
#include "vlg/retrieval/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "vlg/data/examples.hpp"
#include "vlg/errors.hpp"
#include "vlg/numerics/ops.hpp"
#include "vlg/numerics/random.hpp"
#include "vlg/numerics/tape.hpp"

namespace vlg::retrieval {

using num::Real;
using num::Tensor;

void RetrievalIndex::add(const std::string& id, std::vector<Real> embedding) {
  if (dim_ == 0) dim_ = embedding.size();
  if (embedding.size() != dim_) {
    throw FormatError("index record '" + id + "' has dimension " + std::to_string(embedding.size()) +
                      ", index declares " + std::to_string(dim_));
  }
  if (index_.count(id)) throw FormatError("duplicate index id '" + id + "'");
  Real s = 0;
  for (auto x : embedding) s += x * x;
  if (!(std::abs(std::sqrt(s) - 1.0) <= 1e-6)) {
    throw FormatError("index record '" + id + "' has norm " + std::to_string(std::sqrt(s)) + ", expected 1");
  }
  index_.emplace(id, ids_.size());
  ids_.push_back(id);
  vectors_.push_back(std::move(embedding));
}

std::string RetrievalIndex::serialize() const {
  std::string out = nlohmann::json{{"count", ids_.size()}, {"dim", dim_}}.dump() + "\n";
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    out += nlohmann::json{{"embedding", vectors_[i]}, {"id", ids_[i]}}.dump() + "\n";
  }
  return out;
}

RetrievalIndex RetrievalIndex::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  RetrievalIndex index;
  std::size_t line_no = 0, expected = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("index line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!header) {
      if (!j.contains("dim") || !j.contains("count")) throw FormatError("index must start with a {\"dim\", \"count\"} header");
      index.dim_ = j.at("dim").get<std::size_t>();
      expected = j.at("count").get<std::size_t>();
      header = true;
      continue;
    }
    if (!j.contains("id") || !j.contains("embedding")) {
      throw FormatError("index line " + std::to_string(line_no) + " lacks id or embedding");
    }
    index.add(j.at("id").get<std::string>(), j.at("embedding").get<std::vector<Real>>());
  }
  if (header && index.size() != expected) {
    throw FormatError("index header promises " + std::to_string(expected) + " records, file holds " +
                      std::to_string(index.size()));
  }
  return index;
}

void RetrievalIndex::save(const std::filesystem::path& path) const { num::write_file(path, serialize()); }

RetrievalIndex RetrievalIndex::load(const std::filesystem::path& path) { return deserialize(num::read_file(path)); }

RetrievalIndex index_build(std::span<const data::CaptionedImage> records, const ground::ImageLookup& images,
                           const ground::GroundingAdapters& adapters) {
  num::NoGradScope no_grad;
  RetrievalIndex index(adapters.config.q);
  for (const auto& r : records) {
    if (index.contains(r.image_id)) continue;
    const Tensor e = ground::image_retrieval_embedding(adapters, images(r.image_id));
    index.add(r.image_id, std::vector<Real>(e.data().begin(), e.data().end()));
  }
  return index;
}

std::vector<ScoredId> index_topk(const RetrievalIndex& index, std::span<const Real> query, std::size_t k,
                                 const IdSet& exclude) {
  if (k == 0) throw ContractError("index_topk: k must be at least 1");
  if (index.empty()) throw ContractError("index_topk: index is empty");
  if (query.size() != index.dim()) {
    throw DimensionError("index_topk: query has dimension " + std::to_string(query.size()) + ", index has " +
                         std::to_string(index.dim()));
  }
  std::vector<std::pair<Real, std::size_t>> scored;
  scored.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (!exclude.empty() && exclude.count(index.ids()[i])) continue;
    const auto& v = index.vector(i);
    Real s = 0;
    for (std::size_t j = 0; j < v.size(); ++j) s += v[j] * query[j];
    scored.emplace_back(s, i);
  }
  const auto better = [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); };
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
  std::vector<ScoredId> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back({index.ids()[scored[i].second], scored[i].first});
  return out;
}

namespace {

void check_length(const ground::GroundedModel& model, const ground::MixedSequence& seq, const char* what) {
  const auto max_len = model.lm.config().max_len;
  if (seq.size() > max_len) {
    throw ContractError(std::string(what) + ": input of " + std::to_string(seq.size()) +
                        " positions exceeds the model's maximum length " + std::to_string(max_len));
  }
}

ground::MixedSequence encode_query(const ground::GroundedModel& model, const data::InterleavedSequence& context) {
  return data::encode_interleaved(context, model.vocab, model.adapters.config.k, model.ret_readout);
}

}  // namespace

Tensor query_embedding(const ground::GroundedModel& model, const ground::MixedSequence& seq) {
  check_length(model, seq, "retrieval query");
  num::NoGradScope no_grad;
  if (model.ret_readout) return ground::text_retrieval_embedding(model.lm, model.adapters, seq, model.images);
  const auto hidden = model.lm
                          .forward(ground::embed_sequence(model.lm, model.adapters, seq, model.images),
                                   model.adapters.ret_embedding, false)
                          .hidden;
  return ground::retrieval_from_hidden(model.adapters, num::row(hidden, seq.size() - 1));
}

std::vector<ScoredId> contextual_retrieve(const ground::GroundedModel& model, const data::InterleavedSequence& context,
                                          const RetrievalIndex& index, std::size_t k, const IdSet& exclude) {
  if (context.items.empty()) throw ContractError("contextual_retrieve: context is empty");
  const Tensor q = query_embedding(model, encode_query(model, context));
  return index_topk(index, q.data(), k, exclude);
}

std::vector<ScoredId> average_embedding_baseline(const ground::GroundedModel& model,
                                                 const data::InterleavedSequence& context,
                                                 const RetrievalIndex& index, std::size_t k, const IdSet& exclude) {
  if (context.items.empty()) throw ContractError("average_embedding_baseline: context is empty");
  num::NoGradScope no_grad;
  std::vector<Tensor> parts;
  for (const auto& item : context.items) {
    if (const auto* img = std::get_if<data::InterleavedSequence::ImageItem>(&item)) {
      parts.push_back(ground::image_retrieval_embedding(model.adapters, model.images(img->image_id)));
    } else {
      data::InterleavedSequence single;
      single.items.push_back(item);
      parts.push_back(query_embedding(model, encode_query(model, single)));
    }
  }
  Tensor mean(num::Shape{parts.front().numel()});
  for (const auto& p : parts) {
    for (std::size_t j = 0; j < p.numel(); ++j) mean[j] += p[j];
  }
  for (auto& x : mean.data()) x /= static_cast<Real>(parts.size());
  const Tensor q = num::l2_normalize(mean);
  return index_topk(index, q.data(), k, exclude);
}

std::vector<Real> candidate_nll(const ground::GroundedModel& model, const data::InterleavedSequence& context,
                                std::span<const std::string> candidates) {
  if (candidates.empty()) throw ContractError("rank_answers_by_perplexity: no candidates");
  num::NoGradScope no_grad;
  ground::MixedSequence ctx;
  if (context.items.empty()) {
    ctx.tokens.push_back(model.vocab.bos());
  } else {
    ctx = data::encode_interleaved(context, model.vocab, model.adapters.config.k, false);
  }
  std::vector<Real> out;
  out.reserve(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto ids = model.vocab.tokenize(candidates[c]);
    if (ids.empty()) throw ContractError("candidate " + std::to_string(c) + " tokenizes to nothing");
    auto seq = ctx;
    seq.tokens.insert(seq.tokens.end(), ids.begin(), ids.end());
    check_length(model, seq, "perplexity ranking");
    const auto out_lm = model.lm.forward(ground::embed_sequence(model.lm, model.adapters, seq, model.images),
                                         model.adapters.ret_embedding, true);
    const Tensor logits = num::slice_rows(out_lm.logits, ctx.size() - 1, ids.size());
    const std::vector<bool> mask(ids.size(), true);
    out.push_back(num::cross_entropy(logits, ids, mask).item() * static_cast<Real>(ids.size()));
  }
  return out;
}

std::vector<std::size_t> rank_answers_by_perplexity(const ground::GroundedModel& model,
                                                    const data::InterleavedSequence& context,
                                                    std::span<const std::string> candidates, PerplexityNorm norm) {
  const auto nll = candidate_nll(model, context, candidates);
  std::vector<Real> ppl(nll.size());
  for (std::size_t c = 0; c < nll.size(); ++c) {
    const Real n = norm == PerplexityNorm::kToken ? static_cast<Real>(model.vocab.tokenize(candidates[c]).size()) : 1.0;
    ppl[c] = std::exp(nll[c] / n);
  }
  std::vector<std::size_t> order(nll.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ppl[a] < ppl[b]; });
  return order;
}

void GenerationConfig::validate() const {
  if (!(ret_logit_scale >= 0)) throw ConfigError("generation: ret_logit_scale must be non-negative");
  if (!greedy && !(temperature > 0)) throw ConfigError("generation: temperature must be positive when sampling");
}

void to_json(nlohmann::json& j, const GenerationConfig& c) {
  j = nlohmann::json{{"max_tokens", c.max_tokens},
                     {"greedy", c.greedy},
                     {"temperature", c.temperature},
                     {"seed", c.seed},
                     {"ret_logit_scale", c.ret_logit_scale},
                     {"allow_ret", c.allow_ret},
                     {"feedback_retrieved_image", c.feedback_retrieved_image}};
}

void from_json(const nlohmann::json& j, GenerationConfig& c) {
  GenerationConfig d;
  c.max_tokens = j.value("max_tokens", d.max_tokens);
  c.greedy = j.value("greedy", d.greedy);
  c.temperature = j.value("temperature", d.temperature);
  c.seed = j.value("seed", d.seed);
  c.ret_logit_scale = j.value("ret_logit_scale", d.ret_logit_scale);
  c.allow_ret = j.value("allow_ret", d.allow_ret);
  c.feedback_retrieved_image = j.value("feedback_retrieved_image", d.feedback_retrieved_image);
}

namespace {

text::TokenId pick(std::vector<Real> logits, const GenerationConfig& config, num::Rng& rng) {
  if (config.greedy) {
    return static_cast<text::TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  }
  Real hi = -std::numeric_limits<Real>::infinity();
  for (auto& l : logits) {
    l /= config.temperature;
    hi = std::max(hi, l);
  }
  Real total = 0;
  for (auto& l : logits) {
    l = std::exp(l - hi);
    total += l;
  }
  Real u = rng.uniform() * total;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    u -= logits[i];
    if (u < 0) return static_cast<text::TokenId>(i);
  }
  return static_cast<text::TokenId>(logits.size() - 1);
}

}  // namespace

GenerationTrace generate_trace(const ground::GroundedModel& model, const data::InterleavedSequence& prompt,
                               const GenerationConfig& config, const RetrievalIndex& index) {
  config.validate();
  if (config.allow_ret && index.empty()) throw ContractError("generation: [RET] is allowed but the index is empty");
  num::NoGradScope no_grad;
  const auto& vocab = model.vocab;
  const auto k = model.adapters.config.k;
  ground::MixedSequence seq;
  if (prompt.items.empty()) {
    seq.tokens.push_back(vocab.bos());
  } else {
    seq = data::encode_interleaved(prompt, vocab, k, false);
  }
  check_length(model, seq, "generation prompt");

  GenerationTrace trace;
  std::vector<text::TokenId> pending;
  const auto flush = [&] {
    if (!pending.empty()) trace.output.add_text(vocab.detokenize(pending));
    pending.clear();
  };
  const auto max_len = model.lm.config().max_len;
  const auto ret = vocab.ret();
  num::Rng rng(config.seed);
  for (std::size_t step = 0; step < config.max_tokens && seq.size() < max_len; ++step) {
    const auto out = model.lm.forward(ground::embed_sequence(model.lm, model.adapters, seq, model.images),
                                      model.adapters.ret_embedding, true);
    const std::size_t v = out.logits.dim(1);
    const auto last = out.logits.data().subspan((seq.size() - 1) * v, v);
    std::vector<Real> logits(last.begin(), last.end());
    logits[static_cast<std::size_t>(ret)] =
        config.allow_ret ? logits[static_cast<std::size_t>(ret)] * config.ret_logit_scale
                         : -std::numeric_limits<Real>::infinity();
    const auto token = pick(std::move(logits), config, rng);
    if (token == vocab.eos()) break;
    trace.tokens.push_back(token);
    seq.tokens.push_back(token);
    if (token != ret) {
      pending.push_back(token);
      continue;
    }
    flush();
    const Tensor q = ground::text_retrieval_embedding(model.lm, model.adapters, seq, model.images);
    const auto best = index_topk(index, q.data(), 1);
    trace.output.add_image(best.front().id);
    if (config.feedback_retrieved_image && seq.size() + k <= max_len) {
      seq.prefixes.push_back({seq.size(), best.front().id});
      seq.tokens.insert(seq.tokens.end(), k, ground::kPrefixSlot);
    }
  }
  flush();
  return trace;
}

data::InterleavedSequence generate_interleaved(const ground::GroundedModel& model,
                                               const data::InterleavedSequence& prompt,
                                               const GenerationConfig& config, const RetrievalIndex& index) {
  return generate_trace(model, prompt, config, index).output;
}

}  // namespace vlg::retrieval
