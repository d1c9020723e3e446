// SPDX-License-Identifier: Apache-2.0
#include "vlg/data/examples.hpp"

#include <numeric>

#include "vlg/errors.hpp"

namespace vlg::data {

using ground::kPrefixSlot;
using ground::MixedSequence;
using text::TokenId;

TrainingExample build_caption_example(const CaptionedImage& pair, const text::Vocabulary& vocab,
                                      const ExampleOptions& options) {
  const auto ids = vocab.tokenize(pair.caption);
  if (ids.empty()) throw ContractError("caption of '" + pair.id + "' tokenizes to nothing");
  if (options.k == 0) throw ContractError("visual prefix length must be positive");
  TrainingExample ex;
  ex.pair_ids = {pair.id};
  auto& s = ex.sequence;
  s.tokens.assign(options.k, kPrefixSlot);
  s.scored.assign(options.k, false);
  s.prefixes.push_back({0, pair.image_id});
  s.tokens.insert(s.tokens.end(), ids.begin(), ids.end());
  s.scored.insert(s.scored.end(), ids.size(), true);
  if (options.append_ret) {
    s.tokens.push_back(vocab.ret());
    s.scored.push_back(true);
  }
  ex.ret_positions = {s.tokens.size() - 1};
  ex.retrieval_supervised = {true};
  return ex;
}

TrainingExample concat_augment(const TrainingExample& a, const TrainingExample& b, double coin, double p_concat,
                               bool retrieval_concat) {
  for (const auto& x : a.pair_ids) {
    for (const auto& y : b.pair_ids) {
      if (x == y) throw ContractError("concat_augment: pair '" + x + "' would be joined with itself");
    }
  }
  if (!(coin < p_concat)) return a;
  TrainingExample out = a;
  const std::size_t shift = a.sequence.size();
  auto& s = out.sequence;
  s.tokens.insert(s.tokens.end(), b.sequence.tokens.begin(), b.sequence.tokens.end());
  s.scored.insert(s.scored.end(), b.sequence.scored.begin(), b.sequence.scored.end());
  for (auto p : b.sequence.prefixes) {
    p.position += shift;
    s.prefixes.push_back(std::move(p));
  }
  out.pair_ids.insert(out.pair_ids.end(), b.pair_ids.begin(), b.pair_ids.end());
  for (auto r : b.ret_positions) out.ret_positions.push_back(r + shift);
  out.retrieval_supervised.assign(out.pair_ids.size(), retrieval_concat);
  out.retrieval_supervised.back() = true;
  return out;
}

TrainingExample concat_augment(const TrainingExample& a, const TrainingExample& b, num::Rng& rng, double p_concat,
                               bool retrieval_concat) {
  return concat_augment(a, b, rng.uniform(), p_concat, retrieval_concat);
}

MixedSequence retrieval_view(const TrainingExample& example, std::size_t segment, const text::Vocabulary& vocab,
                             bool with_context) {
  if (segment >= example.segments()) throw ContractError("retrieval_view: no segment " + std::to_string(segment));
  const auto& src = example.sequence;
  const std::size_t end = example.ret_positions[segment] + 1;
  const auto& own = src.prefixes.at(segment);
  MixedSequence out;
  std::size_t k = 0;
  while (own.position + k < src.size() && src.tokens[own.position + k] == kPrefixSlot) ++k;
  const std::size_t begin = with_context ? 0 : own.position;
  const bool drop_leading = own.position == begin;
  if (drop_leading) out.tokens.push_back(vocab.bos());
  for (std::size_t i = begin; i < end; ++i) {
    if (i >= own.position && i < own.position + k) continue;
    out.tokens.push_back(src.tokens[i]);
  }
  const std::size_t offset = drop_leading ? 1 : 0;
  for (const auto& p : src.prefixes) {
    if (p.position < begin || p.position >= end || p.position == own.position) continue;
    const std::size_t pos = p.position > own.position ? p.position - k : p.position;
    out.prefixes.push_back({pos - begin + offset, p.image_id});
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                   bool keep_partial) {
  if (batch_size < 2 && !keep_partial) {
    throw ContractError("contrastive batches need at least 2 examples, got batch size " + std::to_string(batch_size));
  }
  if (batch_size == 0) throw ContractError("batch size must be positive");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  num::Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    if (end - start < batch_size && !keep_partial) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

MixedSequence encode_interleaved(const InterleavedSequence& context, const text::Vocabulary& vocab, std::size_t k,
                                 bool append_ret) {
  if (context.items.empty()) throw ContractError("interleaved context is empty");
  MixedSequence s;
  if (std::holds_alternative<InterleavedSequence::Text>(context.items.front())) s.tokens.push_back(vocab.bos());
  for (const auto& item : context.items) {
    if (const auto* t = std::get_if<InterleavedSequence::Text>(&item)) {
      const auto ids = vocab.tokenize(t->text);
      s.tokens.insert(s.tokens.end(), ids.begin(), ids.end());
    } else {
      s.prefixes.push_back({s.tokens.size(), std::get<InterleavedSequence::ImageItem>(item).image_id});
      s.tokens.insert(s.tokens.end(), k, kPrefixSlot);
    }
  }
  if (append_ret) s.tokens.push_back(vocab.ret());
  if (s.tokens.empty()) throw ContractError("interleaved context encodes to nothing");
  return s;
}

}  // namespace vlg::data
