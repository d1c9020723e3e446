// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vlg/data/manifest.hpp"
#include "vlg/grounding/adapters.hpp"
#include "vlg/numerics/random.hpp"
#include "vlg/text/vocabulary.hpp"

namespace vlg::data {

// One or more captioned images laid out as
// [prefix_1][caption_1][RET] ... [prefix_n][caption_n][RET].
struct TrainingExample {
  std::vector<std::string> pair_ids;  // source record of each segment
  ground::MixedSequence sequence;
  // Retrieval read-out position of each segment: its [RET], or the last
  // caption token when [RET] is not appended.
  std::vector<std::size_t> ret_positions;
  // Segments whose read-out is supervised by the contrastive losses.
  std::vector<bool> retrieval_supervised;

  std::size_t segments() const { return pair_ids.size(); }
};

struct ExampleOptions {
  std::size_t k = 1;
  bool append_ret = true;
};

TrainingExample build_caption_example(const CaptionedImage& pair, const text::Vocabulary& vocab,
                                      const ExampleOptions& options = {});

// Sequential concatenation of a then b when coin < p_concat, else a
// unchanged. Only b's read-out is supervised unless retrieval_concat.
TrainingExample concat_augment(const TrainingExample& a, const TrainingExample& b, double coin, double p_concat,
                               bool retrieval_concat = false);
TrainingExample concat_augment(const TrainingExample& a, const TrainingExample& b, num::Rng& rng, double p_concat,
                               bool retrieval_concat = false);

// Text seen by the retrieval objective for one segment, without the
// segment's own visual prefix. With context it runs from the start of the
// example to the segment's read-out; without, it is the segment alone. <s>
// is prepended when the result would otherwise start with text.
ground::MixedSequence retrieval_view(const TrainingExample& example, std::size_t segment,
                                     const text::Vocabulary& vocab, bool with_context = true);

// Seeded shuffle of [0, count) cut into batches of `batch_size`. The final
// partial batch is dropped unless keep_partial.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                   bool keep_partial = false);

// Model input for an interleaved context: text via the vocabulary, each
// image as k prefix slots, <s> first when the context opens with text, and
// [RET] appended at the end when requested.
ground::MixedSequence encode_interleaved(const InterleavedSequence& context, const text::Vocabulary& vocab,
                                         std::size_t k, bool append_ret);

}  // namespace vlg::data
