// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlg/data/manifest.hpp"
#include "vlg/text/vocabulary.hpp"
#include "vlg/vision/encoder.hpp"

namespace vlg::data {

struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::size_t n_pairs = 1000;
  std::size_t n_stories = 100;
  std::size_t n_dialogues = 100;
  // Text-only stories added to the language-model corpus.
  std::size_t n_text_stories = 400;
  std::size_t themes = 8;
  std::size_t objects = 6;
  std::size_t colors = 4;
  std::size_t dim = 48;  // m
  // Scale of the isotropic noise added to each image embedding, relative to
  // a single unit attribute direction.
  double noise = 0.3;
  // Share of training captions that leave out the theme ("a red cup").
  double short_caption_fraction = 0.5;
  std::size_t candidates = 100;

  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);

// Latent attributes behind one image.
struct Attributes {
  std::size_t theme = 0;
  std::size_t object = 0;
  std::size_t color = 0;
};

struct SyntheticCorpus {
  DatasetManifest manifest;  // splits: "train", "story", "dialogue"
  vision::EmbeddingStore store;
  std::vector<std::string> text_corpus;  // captions, then one line per text story or dialogue
  std::vector<Attributes> attributes;    // parallel to manifest.records
};

// Word pools the attributes draw from.
const std::vector<std::string>& theme_words();
const std::vector<std::string>& object_words();
const std::vector<std::string>& color_words();

// "a {color} {object} at the {theme}"
std::string describe(const Attributes& a);

// Image embeddings are the sum of one unit direction per attribute plus
// noise, so a caption's attributes determine its image up to noise. Story
// items share a theme that the fifth caption leaves out. Each dialogue has
// `candidates` distinct descriptions of which exactly the gold one matches
// its image.
SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec);

// Every word of the text corpus and of the manifest's captions, rounds and
// candidates.
text::Vocabulary corpus_vocabulary(const SyntheticCorpus& corpus);

}  // namespace vlg::data
