// SPDX-License-Identifier: Apache-2.0
#include "vlg/data/synthetic.hpp"

#include <cmath>
#include <set>

#include "vlg/errors.hpp"
#include "vlg/numerics/random.hpp"

namespace vlg::data {

namespace {

std::string padded(std::size_t n, int width) {
  std::string s = std::to_string(n);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

std::vector<double> unit_direction(num::Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

struct Directions {
  std::vector<std::vector<double>> theme, object, color;
};

class Builder {
 public:
  Builder(const SyntheticSpec& spec) : spec_(spec), rng_(spec.seed) {
    for (std::size_t i = 0; i < spec.themes; ++i) dirs_.theme.push_back(unit_direction(rng_, spec.dim));
    for (std::size_t i = 0; i < spec.objects; ++i) dirs_.object.push_back(unit_direction(rng_, spec.dim));
    for (std::size_t i = 0; i < spec.colors; ++i) dirs_.color.push_back(unit_direction(rng_, spec.dim));
    corpus_.store = vision::EmbeddingStore(spec.dim);
  }

  Attributes random_attributes() {
    return {static_cast<std::size_t>(rng_.below(spec_.themes)), static_cast<std::size_t>(rng_.below(spec_.objects)),
            static_cast<std::size_t>(rng_.below(spec_.colors))};
  }

  Attributes combo(std::size_t index) const {
    const std::size_t per_theme = spec_.objects * spec_.colors;
    return {index / per_theme, (index % per_theme) / spec_.colors, index % spec_.colors};
  }

  std::size_t combo_count() const { return spec_.themes * spec_.objects * spec_.colors; }

  void add_record(CaptionedImage record, const Attributes& a) {
    std::vector<double> v(spec_.dim);
    const double sigma = spec_.noise / std::sqrt(static_cast<double>(spec_.dim));
    for (std::size_t i = 0; i < spec_.dim; ++i) {
      v[i] = dirs_.theme[a.theme][i] + dirs_.object[a.object][i] + dirs_.color[a.color][i] + sigma * rng_.normal();
    }
    corpus_.store.add(record.image_id, std::move(v));
    corpus_.manifest.records.push_back(std::move(record));
    corpus_.attributes.push_back(a);
  }

  num::Rng& rng() { return rng_; }
  SyntheticCorpus& corpus() { return corpus_; }

 private:
  const SyntheticSpec& spec_;
  num::Rng rng_;
  Directions dirs_;
  SyntheticCorpus corpus_;
};

std::string short_description(const Attributes& a) {
  return "a " + color_words()[a.color] + " " + object_words()[a.object];
}

std::vector<std::string> dialogue_rounds(const Attributes& a) {
  return {short_description(a), "where is it ? at the " + theme_words()[a.theme], "what is in the picture ?"};
}

}  // namespace

const std::vector<std::string>& theme_words() {
  static const std::vector<std::string> w{"beach", "forest", "city",  "farm",  "desert", "mountain",
                                          "harbor", "garden", "lake", "market", "river", "park"};
  return w;
}

const std::vector<std::string>& object_words() {
  static const std::vector<std::string> w{"dog", "cat", "bird", "horse", "car", "boat", "kite", "bike", "ball", "tree"};
  return w;
}

const std::vector<std::string>& color_words() {
  static const std::vector<std::string> w{"red", "blue", "green", "yellow", "white", "black", "brown", "orange"};
  return w;
}

std::string describe(const Attributes& a) { return short_description(a) + " at the " + theme_words()[a.theme]; }

void SyntheticSpec::validate() const {
  if (themes == 0 || objects == 0 || colors == 0 || dim == 0) throw ConfigError("synthetic spec: sizes must be positive");
  if (themes > theme_words().size() || objects > object_words().size() || colors > color_words().size()) {
    throw ConfigError("synthetic spec: asked for " + std::to_string(themes) + " themes, " + std::to_string(objects) +
                      " objects, " + std::to_string(colors) + " colors; word pools hold " +
                      std::to_string(theme_words().size()) + ", " + std::to_string(object_words().size()) + ", " +
                      std::to_string(color_words().size()));
  }
  if (n_dialogues > 0 && (candidates == 0 || candidates > themes * objects * colors)) {
    throw ConfigError("synthetic spec: " + std::to_string(candidates) + " distinct candidates need as many attribute "
                      "combinations, only " + std::to_string(themes * objects * colors) + " exist");
  }
  if (!(noise >= 0)) throw ConfigError("synthetic spec: noise must be non-negative");
  if (!(short_caption_fraction >= 0 && short_caption_fraction <= 1)) {
    throw ConfigError("synthetic spec: short_caption_fraction must lie in [0, 1]");
  }
}

void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = nlohmann::json{{"seed", s.seed},       {"n_pairs", s.n_pairs},       {"n_stories", s.n_stories},
                     {"n_dialogues", s.n_dialogues}, {"n_text_stories", s.n_text_stories}, {"themes", s.themes},
                     {"objects", s.objects}, {"colors", s.colors},         {"dim", s.dim},
                     {"noise", s.noise},     {"candidates", s.candidates},
                     {"short_caption_fraction", s.short_caption_fraction}};
}

void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  s.seed = j.value("seed", s.seed);
  s.n_pairs = j.value("n_pairs", s.n_pairs);
  s.n_stories = j.value("n_stories", s.n_stories);
  s.n_dialogues = j.value("n_dialogues", s.n_dialogues);
  s.n_text_stories = j.value("n_text_stories", s.n_text_stories);
  s.themes = j.value("themes", s.themes);
  s.objects = j.value("objects", s.objects);
  s.colors = j.value("colors", s.colors);
  s.dim = j.value("dim", s.dim);
  s.noise = j.value("noise", s.noise);
  s.candidates = j.value("candidates", s.candidates);
  s.short_caption_fraction = j.value("short_caption_fraction", s.short_caption_fraction);
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  spec.validate();
  Builder b(spec);
  auto& rng = b.rng();

  // Training pairs walk through shuffled rounds of every attribute
  // combination, so the first pairs never repeat a caption.
  std::vector<std::size_t> combos;
  for (std::size_t i = 0; i < spec.n_pairs; ++i) {
    if (i % b.combo_count() == 0) {
      combos.resize(b.combo_count());
      for (std::size_t c = 0; c < combos.size(); ++c) combos[c] = c;
      rng.shuffle(combos);
    }
    const auto a = b.combo(combos[i % b.combo_count()]);
    const auto n = padded(i, 5);
    const auto caption = rng.uniform() < spec.short_caption_fraction ? short_description(a) : describe(a);
    b.add_record({"train-" + n, caption, "img-train-" + n, "train", {}, {}, {}}, a);
  }

  for (std::size_t s = 0; s < spec.n_stories; ++s) {
    const auto sid = "story-" + padded(s, 4);
    const auto theme = static_cast<std::size_t>(rng.below(spec.themes));
    for (std::size_t pos = 0; pos < kStoryLength; ++pos) {
      Attributes a = b.random_attributes();
      a.theme = theme;
      const auto caption = pos + 1 < kStoryLength ? describe(a) : short_description(a);
      const auto id = sid + "-" + std::to_string(pos);
      b.add_record({id, caption, "img-" + id, "story", sid, pos, {}}, a);
    }
  }

  for (std::size_t d = 0; d < spec.n_dialogues; ++d) {
    const Attributes a = b.random_attributes();
    const std::size_t gold_combo = (a.theme * spec.objects + a.object) * spec.colors + a.color;
    std::vector<std::size_t> others;
    for (std::size_t c = 0; c < b.combo_count(); ++c) {
      if (c != gold_combo) others.push_back(c);
    }
    rng.shuffle(others);
    std::vector<std::size_t> chosen(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(spec.candidates - 1));
    chosen.push_back(gold_combo);
    rng.shuffle(chosen);
    Dialogue dialogue;
    dialogue.rounds = dialogue_rounds(a);
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      dialogue.candidates.push_back(describe(b.combo(chosen[i])));
      if (chosen[i] == gold_combo) dialogue.gold = i;
    }
    const auto id = "dialog-" + padded(d, 4);
    b.add_record({id, describe(a), "img-" + id, "dialogue", {}, {}, dialogue}, a);
  }

  auto& corpus = b.corpus();
  for (const auto& r : corpus.manifest.records) {
    if (r.split == "train") corpus.text_corpus.push_back(r.caption);
  }
  // A text story is one line, joined the way interleaved contexts are.
  for (std::size_t s = 0; s < spec.n_text_stories; ++s) {
    const auto theme = static_cast<std::size_t>(rng.below(spec.themes));
    std::string line;
    for (std::size_t pos = 0; pos < kStoryLength; ++pos) {
      Attributes a = b.random_attributes();
      a.theme = theme;
      line += pos + 1 < kStoryLength ? describe(a) + " " : short_description(a);
    }
    corpus.text_corpus.push_back(line);
  }
  for (std::size_t d = 0; d < spec.n_text_stories / 4; ++d) {
    const Attributes a = b.random_attributes();
    std::string line;
    for (const auto& r : dialogue_rounds(a)) line += r + " ";
    corpus.text_corpus.push_back(line + describe(a));
  }
  return std::move(corpus);
}

text::Vocabulary corpus_vocabulary(const SyntheticCorpus& corpus) {
  std::vector<std::string> lines = corpus.text_corpus;
  for (const auto& r : corpus.manifest.records) {
    lines.push_back(r.caption);
    if (r.dialogue) {
      lines.insert(lines.end(), r.dialogue->rounds.begin(), r.dialogue->rounds.end());
      lines.insert(lines.end(), r.dialogue->candidates.begin(), r.dialogue->candidates.end());
    }
  }
  return text::Vocabulary::build(lines);
}

}  // namespace vlg::data
