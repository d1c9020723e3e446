// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

namespace vlg::data {

struct Dialogue {
  // Earlier rounds first; the last round is the question being answered.
  std::vector<std::string> rounds;
  std::vector<std::string> candidates;
  std::size_t gold = 0;
};

struct CaptionedImage {
  std::string id;
  std::string caption;
  std::string image_id;
  std::string split;
  std::optional<std::string> story_id;
  std::optional<std::size_t> story_pos;
  std::optional<Dialogue> dialogue;
};

struct Story {
  std::string id;
  std::vector<const CaptionedImage*> items;  // ordered by story_pos
};

inline constexpr std::size_t kStoryLength = 5;

struct DatasetManifest {
  std::vector<CaptionedImage> records;

  const CaptionedImage& find(const std::string& id) const;
  DatasetManifest filter_split(const std::string& split) const;
  // Groups records by story id (first-appearance order). Each story must
  // have exactly positions 0..4.
  std::vector<Story> stories() const;
  std::vector<const CaptionedImage*> dialogues() const;

  // JSON lines, one record per line.
  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string serialize() const;
  static DatasetManifest deserialize(const std::string& text);
};

void to_json(nlohmann::json& j, const CaptionedImage& r);
void from_json(const nlohmann::json& j, CaptionedImage& r);

// Ordered text spans and image references.
struct InterleavedSequence {
  struct Text {
    std::string text;
  };
  struct ImageItem {
    std::string image_id;
  };
  using Item = std::variant<Text, ImageItem>;
  std::vector<Item> items;

  void add_text(std::string text) { items.emplace_back(Text{std::move(text)}); }
  void add_image(std::string image_id) { items.emplace_back(ImageItem{std::move(image_id)}); }
  std::size_t image_count() const;
};

// {"items": [{"text": ...} | {"image_id": ...}]}
nlohmann::ordered_json to_json(const InterleavedSequence& seq);
InterleavedSequence interleaved_from_json(const nlohmann::json& j);

}  // namespace vlg::data
