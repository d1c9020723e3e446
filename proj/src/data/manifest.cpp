// SPDX-License-Identifier: Apache-2.0
#include "vlg/data/manifest.hpp"

#include <algorithm>
#include <sstream>

#include "vlg/errors.hpp"
#include "vlg/numerics/archive.hpp"

namespace vlg::data {

void to_json(nlohmann::json& j, const CaptionedImage& r) {
  j = nlohmann::json{{"id", r.id}, {"caption", r.caption}, {"image_id", r.image_id}};
  if (!r.split.empty()) j["split"] = r.split;
  if (r.story_id) j["story_id"] = *r.story_id;
  if (r.story_pos) j["story_pos"] = *r.story_pos;
  if (r.dialogue) {
    j["dialogue"] = {{"rounds", r.dialogue->rounds}, {"candidates", r.dialogue->candidates}, {"gold", r.dialogue->gold}};
  }
}

void from_json(const nlohmann::json& j, CaptionedImage& r) {
  r.id = j.at("id").get<std::string>();
  r.caption = j.at("caption").get<std::string>();
  r.image_id = j.at("image_id").get<std::string>();
  r.split = j.value("split", "");
  if (j.contains("story_id")) r.story_id = j.at("story_id").get<std::string>();
  if (j.contains("story_pos")) r.story_pos = j.at("story_pos").get<std::size_t>();
  if (j.contains("dialogue")) {
    const auto& d = j.at("dialogue");
    r.dialogue = Dialogue{d.at("rounds").get<std::vector<std::string>>(),
                          d.at("candidates").get<std::vector<std::string>>(), d.at("gold").get<std::size_t>()};
  }
}

const CaptionedImage& DatasetManifest::find(const std::string& id) const {
  for (const auto& r : records) {
    if (r.id == id) return r;
  }
  throw DataError("manifest has no record '" + id + "'");
}

DatasetManifest DatasetManifest::filter_split(const std::string& split) const {
  DatasetManifest out;
  for (const auto& r : records) {
    if (r.split == split) out.records.push_back(r);
  }
  return out;
}

std::vector<Story> DatasetManifest::stories() const {
  std::vector<Story> out;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& r : records) {
    if (!r.story_id) continue;
    auto [it, fresh] = index.emplace(*r.story_id, out.size());
    if (fresh) out.push_back(Story{*r.story_id, {}});
    out[it->second].items.push_back(&r);
  }
  for (auto& s : out) {
    std::vector<const CaptionedImage*> ordered(kStoryLength, nullptr);
    for (const auto* r : s.items) {
      if (!r->story_pos || *r->story_pos >= kStoryLength || ordered[*r->story_pos]) {
        throw DataError("story '" + s.id + "' has a missing, duplicate or out-of-range position");
      }
      ordered[*r->story_pos] = r;
    }
    if (s.items.size() != kStoryLength) {
      throw DataError("story '" + s.id + "' has " + std::to_string(s.items.size()) + " items, expected 5");
    }
    s.items = std::move(ordered);
  }
  return out;
}

std::vector<const CaptionedImage*> DatasetManifest::dialogues() const {
  std::vector<const CaptionedImage*> out;
  for (const auto& r : records) {
    if (r.dialogue) out.push_back(&r);
  }
  return out;
}

std::string DatasetManifest::serialize() const {
  std::string out;
  for (const auto& r : records) out += nlohmann::json(r).dump() + "\n";
  return out;
}

DatasetManifest DatasetManifest::deserialize(const std::string& text) {
  DatasetManifest m;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.records.push_back(nlohmann::json::parse(line).get<CaptionedImage>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return m;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) { return deserialize(num::read_file(path)); }

void DatasetManifest::save(const std::filesystem::path& path) const { num::write_file(path, serialize()); }

std::size_t InterleavedSequence::image_count() const {
  return static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(), [](const Item& i) { return std::holds_alternative<ImageItem>(i); }));
}

nlohmann::ordered_json to_json(const InterleavedSequence& seq) {
  nlohmann::ordered_json items = nlohmann::ordered_json::array();
  for (const auto& item : seq.items) {
    if (const auto* t = std::get_if<InterleavedSequence::Text>(&item)) {
      items.push_back({{"text", t->text}});
    } else {
      items.push_back({{"image_id", std::get<InterleavedSequence::ImageItem>(item).image_id}});
    }
  }
  nlohmann::ordered_json j;
  j["items"] = std::move(items);
  return j;
}

InterleavedSequence interleaved_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("items") || !j.at("items").is_array()) {
    throw FormatError("interleaved sequence must be {\"items\": [...]}");
  }
  InterleavedSequence seq;
  for (const auto& item : j.at("items")) {
    if (item.contains("text")) {
      seq.add_text(item.at("text").get<std::string>());
    } else if (item.contains("image_id")) {
      seq.add_image(item.at("image_id").get<std::string>());
    } else {
      throw FormatError("interleaved item needs \"text\" or \"image_id\": " + item.dump());
    }
  }
  return seq;
}

}  // namespace vlg::data
