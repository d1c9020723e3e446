// SPDX-License-Identifier: Apache-2.0
#include "vlg/vision/encoder.hpp"

#include <cmath>
#include <sstream>

#include "vlg/errors.hpp"
#include "vlg/numerics/archive.hpp"
#include "vlg/numerics/ops.hpp"
#include "vlg/numerics/random.hpp"
#include "vlg/numerics/tape.hpp"

namespace vlg::vision {

using num::Real;
using num::Shape;
using num::Tensor;

void EncoderConfig::validate() const {
  if (height == 0 || width == 0 || channels == 0 || patch == 0 || hidden == 0 || out_dim == 0) {
    throw ConfigError("EncoderConfig: sizes must be positive");
  }
  if (height % patch != 0 || width % patch != 0) {
    throw ConfigError("EncoderConfig: patch " + std::to_string(patch) + " does not tile " + std::to_string(height) +
                      "x" + std::to_string(width));
  }
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = nlohmann::json{{"height", c.height}, {"width", c.width},     {"channels", c.channels}, {"patch", c.patch},
                     {"hidden", c.hidden}, {"out_dim", c.out_dim}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.channels = j.value("channels", c.channels);
  c.patch = j.value("patch", c.patch);
  c.hidden = j.value("hidden", c.hidden);
  c.out_dim = j.value("out_dim", c.out_dim);
  c.seed = j.value("seed", c.seed);
}

void EmbeddingStore::add(const std::string& id, std::vector<Real> embedding) {
  if (dim_ == 0) dim_ = embedding.size();
  if (embedding.size() != dim_) {
    throw FormatError("embedding '" + id + "' has dimension " + std::to_string(embedding.size()) +
                      ", store declares " + std::to_string(dim_));
  }
  if (!index_.emplace(id, ids_.size()).second) throw FormatError("embedding id '" + id + "' appears twice");
  ids_.push_back(id);
  vectors_.push_back(std::move(embedding));
}

const std::vector<Real>& EmbeddingStore::get(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw MissingAssetError("no embedding stored for image '" + id + "'");
  return vectors_[it->second];
}

Tensor EmbeddingStore::tensor(const std::string& id) const { return Tensor(Shape{dim_}, get(id)); }

std::string EmbeddingStore::serialize() const {
  std::string out = nlohmann::json{{"dim", dim_}}.dump() + "\n";
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    out += nlohmann::json{{"id", ids_[i]}, {"embedding", vectors_[i]}}.dump() + "\n";
  }
  return out;
}

EmbeddingStore EmbeddingStore::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  EmbeddingStore store;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("embedding store line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!header) {
      if (!j.contains("dim")) throw FormatError("embedding store must start with a {\"dim\": m} header");
      store.dim_ = j.at("dim").get<std::size_t>();
      header = true;
      continue;
    }
    if (!j.contains("id") || !j.contains("embedding")) {
      throw FormatError("embedding store line " + std::to_string(line_no) + " lacks id or embedding");
    }
    store.add(j.at("id").get<std::string>(), j.at("embedding").get<std::vector<Real>>());
  }
  return store;
}

EmbeddingStore EmbeddingStore::load(const std::filesystem::path& path) { return deserialize(num::read_file(path)); }

void EmbeddingStore::save(const std::filesystem::path& path) const { num::write_file(path, serialize()); }

VisualEncoder::VisualEncoder(const EncoderConfig& config) : config_(config) {
  config_.validate();
  num::Rng rng(config_.seed);
  const std::size_t patch_len = config_.patch * config_.patch * config_.channels;
  const Real s1 = 1.0 / std::sqrt(static_cast<Real>(patch_len));
  const Real s2 = 1.0 / std::sqrt(static_cast<Real>(config_.hidden));
  w_patch_ = num::uniform_tensor(Shape{patch_len, config_.hidden}, rng, -s1, s1);
  b_patch_ = num::uniform_tensor(Shape{config_.hidden}, rng, -s1, s1);
  w_out_ = num::uniform_tensor(Shape{config_.hidden, config_.out_dim}, rng, -s2, s2);
  b_out_ = num::uniform_tensor(Shape{config_.out_dim}, rng, -s2, s2);
}

Tensor VisualEncoder::encode(const Raster& raster) const {
  const auto& c = config_;
  if (raster.height != c.height || raster.width != c.width || raster.channels != c.channels ||
      raster.pixels.size() != c.height * c.width * c.channels) {
    throw ContractError("raster " + std::to_string(raster.height) + "x" + std::to_string(raster.width) + "x" +
                        std::to_string(raster.channels) + " does not match encoder input " +
                        std::to_string(c.height) + "x" + std::to_string(c.width) + "x" + std::to_string(c.channels));
  }
  num::NoGradScope no_grad;
  const std::size_t ph = c.height / c.patch, pw = c.width / c.patch;
  const std::size_t patch_len = c.patch * c.patch * c.channels;
  Tensor patches(Shape{ph * pw, patch_len});
  for (std::size_t py = 0; py < ph; ++py) {
    for (std::size_t px = 0; px < pw; ++px) {
      const std::size_t row = py * pw + px;
      std::size_t col = 0;
      for (std::size_t y = 0; y < c.patch; ++y) {
        for (std::size_t x = 0; x < c.patch; ++x) {
          for (std::size_t ch = 0; ch < c.channels; ++ch) {
            const std::size_t src = ((py * c.patch + y) * c.width + px * c.patch + x) * c.channels + ch;
            patches[row * patch_len + col++] = raster.pixels[src] / 255.0 - 0.5;
          }
        }
      }
    }
  }
  Tensor h = num::gelu(num::add_bias(num::matmul(patches, w_patch_), b_patch_));
  Tensor pool = Tensor::filled(Shape{1, ph * pw}, 1.0 / static_cast<Real>(ph * pw));
  Tensor out = num::add_bias(num::matmul(num::matmul(pool, h), w_out_), b_out_);
  return num::reshape(out, Shape{c.out_dim});
}

std::vector<num::NamedTensor> VisualEncoder::parameters() const {
  return {{"w_patch", w_patch_}, {"b_patch", b_patch_}, {"w_out", w_out_}, {"b_out", b_out_}};
}

std::string VisualEncoder::digest() const { return num::digest(parameters()); }

Tensor encode_image(const Image& image, const VisualEncoder& encoder, const EmbeddingStore& store) {
  if (const auto* r = std::get_if<Raster>(&image)) return encoder.encode(*r);
  const auto& ref = std::get<ImageRef>(image);
  Tensor v = store.tensor(ref.id);
  if (v.numel() != encoder.out_dim()) {
    throw DimensionError("stored embedding '" + ref.id + "' has dimension " + std::to_string(v.numel()) +
                         ", encoder emits " + std::to_string(encoder.out_dim()));
  }
  return v;
}

}  // namespace vlg::vision
