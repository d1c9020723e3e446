// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vlg/numerics/tensor.hpp"

namespace vlg::vision {

struct EncoderConfig {
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t channels = 3;
  std::size_t patch = 4;
  std::size_t hidden = 64;
  std::size_t out_dim = 48;  // m
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

// 8-bit pixels in height × width × channels order.
struct Raster {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

struct ImageRef {
  std::string id;
};

using Image = std::variant<Raster, ImageRef>;

// id → m-vector, in insertion order.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  const std::vector<std::string>& ids() const { return ids_; }

  void add(const std::string& id, std::vector<num::Real> embedding);
  const std::vector<num::Real>& get(const std::string& id) const;
  num::Tensor tensor(const std::string& id) const;

  // JSON lines: a {"dim": m} header, then {"id", "embedding"} records.
  static EmbeddingStore load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string serialize() const;
  static EmbeddingStore deserialize(const std::string& text);

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<std::vector<num::Real>> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Frozen patch encoder: patchify → linear → GELU → mean-pool → linear.
class VisualEncoder {
 public:
  explicit VisualEncoder(const EncoderConfig& config);

  const EncoderConfig& config() const { return config_; }
  std::size_t out_dim() const { return config_.out_dim; }

  num::Tensor encode(const Raster& raster) const;
  std::vector<num::NamedTensor> parameters() const;
  std::string digest() const;

 private:
  EncoderConfig config_;
  num::Tensor w_patch_, b_patch_, w_out_, b_out_;
};

// Rasters go through the encoder; references are read from the store verbatim.
num::Tensor encode_image(const Image& image, const VisualEncoder& encoder, const EmbeddingStore& store);

}  // namespace vlg::vision
