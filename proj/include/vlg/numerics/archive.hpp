// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlg/numerics/tensor.hpp"

namespace vlg::num {

// Single-file container: a JSON header followed by named tensor blobs.
//
//   bytes 0..7   magic "VLGTNSR1"
//   u64          header length, then the header as compact JSON (sorted keys)
//   u64          tensor count
//   per tensor   u32 name length, name, u32 rank, rank×u64 dims,
//                numel×f64 values
//
// All integers and floats are little-endian.
struct TensorArchive {
  nlohmann::json header = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::string serialize() const;
  static TensorArchive deserialize(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);
};

// Hex SHA-256 over names, shapes and little-endian values, in order.
std::string digest(std::span<const NamedTensor> tensors);
std::string digest(const NamedTensor& tensor);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace vlg::num
