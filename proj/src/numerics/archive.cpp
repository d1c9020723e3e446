// SPDX-License-Identifier: Apache-2.0
#include "vlg/numerics/archive.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

#include "vlg/errors.hpp"

namespace vlg::num {

namespace {

constexpr char kMagic[] = "VLGTNSR1";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_tensor(std::string& out, const NamedTensor& t) {
  put_u32(out, static_cast<std::uint32_t>(t.name.size()));
  out += t.name;
  put_u32(out, static_cast<std::uint32_t>(t.tensor.rank()));
  for (auto d : t.tensor.shape()) put_u64(out, d);
  for (auto v : t.tensor.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t u64() { return take(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("tensor archive truncated at byte " + std::to_string(pos_));
  }
  std::uint64_t take(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& TensorArchive::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw FormatError("tensor archive has no tensor named '" + name + "'");
}

bool TensorArchive::contains(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

std::string TensorArchive::serialize() const {
  std::string out(kMagic, 8);
  const std::string head = header.dump();
  put_u64(out, head.size());
  out += head;
  put_u64(out, tensors.size());
  for (const auto& t : tensors) put_tensor(out, t);
  return out;
}

TensorArchive TensorArchive::deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(8) != std::string(kMagic, 8)) throw FormatError("not a tensor archive (bad magic)");
  TensorArchive archive;
  const auto head_len = r.u64();
  try {
    archive.header = nlohmann::json::parse(r.str(head_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("tensor archive header: ") + e.what());
  }
  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(r.u32());
    const auto rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    std::vector<Real> values(shape_numel(shape));
    for (auto& v : values) v = std::bit_cast<Real>(r.u64());
    t.tensor = Tensor(std::move(shape), std::move(values));
    archive.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw FormatError("tensor archive has trailing bytes");
  return archive;
}

void TensorArchive::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

TensorArchive TensorArchive::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

std::string digest(std::span<const NamedTensor> tensors) {
  std::string buf;
  for (const auto& t : tensors) put_tensor(buf, t);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx.get(), buf.data(), buf.size());
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[md[i] >> 4]);
    hex.push_back(kHex[md[i] & 0xF]);
  }
  return hex;
}

std::string digest(const NamedTensor& tensor) { return digest(std::span<const NamedTensor>(&tensor, 1)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingAssetError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MissingAssetError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace vlg::num
