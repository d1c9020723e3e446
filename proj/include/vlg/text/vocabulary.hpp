// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vlg::text {

using TokenId = std::int64_t;

// Whitespace vocabulary. Ids: 0 <pad>, 1 <s>, 2 </s>, 3 <unk>, then the
// corpus words, and [RET] as the final id.
class Vocabulary {
 public:
  static constexpr std::string_view kPad = "<pad>";
  static constexpr std::string_view kBos = "<s>";
  static constexpr std::string_view kEos = "</s>";
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kRet = "[RET]";

  // Words in the order given; duplicates and special strings are skipped.
  static Vocabulary from_words(std::span<const std::string> words);
  // Sorted set of every whitespace-separated word in `lines`.
  static Vocabulary build(std::span<const std::string> lines);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  TokenId pad() const { return 0; }
  TokenId bos() const { return 1; }
  TokenId eos() const { return 2; }
  TokenId unk() const { return 3; }
  TokenId ret() const { return static_cast<TokenId>(tokens_.size()) - 1; }

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<TokenId> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const TokenId> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace vlg::text
