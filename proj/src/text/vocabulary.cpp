// SPDX-License-Identifier: Apache-2.0
#include "vlg/text/vocabulary.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "vlg/errors.hpp"

namespace vlg::text {

namespace {

bool is_special(std::string_view w) {
  return w == Vocabulary::kPad || w == Vocabulary::kBos || w == Vocabulary::kEos || w == Vocabulary::kUnk ||
         w == Vocabulary::kRet;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream is{std::string(text)};
  std::string w;
  while (is >> w) words.push_back(std::move(w));
  return words;
}

}  // namespace

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 5 || tokens[0] != kPad || tokens[1] != kBos || tokens[2] != kEos || tokens[3] != kUnk ||
      tokens.back() != kRet) {
    throw FormatError("vocabulary must start with <pad> <s> </s> <unk> and end with [RET]");
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<TokenId>(i)).second) {
      throw FormatError("vocabulary token '" + v.tokens_[i] + "' appears twice");
    }
  }
  return v;
}

Vocabulary Vocabulary::from_words(std::span<const std::string> words) {
  std::vector<std::string> tokens{std::string(kPad), std::string(kBos), std::string(kEos), std::string(kUnk)};
  std::set<std::string> seen;
  for (const auto& w : words) {
    if (is_special(w) || !seen.insert(w).second) continue;
    tokens.push_back(w);
  }
  tokens.emplace_back(kRet);
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::build(std::span<const std::string> lines) {
  std::set<std::string> words;
  for (const auto& line : lines) {
    for (auto& w : split_words(line)) words.insert(std::move(w));
  }
  std::vector<std::string> ordered(words.begin(), words.end());
  return from_words(ordered);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingAssetError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw MissingAssetError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk() : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("token id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::tokenize(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += token(ids[i]);
  }
  return out;
}

}  // namespace vlg::text
