#pragma once

#include "vora/real.hpp"

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vora/ops.hpp"

VORA_BEGIN_NAMESPACE

/// Fixed word-level vocabulary. Ids are positions in the word list and are
/// stable across runs.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kImg = 3;

  explicit Vocab(std::vector<std::string> words);
  static const Vocab& builtin();

  std::size_t size() const { return words_.size(); }
  bool contains(std::string_view word) const;
  TokenId id(std::string_view word) const;  // throws on unknown words
  const std::string& word(TokenId id) const;

  /// Splits on single spaces.
  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

VORA_END_NAMESPACE
