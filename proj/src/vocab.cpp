#include "vora/vocab.hpp"

#include <sstream>

#include "vora/errors.hpp"

VORA_BEGIN_NAMESPACE

Vocab::Vocab(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<TokenId>(i)).second) {
      throw ConfigError("duplicate vocabulary word '" + words_[i] + "'");
    }
  }
}

const Vocab& Vocab::builtin() {
  static const Vocab vocab = [] {
    std::vector<std::string> w = {"<pad>", "<bos>", "<eos>", "<img>"};
    for (const char* s : {"red", "green", "blue", "yellow", "purple", "orange", "white", "cyan"}) w.emplace_back(s);
    for (const char* s : {"circle", "square", "triangle"}) w.emplace_back(s);
    for (const char* s : {"small", "large"}) w.emplace_back(s);
    for (const char* s : {"left", "of", "above", "and", "a"}) w.emplace_back(s);
    for (const char* s : {"one", "two", "three", "four", "five", "six"}) w.emplace_back(s);
    for (const char* s : {"describe", "the", "image", "what", "is", "plus", "minus", "times", "repeat:",
                          "reverse:", "count:"}) {
      w.emplace_back(s);
    }
    for (int n = 0; n < 100; ++n) w.push_back(std::to_string(n));
    return Vocab(std::move(w));
  }();
  return vocab;
}

bool Vocab::contains(std::string_view word) const { return index_.contains(std::string(word)); }

TokenId Vocab::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) throw ConfigError("word '" + std::string(word) + "' is not in the vocabulary");
  return it->second;
}

const std::string& Vocab::word(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw ConfigError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return words_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find(' ', pos);
    if (end == std::string_view::npos) end = text.size();
    if (end > pos) ids.push_back(id(text.substr(pos, end - pos)));
    pos = end + 1;
  }
  return ids;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::ostringstream os;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) os << ' ';
    os << word(ids[i]);
  }
  return os.str();
}

VORA_END_NAMESPACE
