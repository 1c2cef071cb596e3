#include "cold/vocabulary.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "cold/error.hpp"

namespace cold {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Vocabulary::Vocabulary() {
  for (auto w : {bos_token, eos_token, sentence_end_token, unknown_token}) {
    append(std::string(w));
  }
}

Vocabulary::Vocabulary(std::span<const std::string> words) : Vocabulary() {
  for (const auto& w : words) {
    if (!index_.contains(w)) {
      append(w);
    }
  }
}

Vocabulary Vocabulary::sorted(std::span<const std::string> words) {
  std::set<std::string> distinct(words.begin(), words.end());
  std::vector<std::string> ordered(distinct.begin(), distinct.end());
  return Vocabulary(ordered);
}

Vocabulary Vocabulary::from_stored(std::vector<std::string> tokens) {
  Vocabulary v;
  if (tokens.size() < num_reserved) {
    throw FormatError("vocabulary has fewer entries than the reserved tokens");
  }
  for (std::size_t i = 0; i < num_reserved; ++i) {
    if (tokens[i] != v.tokens_[i]) {
      throw FormatError("vocabulary reserved token " + std::to_string(i) + " is '" + tokens[i] + "', expected '" +
                        v.tokens_[i] + "'");
    }
  }
  for (std::size_t i = num_reserved; i < tokens.size(); ++i) {
    if (v.index_.contains(tokens[i])) {
      throw FormatError("duplicate vocabulary entry '" + tokens[i] + "'");
    }
    v.append(tokens[i]);
  }
  return v;
}

void Vocabulary::append(const std::string& word) {
  index_.emplace(word, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(word);
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) {
    throw DomainError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(size()));
  }
  return tokens_[id];
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) {
    return std::nullopt;
  }
  return it->second;
}

Tokens Vocabulary::encode(std::string_view text, bool allow_unknown) const {
  std::istringstream is{std::string(text)};
  std::vector<std::string> words;
  for (std::string w; is >> w;) {
    words.push_back(w);
  }
  return encode(words, allow_unknown);
}

Tokens Vocabulary::encode(std::span<const std::string> words, bool allow_unknown) const {
  Tokens ids;
  ids.reserve(words.size());
  for (const auto& w : words) {
    if (auto id = find(w)) {
      ids.push_back(*id);
    } else if (allow_unknown) {
      ids.push_back(unknown);
    } else {
      throw DomainError("word '" + w + "' is not in the vocabulary");
    }
  }
  return ids;
}

std::vector<std::string> Vocabulary::words(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    out.push_back(token(id));
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (!out.empty()) {
      out += ' ';
    }
    out += token(id);
  }
  return out;
}

void Vocabulary::validate(std::span<const TokenId> ids, std::string_view what) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tokens_.size()) {
      throw DomainError(std::string(what) + ": token id " + std::to_string(ids[i]) + " at position " +
                        std::to_string(i) + " outside vocabulary of size " + std::to_string(size()));
    }
  }
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) {
    h = fnv1a(t, h);
    h = fnv1a(std::string_view("\0", 1), h);
  }
  return h;
}

}  // namespace cold
