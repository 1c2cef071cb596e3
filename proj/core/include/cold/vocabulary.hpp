#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cold {

using TokenId = std::uint32_t;
using Tokens = std::vector<TokenId>;

// Word-level vocabulary. Ids are dense; the first four are reserved.
class Vocabulary {
 public:
  static constexpr TokenId bos = 0;
  static constexpr TokenId eos = 1;
  static constexpr TokenId sentence_end = 2;
  static constexpr TokenId unknown = 3;
  static constexpr std::size_t num_reserved = 4;

  static constexpr std::string_view bos_token = "<bos>";
  static constexpr std::string_view eos_token = "<eos>";
  static constexpr std::string_view sentence_end_token = ".";
  static constexpr std::string_view unknown_token = "<unk>";

  // Reserved tokens only.
  Vocabulary();
  // Reserved tokens followed by `words` in the given order. Duplicates and
  // reserved spellings are dropped.
  explicit Vocabulary(std::span<const std::string> words);

  // Reserved tokens followed by the distinct words of `words`, sorted.
  static Vocabulary sorted(std::span<const std::string> words);
  // Exact token list as stored in a checkpoint; validates the reserved prefix.
  static Vocabulary from_stored(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view word) const;
  bool contains(TokenId id) const { return id < tokens_.size(); }

  // Whitespace tokenization. Unknown words throw DomainError unless
  // `allow_unknown`, in which case they map to `unknown`.
  Tokens encode(std::string_view text, bool allow_unknown = false) const;
  Tokens encode(std::span<const std::string> words, bool allow_unknown = false) const;
  std::string decode(std::span<const TokenId> ids) const;
  std::vector<std::string> words(std::span<const TokenId> ids) const;

  // Throws DomainError naming the first id outside the vocabulary.
  void validate(std::span<const TokenId> ids, std::string_view what) const;

  // FNV-1a over the token list, each token terminated by a zero byte.
  std::uint64_t hash() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void append(const std::string& word);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace cold
