#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cold/random.hpp"
#include "cold/vocabulary.hpp"

namespace cold {

using Sentence = std::vector<std::string>;

// A sentence pattern: each slot is either a literal word or a category
// reference written as "@category".
struct SentenceTemplate {
  std::string role;
  std::vector<std::string> slots;
};

// Entities shared by the sentences of one story.
struct StoryCast {
  std::string name;
  std::string pronoun;
  std::string place;
  std::string animal;
  std::string object;
  std::string food;
  std::string adjective;
  std::string feeling;
  std::string action;
  std::string time;
};

// Closed template grammar for short stories. Every story is an opening, an
// event introducing an animal or object, an optional action on it and an
// ending that refers back to it.
class StoryGrammar {
 public:
  StoryGrammar();

  const std::map<std::string, std::vector<std::string>>& categories() const { return categories_; }
  const std::vector<SentenceTemplate>& templates() const { return templates_; }
  // Every word the grammar can emit, in first-use order.
  std::vector<std::string> all_words() const;

  StoryCast sample_cast(Rng& rng) const;
  // Fills template `index` using `cast`.
  Sentence realize(std::size_t index, const StoryCast& cast) const;
  std::vector<std::size_t> templates_with_role(std::string_view role) const;

  // Story as a list of sentences. `with_action` controls the optional
  // third sentence.
  std::vector<Sentence> sample_story(Rng& rng, const StoryCast& cast, bool with_action) const;
  std::vector<Sentence> sample_story(Rng& rng) const;

  // True when `words` (including the final ".") is a whole sentence of some
  // template, ignoring cross-sentence bindings.
  bool accepts(std::span<const std::string> words) const;
  // True when `words` can be extended to an accepted sentence.
  bool accepts_prefix(std::span<const std::string> words) const;

 private:
  bool slot_matches(const std::string& slot, const std::string& word) const;

  std::map<std::string, std::vector<std::string>> categories_;
  std::vector<SentenceTemplate> templates_;
};

const StoryGrammar& story_grammar();

// Plain-text corpus: one whitespace-tokenized sequence per line, with an
// optional leading provenance line starting with '#'.
struct TextCorpus {
  std::string provenance;
  std::vector<std::vector<std::string>> lines;

  std::size_t token_count() const;
};

// Token-id corpus; every sequence ends with the end-of-sequence id.
struct Corpus {
  std::string provenance;
  std::vector<Tokens> sequences;

  std::size_t token_count() const;
};

inline constexpr std::size_t kDefaultCorpusSequences = 1960;

TextCorpus generate_story_corpus(std::uint64_t seed, std::size_t num_sequences = kDefaultCorpusSequences);

void write_corpus(const std::filesystem::path& path, const TextCorpus& corpus);
TextCorpus read_corpus(const std::filesystem::path& path);
std::string corpus_text(const TextCorpus& corpus);

// Reserved tokens followed by the sorted distinct words of the corpus.
Vocabulary build_vocabulary(const TextCorpus& corpus);
Corpus encode_corpus(const TextCorpus& corpus, const Vocabulary& vocab);
std::uint64_t corpus_hash(const Corpus& corpus);

// Deterministic split: every `period`-th sequence goes to the held-out part.
std::pair<Corpus, Corpus> split_holdout(const Corpus& corpus, std::size_t period = 10);

// Reverses each sequence, keeping the end-of-sequence id last.
Corpus reversed(const Corpus& corpus);

}  // namespace cold
