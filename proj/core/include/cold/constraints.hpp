#pragma once

// Differentiable constraint functions over soft sequences.
//
// Each constraint can be built on a tape for a batch of B soft sequences of
// equal length T, stacked chain-major into one (B*T) x V node: row b*T + t
// holds position t of sequence b. Building returns a B x 1 node of
// per-sequence values, so independent chains share one graph and one
// backward pass.

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "cold/language_model.hpp"
#include "cold/numerics.hpp"
#include "cold/soft_sequence.hpp"

namespace cold {

struct BatchLayout {
  std::size_t batch = 1;
  std::size_t length = 0;

  // Rows holding position t of every sequence.
  std::vector<std::size_t> rows_at(std::size_t t) const;
};

// Sub-graphs shared by constraints built on one tape over the same rows:
// row softmaxes and recurrent runs over the soft rows under the same model
// and hard prefix.
class BuildCache {
 public:
  explicit BuildCache(Tape& tape) : tape_(&tape) {}

  Var softmax(Var rows, real tau);
  Var log_softmax(Var rows);
  const LmGraph& graph(const LanguageModel& lm);
  // States after <bos> + prefix (element 0) and after each of the first
  // `count` soft rows, visited last to first when `reverse`.
  std::span<const Var> soft_states(const LanguageModel& lm, Var rows, const BatchLayout& layout, const Tokens& prefix,
                                   bool reverse, real tau, std::size_t count);

 private:
  struct RunKey {
    const LanguageModel* lm;
    std::size_t rows;
    Tokens prefix;
    bool reverse;
    real tau;
    auto operator<=>(const RunKey&) const = default;
  };

  Tape* tape_;
  std::map<std::pair<std::size_t, real>, Var> softmax_;
  std::map<std::size_t, Var> log_softmax_;
  std::map<const LanguageModel*, std::unique_ptr<LmGraph>> graphs_;
  std::map<RunKey, std::vector<Var>> runs_;
};

enum class ConstraintKind { fluency_forward, fluency_reverse, future_prediction, ngram_similarity };

const char* constraint_kind_name(ConstraintKind kind);

class ConstraintFn {
 public:
  // sum_t sum_v p_fwd(v | <bos>, left_context, y_<t) * log softmax(y_t)(v).
  // With `detach_reference` the LM distributions are treated as constants.
  static ConstraintFn fluency_forward(std::shared_ptr<const LanguageModel> lm, Tokens left_context, real tau = 1,
                                      bool detach_reference = false);
  // Mirror of fluency_forward under a reverse model: positions are visited
  // right to left and `right_context` (in reading order) conditions first.
  static ConstraintFn fluency_reverse(std::shared_ptr<const LanguageModel> reverse_lm, Tokens right_context,
                                      real tau = 1, bool detach_reference = false);
  // sum_k log p_fwd(right_tokens[k] | <bos>, y, right_tokens[<k]).
  static ConstraintFn future_prediction(std::shared_ptr<const LanguageModel> lm, Tokens right_tokens, real tau = 1);
  // Clipped soft n-gram precision against `reference`, averaged over
  // `orders`. A reference of keywords is handled by keyword_similarity.
  static ConstraintFn ngram_similarity(Tokens reference, std::vector<std::size_t> orders, std::size_t vocab_size,
                                       real tau = 1);
  // Unigram similarity against a keyword set; each keyword counts once. An
  // empty set yields a constant zero.
  static ConstraintFn keyword_similarity(const std::set<TokenId>& keywords, std::size_t vocab_size, real tau = 1);

  ConstraintKind kind() const { return kind_; }
  const char* name() const;
  const Tokens& tokens() const { return tokens_; }
  const std::vector<std::size_t>& orders() const { return orders_; }
  real tau() const { return tau_; }
  std::size_t vocab_size() const { return vocab_size_; }

  // Per-sequence values, B x 1.
  Var build(Tape& tape, Var rows, const BatchLayout& layout, BuildCache* cache = nullptr) const;
  double evaluate(const SoftSequence& y) const;

 private:
  ConstraintFn() = default;

  Var build_fluency(Tape& tape, Var rows, const BatchLayout& layout, bool reverse, BuildCache& cache) const;
  Var build_prediction(Var rows, const BatchLayout& layout, BuildCache& cache) const;
  Var build_ngram(Tape& tape, Var rows, const BatchLayout& layout, BuildCache& cache) const;

  ConstraintKind kind_ = ConstraintKind::fluency_forward;
  std::shared_ptr<const LanguageModel> lm_;
  Tokens tokens_;
  std::vector<std::size_t> orders_;
  std::size_t vocab_size_ = 0;
  real tau_ = 1;
  bool detach_reference_ = false;
};

// Convenience single-sequence forms.
double fluency_forward(const SoftSequence& y, const Tokens& left_context, std::shared_ptr<const LanguageModel> lm,
                       real tau = 1);
double fluency_reverse(const SoftSequence& y, const Tokens& right_context,
                       std::shared_ptr<const LanguageModel> reverse_lm, real tau = 1);
double future_token_prediction(const SoftSequence& y, const Tokens& right_tokens,
                               std::shared_ptr<const LanguageModel> lm, real tau = 1);
double ngram_similarity(const SoftSequence& y, const Tokens& reference, std::size_t n, real tau = 1);

// ---- keywords -------------------------------------------------------------

std::filesystem::path default_stopwords_path();
std::vector<std::string> load_stopwords(const std::filesystem::path& path = default_stopwords_path());
// Ids of the stopwords present in `vocab`.
std::set<TokenId> stopword_ids(const Vocabulary& vocab, const std::vector<std::string>& stopwords);

// Distinct ids of `x` that are neither stopwords nor reserved tokens.
std::set<TokenId> keyword_set(std::span<const TokenId> x, const std::set<TokenId>& stopwords);

}  // namespace cold
