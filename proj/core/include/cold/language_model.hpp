#pragma once

// Single-layer GRU language model over word tokens. The same weights drive
// three kinds of input: hard token ids (embedding rows), soft rows
// (probability-weighted averages of embedding rows) and batched mixes of both.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cold/corpus.hpp"
#include "cold/numerics.hpp"
#include "cold/soft_sequence.hpp"
#include "cold/vocabulary.hpp"

namespace cold {

enum class Direction : std::uint8_t { forward = 0, reverse = 1 };

const char* direction_name(Direction d);
Direction parse_direction(std::string_view s);

// Parameters in their serialized order.
struct LmParameters {
  Array embedding;  // V x d
  Array w_update, u_update, b_update;
  Array w_reset, u_reset, b_reset;
  Array w_candidate, u_candidate, b_candidate;
  Array w_out;  // d x V
  Array b_out;  // 1 x V

  template <typename F>
  void for_each(F&& f) {
    for (Array* a : {&embedding, &w_update, &u_update, &b_update, &w_reset, &u_reset, &b_reset, &w_candidate,
                     &u_candidate, &b_candidate, &w_out, &b_out}) {
      f(*a);
    }
  }
  template <typename F>
  void for_each(F&& f) const {
    for (const Array* a : {&embedding, &w_update, &u_update, &b_update, &w_reset, &u_reset, &b_reset, &w_candidate,
                           &u_candidate, &b_candidate, &w_out, &b_out}) {
      f(*a);
    }
  }
  static constexpr std::size_t count = 12;
};

struct TrainingInfo {
  std::uint64_t corpus_hash = 0;
  std::uint64_t seed = 0;
  std::uint32_t epochs = 0;
};

class LanguageModel {
 public:
  // Zero weights: every next-token distribution is uniform.
  LanguageModel(Vocabulary vocab, Direction direction, std::size_t dim, std::size_t context_window = 64);

  // Small uniform random weights drawn from `seed`.
  static LanguageModel initialized(Vocabulary vocab, Direction direction, std::size_t dim, std::uint64_t seed,
                                   std::size_t context_window = 64);

  const Vocabulary& vocab() const { return vocab_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  Direction direction() const { return direction_; }
  std::size_t dim() const { return dim_; }
  std::size_t context_window() const { return context_window_; }

  const LmParameters& params() const { return params_; }
  LmParameters& mutable_params() { return params_; }
  const TrainingInfo& info() const { return info_; }
  void set_info(TrainingInfo info) { info_ = info; }

  // Throws DomainError unless every parameter matches the declared shapes.
  void validate() const;

 private:
  Vocabulary vocab_;
  Direction direction_;
  std::size_t dim_;
  std::size_t context_window_;
  LmParameters params_;
  TrainingInfo info_;
};

// Throws DomainError when the model does not run in `expected` direction.
void require_direction(const LanguageModel& lm, Direction expected, std::string_view what);

// Binds a model's weights to a tape. Parameters enter as constants unless
// `trainable`, in which case they are leaves that receive gradients.
class LmGraph {
 public:
  LmGraph(const LanguageModel& lm, Tape& tape, bool trainable = false);

  Tape& tape() const { return *tape_; }
  const LanguageModel& model() const { return *lm_; }

  Var initial_state(std::size_t batch) const;
  // One embedding row per id.
  Var embed(std::span<const TokenId> ids) const;
  // Same token for every row of a batch.
  Var embed_repeated(TokenId id, std::size_t batch) const;
  // probs: B x V distribution rows -> B x d expected embeddings.
  Var embed_soft(Var probs) const;
  Var step(Var input, Var state) const;
  Var logits(Var state) const;

  // Trainable parameter leaves in serialized order (empty unless trainable).
  const std::vector<Var>& parameter_leaves() const { return leaves_; }

 private:
  const LanguageModel* lm_;
  Tape* tape_;
  Var embedding_, w_update_, u_update_, b_update_, w_reset_, u_reset_, b_reset_;
  Var w_candidate_, u_candidate_, b_candidate_, w_out_, b_out_;
  std::vector<Var> leaves_;
};

// Incremental hard-token inference.
class LmStepper {
 public:
  explicit LmStepper(const LanguageModel& lm);

  void feed(TokenId id);
  void feed(std::span<const TokenId> ids);
  bool started() const { return started_; }
  // Scores for the next token; requires at least one fed token.
  const Array& logits() const;
  Array probs() const;

 private:
  const LanguageModel* lm_;
  Array state_;
  Array logits_;
  bool started_ = false;
};

// Next-token distribution (1 x V) after the hard prefix and then the soft
// rows, each soft row entering as sum_v softmax(row / tau)(v) * emb(v).
// The hard prefix is used as given; callers supply the begin-of-sequence id.
Array next_token_dist(const LanguageModel& lm, std::span<const TokenId> hard_prefix, const SoftSequence* soft_suffix,
                      real tau = real{1});

// Graph form of next_token_dist; `soft_logits` is a T x V node (may be empty
// when `soft_rows` is 0).
Var next_token_dist(const LmGraph& g, std::span<const TokenId> hard_prefix, std::optional<Var> soft_logits, real tau);

struct GreedyResult {
  Tokens tokens;
  Array logits;  // T x V, row t holds the scores that chose tokens[t]
};

// Greedy continuation of <bos> + prompt; ties go to the lowest id.
GreedyResult greedy_decode(const LanguageModel& lm, std::span<const TokenId> prompt, std::size_t length);

// exp of the mean negative log-likelihood of `tokens` after <bos> + condition.
// Returns +inf when some token has probability below 1e-300.
double perplexity(const LanguageModel& lm, std::span<const TokenId> tokens, std::span<const TokenId> condition = {});

// Sum of log-probabilities of `tokens` after <bos> + condition.
double log_likelihood(const LanguageModel& lm, std::span<const TokenId> tokens,
                      std::span<const TokenId> condition = {});

// Lowest index among the maxima.
std::size_t argmax(std::span<const real> values);

// ---- training -------------------------------------------------------------

struct TrainConfig {
  std::size_t dim = 64;
  std::size_t epochs = 12;
  double learning_rate = 0.01;
  std::uint64_t seed = 1;
  std::size_t batch_size = 16;
  std::size_t context_window = 64;
  double clip_norm = 5.0;
};

struct EpochReport {
  std::size_t epoch = 0;
  double train_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochReport&)>;

// Trains on `corpus` (token order reversed first when direction is reverse).
// Deterministic for fixed inputs. Throws NumericalError naming the epoch if
// the loss becomes non-finite.
LanguageModel train(const Corpus& corpus, const Vocabulary& vocab, Direction direction, const TrainConfig& config,
                    const EpochCallback& on_epoch = {});

// Perplexity over whole sequences (each scored after <bos>), in reading
// order; a reverse model sees each sequence reversed as in training.
double corpus_perplexity(const LanguageModel& lm, const Corpus& corpus);

}  // namespace cold
