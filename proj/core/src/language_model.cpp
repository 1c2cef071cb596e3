#include "cold/language_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cold/error.hpp"
#include "cold/random.hpp"

namespace cold {

const char* direction_name(Direction d) { return d == Direction::forward ? "forward" : "reverse"; }

Direction parse_direction(std::string_view s) {
  if (s == "forward") return Direction::forward;
  if (s == "reverse") return Direction::reverse;
  throw DomainError("unknown direction '" + std::string(s) + "' (expected forward or reverse)");
}

// ---- SoftSequence ---------------------------------------------------------

SoftSequence SoftSequence::one_hot(std::span<const TokenId> tokens, std::size_t vocab_size, real scale) {
  Array a(tokens.size(), vocab_size);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] >= vocab_size) {
      throw DomainError("one_hot: token id " + std::to_string(tokens[t]) + " outside vocabulary");
    }
    a(t, tokens[t]) = scale;
  }
  return SoftSequence(std::move(a));
}

SoftSequence SoftSequence::uniform(std::size_t length, std::size_t vocab_size) {
  return SoftSequence(Array(length, vocab_size));
}

Tokens SoftSequence::argmax() const {
  Tokens out;
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    out.push_back(static_cast<TokenId>(cold::argmax(logits.row(t))));
  }
  return out;
}

SoftSequence SoftSequence::reversed() const {
  Array a(logits.rows(), logits.cols());
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    auto src = logits.row(logits.rows() - 1 - t);
    std::copy(src.begin(), src.end(), a.row(t).begin());
  }
  return SoftSequence(std::move(a));
}

std::size_t argmax(std::span<const real> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) {
      best = i;
    }
  }
  return best;
}

// ---- LanguageModel --------------------------------------------------------

LanguageModel::LanguageModel(Vocabulary vocab, Direction direction, std::size_t dim, std::size_t context_window)
    : vocab_(std::move(vocab)), direction_(direction), dim_(dim), context_window_(context_window) {
  if (dim_ == 0) {
    throw DomainError("model dimension must be positive");
  }
  const std::size_t v = vocab_.size();
  const std::size_t d = dim_;
  params_.embedding = Array(v, d);
  for (Array* w : {&params_.w_update, &params_.u_update, &params_.w_reset, &params_.u_reset, &params_.w_candidate,
                   &params_.u_candidate}) {
    *w = Array(d, d);
  }
  for (Array* b : {&params_.b_update, &params_.b_reset, &params_.b_candidate}) {
    *b = Array(1, d);
  }
  params_.w_out = Array(d, v);
  params_.b_out = Array(1, v);
}

LanguageModel LanguageModel::initialized(Vocabulary vocab, Direction direction, std::size_t dim, std::uint64_t seed,
                                         std::size_t context_window) {
  LanguageModel lm(std::move(vocab), direction, dim, context_window);
  Rng rng(seed);
  const double k = 1.0 / std::sqrt(static_cast<double>(dim));
  lm.params_.for_each([&](Array& a) {
    for (auto& x : a.values()) {
      x = static_cast<real>((2.0 * rng.uniform() - 1.0) * k);
    }
  });
  return lm;
}

void LanguageModel::validate() const {
  const std::size_t v = vocab_.size();
  const std::size_t d = dim_;
  auto check = [](const Array& a, std::size_t r, std::size_t c, const char* name) {
    if (a.rows() != r || a.cols() != c) {
      throw DomainError(std::string("parameter ") + name + " has shape " + shape_string(a) + ", expected [" +
                        std::to_string(r) + "x" + std::to_string(c) + "]");
    }
    if (!a.all_finite()) {
      throw NumericalError(std::string("parameter ") + name + " has non-finite entries");
    }
  };
  check(params_.embedding, v, d, "embedding");
  check(params_.w_update, d, d, "w_update");
  check(params_.u_update, d, d, "u_update");
  check(params_.b_update, 1, d, "b_update");
  check(params_.w_reset, d, d, "w_reset");
  check(params_.u_reset, d, d, "u_reset");
  check(params_.b_reset, 1, d, "b_reset");
  check(params_.w_candidate, d, d, "w_candidate");
  check(params_.u_candidate, d, d, "u_candidate");
  check(params_.b_candidate, 1, d, "b_candidate");
  check(params_.w_out, d, v, "w_out");
  check(params_.b_out, 1, v, "b_out");
}

void require_direction(const LanguageModel& lm, Direction expected, std::string_view what) {
  if (lm.direction() != expected) {
    throw DomainError(std::string(what) + " requires a " + direction_name(expected) + " language model, got " +
                      direction_name(lm.direction()));
  }
}

// ---- LmGraph --------------------------------------------------------------

LmGraph::LmGraph(const LanguageModel& lm, Tape& tape, bool trainable) : lm_(&lm), tape_(&tape) {
  const LmParameters& p = lm.params();
  auto bind = [&](const Array& a) {
    if (trainable) {
      Var v = tape.leaf_ref(a);
      leaves_.push_back(v);
      return v;
    }
    return tape.constant_ref(a);
  };
  embedding_ = bind(p.embedding);
  w_update_ = bind(p.w_update);
  u_update_ = bind(p.u_update);
  b_update_ = bind(p.b_update);
  w_reset_ = bind(p.w_reset);
  u_reset_ = bind(p.u_reset);
  b_reset_ = bind(p.b_reset);
  w_candidate_ = bind(p.w_candidate);
  u_candidate_ = bind(p.u_candidate);
  b_candidate_ = bind(p.b_candidate);
  w_out_ = bind(p.w_out);
  b_out_ = bind(p.b_out);
}

Var LmGraph::initial_state(std::size_t batch) const { return tape_->constant(Array(batch, lm_->dim())); }

Var LmGraph::embed(std::span<const TokenId> ids) const {
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  lm_->vocab().validate(ids, "embed");
  return gather_rows(embedding_, rows);
}

Var LmGraph::embed_repeated(TokenId id, std::size_t batch) const {
  std::vector<TokenId> ids(batch, id);
  return embed(ids);
}

Var LmGraph::embed_soft(Var probs) const { return matmul(probs, embedding_); }

Var LmGraph::step(Var input, Var state) const {
  Var z = sigmoid(add_row(add(matmul(input, w_update_), matmul(state, u_update_)), b_update_));
  Var r = sigmoid(add_row(add(matmul(input, w_reset_), matmul(state, u_reset_)), b_reset_));
  Var n = tanh(add_row(add(matmul(input, w_candidate_), matmul(mul(r, state), u_candidate_)), b_candidate_));
  return add(n, mul(z, sub(state, n)));
}

Var LmGraph::logits(Var state) const { return add_row(matmul(state, w_out_), b_out_); }

// ---- LmStepper ------------------------------------------------------------

LmStepper::LmStepper(const LanguageModel& lm) : lm_(&lm), state_(1, lm.dim()) {}

void LmStepper::feed(TokenId id) {
  Tape tape;
  LmGraph g(*lm_, tape);
  const TokenId ids[1] = {id};
  Var h = g.step(g.embed(ids), tape.constant_ref(state_));
  Var out = g.logits(h);
  state_ = h.value();
  logits_ = out.value();
  started_ = true;
}

void LmStepper::feed(std::span<const TokenId> ids) {
  for (TokenId id : ids) {
    feed(id);
  }
}

const Array& LmStepper::logits() const {
  if (!started_) {
    throw DomainError("next-token scores need a non-empty context (supply the begin-of-sequence id)");
  }
  return logits_;
}

Array LmStepper::probs() const {
  Tape tape;
  return softmax_rows(tape.constant_ref(logits())).value();
}

// ---- inference helpers ----------------------------------------------------

Var next_token_dist(const LmGraph& g, std::span<const TokenId> hard_prefix, std::optional<Var> soft_logits, real tau) {
  Tape& tape = g.tape();
  const std::size_t soft_rows = soft_logits ? soft_logits->value().rows() : 0;
  if (hard_prefix.empty() && soft_rows == 0) {
    throw DomainError("next_token_dist: empty context (a begin-of-sequence id must be supplied)");
  }
  if (soft_logits && soft_logits->value().cols() != g.model().vocab_size()) {
    throw ShapeError("next_token_dist: soft rows have " + std::to_string(soft_logits->value().cols()) +
                     " columns, vocabulary has " + std::to_string(g.model().vocab_size()));
  }
  Var h = g.initial_state(1);
  for (TokenId id : hard_prefix) {
    const TokenId one[1] = {id};
    h = g.step(g.embed(one), h);
  }
  if (soft_rows > 0) {
    Var probs = softmax_rows(*soft_logits, tau);
    for (std::size_t t = 0; t < soft_rows; ++t) {
      const std::size_t row[1] = {t};
      h = g.step(g.embed_soft(gather_rows(probs, row)), h);
    }
  }
  (void)tape;
  return softmax_rows(g.logits(h));
}

Array next_token_dist(const LanguageModel& lm, std::span<const TokenId> hard_prefix, const SoftSequence* soft_suffix,
                      real tau) {
  lm.vocab().validate(hard_prefix, "next_token_dist");
  Tape tape;
  LmGraph g(lm, tape);
  std::optional<Var> soft;
  if (soft_suffix != nullptr && soft_suffix->length() > 0) {
    soft = tape.constant_ref(soft_suffix->logits);
  }
  return next_token_dist(g, hard_prefix, soft, tau).value();
}

GreedyResult greedy_decode(const LanguageModel& lm, std::span<const TokenId> prompt, std::size_t length) {
  if (length == 0) {
    throw DomainError("greedy_decode: length must be at least 1");
  }
  lm.vocab().validate(prompt, "greedy_decode prompt");
  LmStepper stepper(lm);
  stepper.feed(Vocabulary::bos);
  stepper.feed(prompt);
  GreedyResult out;
  out.logits = Array(length, lm.vocab_size());
  for (std::size_t t = 0; t < length; ++t) {
    const Array& scores = stepper.logits();
    std::copy(scores.values().begin(), scores.values().end(), out.logits.row(t).begin());
    const auto next = static_cast<TokenId>(argmax(scores.values()));
    out.tokens.push_back(next);
    if (t + 1 < length) {
      stepper.feed(next);
    }
  }
  return out;
}

namespace {

std::vector<double> token_log_probs(const LanguageModel& lm, std::span<const TokenId> tokens,
                                    std::span<const TokenId> condition) {
  lm.vocab().validate(tokens, "log_likelihood tokens");
  lm.vocab().validate(condition, "log_likelihood condition");
  LmStepper stepper(lm);
  stepper.feed(Vocabulary::bos);
  stepper.feed(condition);
  std::vector<double> out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    Tape tape;
    const Array lp = log_softmax_rows(tape.constant_ref(stepper.logits())).value();
    out.push_back(static_cast<double>(lp(0, tokens[i])));
    if (i + 1 < tokens.size()) {
      stepper.feed(tokens[i]);
    }
  }
  return out;
}

}  // namespace

double log_likelihood(const LanguageModel& lm, std::span<const TokenId> tokens, std::span<const TokenId> condition) {
  const auto lps = token_log_probs(lm, tokens, condition);
  return std::accumulate(lps.begin(), lps.end(), 0.0);
}

double perplexity(const LanguageModel& lm, std::span<const TokenId> tokens, std::span<const TokenId> condition) {
  if (tokens.empty()) {
    throw DomainError("perplexity of an empty token sequence");
  }
  // log(1e-300)
  constexpr double kMinLogProb = -690.7755278982137;
  double total = 0.0;
  for (double lp : token_log_probs(lm, tokens, condition)) {
    if (!(lp >= kMinLogProb)) {
      return std::numeric_limits<double>::infinity();
    }
    total += lp;
  }
  return std::exp(-total / static_cast<double>(tokens.size()));
}

double corpus_perplexity(const LanguageModel& lm, const Corpus& corpus) {
  const Corpus ordered = lm.direction() == Direction::reverse ? reversed(corpus) : corpus;
  double nll = 0.0;
  std::size_t count = 0;
  for (const auto& s : ordered.sequences) {
    if (s.empty()) {
      continue;
    }
    nll -= log_likelihood(lm, s);
    count += s.size();
  }
  if (count == 0) {
    throw DomainError("corpus_perplexity: empty corpus");
  }
  return std::exp(nll / static_cast<double>(count));
}

// ---- training -------------------------------------------------------------

namespace {

struct AdamState {
  std::vector<Array> m, v;
  std::size_t step = 0;
};

}  // namespace

LanguageModel train(const Corpus& corpus, const Vocabulary& vocab, Direction direction, const TrainConfig& config,
                    const EpochCallback& on_epoch) {
  if (corpus.sequences.empty() || corpus.token_count() == 0) {
    throw DomainError("train: empty corpus");
  }
  if (config.batch_size == 0 || config.context_window < 2) {
    throw DomainError("train: batch size must be positive and the context window at least 2");
  }
  for (const auto& s : corpus.sequences) {
    vocab.validate(s, "train corpus");
  }
  const Corpus data = direction == Direction::reverse ? reversed(corpus) : corpus;

  LanguageModel lm = LanguageModel::initialized(vocab, direction, config.dim, derive_seed(config.seed, 0),
                                                config.context_window);
  lm.set_info({corpus_hash(corpus), config.seed, static_cast<std::uint32_t>(config.epochs)});

  // Sequences longer than the window are cut into window-sized pieces.
  std::vector<Tokens> pieces;
  for (const auto& s : data.sequences) {
    for (std::size_t start = 0; start < s.size(); start += config.context_window) {
      const std::size_t end = std::min(s.size(), start + config.context_window);
      pieces.emplace_back(s.begin() + static_cast<std::ptrdiff_t>(start), s.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }

  AdamState adam;
  lm.params().for_each([&](const Array& a) {
    adam.m.emplace_back(a.rows(), a.cols());
    adam.v.emplace_back(a.rows(), a.cols());
  });
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;

  Rng shuffle_rng(derive_seed(config.seed, 1));
  std::vector<std::size_t> order(pieces.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      const std::size_t batch = b1 - b0;
      std::size_t max_len = 0;
      std::size_t count = 0;
      for (std::size_t i = b0; i < b1; ++i) {
        max_len = std::max(max_len, pieces[order[i]].size());
        count += pieces[order[i]].size();
      }

      Tape tape;
      LmGraph g(lm, tape, /*trainable=*/true);
      Var h = g.initial_state(batch);
      std::optional<Var> total;
      std::vector<TokenId> inputs(batch);
      std::vector<std::size_t> targets(batch);
      for (std::size_t t = 0; t < max_len; ++t) {
        Array mask(batch, 1);
        for (std::size_t r = 0; r < batch; ++r) {
          const Tokens& seq = pieces[order[b0 + r]];
          inputs[r] = t == 0 ? Vocabulary::bos : (t - 1 < seq.size() ? seq[t - 1] : Vocabulary::eos);
          if (t < seq.size()) {
            targets[r] = seq[t];
            mask(r, 0) = 1;
          } else {
            targets[r] = Vocabulary::eos;
          }
        }
        h = g.step(g.embed(inputs), h);
        Var picked = pick(log_softmax_rows(g.logits(h)), targets);
        Var masked = sum(mul(picked, tape.constant(std::move(mask))));
        total = total ? add(*total, masked) : masked;
      }
      Var loss = scale(*total, real{-1} / static_cast<real>(count));
      const double loss_value = static_cast<double>(loss.value()(0, 0));
      if (!std::isfinite(loss_value)) {
        throw NumericalError("train: non-finite loss in epoch " + std::to_string(epoch + 1));
      }
      tape.backward(loss);
      epoch_loss += loss_value * static_cast<double>(count);
      epoch_tokens += count;

      const auto& leaves = g.parameter_leaves();
      double norm2 = 0.0;
      for (const Var& p : leaves) {
        for (real x : p.grad().values()) {
          norm2 += static_cast<double>(x) * static_cast<double>(x);
        }
      }
      const double norm = std::sqrt(norm2);
      const double clip = norm > config.clip_norm ? config.clip_norm / norm : 1.0;

      ++adam.step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam.step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam.step));
      std::size_t k = 0;
      lm.mutable_params().for_each([&](Array& param) {
        const Array& grad = leaves[k].grad();
        Array& m = adam.m[k];
        Array& v = adam.v[k];
        for (std::size_t i = 0; i < param.size(); ++i) {
          const double gi = static_cast<double>(grad[i]) * clip;
          m[i] = static_cast<real>(beta1 * m[i] + (1 - beta1) * gi);
          v[i] = static_cast<real>(beta2 * v[i] + (1 - beta2) * gi * gi);
          const double mhat = m[i] / c1;
          const double vhat = v[i] / c2;
          param[i] -= static_cast<real>(config.learning_rate * mhat / (std::sqrt(vhat) + eps));
        }
        ++k;
      });
    }
    if (on_epoch) {
      on_epoch({epoch + 1, epoch_loss / static_cast<double>(std::max<std::size_t>(1, epoch_tokens))});
    }
  }
  lm.validate();
  return lm;
}

}  // namespace cold
