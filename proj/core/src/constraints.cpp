#include "cold/constraints.hpp"

#include <algorithm>
#include <fstream>
#include <optional>

#include "cold/error.hpp"

namespace cold {

std::vector<std::size_t> BatchLayout::rows_at(std::size_t t) const {
  std::vector<std::size_t> rows(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    rows[b] = b * length + t;
  }
  return rows;
}

const char* constraint_kind_name(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::fluency_forward: return "fluency_forward";
    case ConstraintKind::fluency_reverse: return "fluency_reverse";
    case ConstraintKind::future_prediction: return "future_prediction";
    case ConstraintKind::ngram_similarity: return "ngram_similarity";
  }
  return "unknown";
}

const char* ConstraintFn::name() const { return constraint_kind_name(kind_); }

// ---- construction ---------------------------------------------------------

ConstraintFn ConstraintFn::fluency_forward(std::shared_ptr<const LanguageModel> lm, Tokens left_context, real tau,
                                           bool detach_reference) {
  if (!lm) {
    throw DomainError("fluency_forward: missing language model");
  }
  require_direction(*lm, Direction::forward, "fluency_forward");
  lm->vocab().validate(left_context, "fluency_forward left context");
  ConstraintFn f;
  f.kind_ = ConstraintKind::fluency_forward;
  f.vocab_size_ = lm->vocab_size();
  f.lm_ = std::move(lm);
  f.tokens_ = std::move(left_context);
  f.tau_ = tau;
  f.detach_reference_ = detach_reference;
  return f;
}

ConstraintFn ConstraintFn::fluency_reverse(std::shared_ptr<const LanguageModel> reverse_lm, Tokens right_context,
                                           real tau, bool detach_reference) {
  if (!reverse_lm) {
    throw DomainError("fluency_reverse: missing language model");
  }
  require_direction(*reverse_lm, Direction::reverse, "fluency_reverse");
  reverse_lm->vocab().validate(right_context, "fluency_reverse right context");
  ConstraintFn f;
  f.kind_ = ConstraintKind::fluency_reverse;
  f.vocab_size_ = reverse_lm->vocab_size();
  f.lm_ = std::move(reverse_lm);
  f.tokens_ = std::move(right_context);
  f.tau_ = tau;
  f.detach_reference_ = detach_reference;
  return f;
}

ConstraintFn ConstraintFn::future_prediction(std::shared_ptr<const LanguageModel> lm, Tokens right_tokens, real tau) {
  if (!lm) {
    throw DomainError("future_prediction: missing language model");
  }
  require_direction(*lm, Direction::forward, "future_prediction");
  if (right_tokens.empty()) {
    throw DomainError("future_prediction: right-side tokens must be non-empty");
  }
  lm->vocab().validate(right_tokens, "future_prediction right tokens");
  ConstraintFn f;
  f.kind_ = ConstraintKind::future_prediction;
  f.vocab_size_ = lm->vocab_size();
  f.lm_ = std::move(lm);
  f.tokens_ = std::move(right_tokens);
  f.tau_ = tau;
  return f;
}

ConstraintFn ConstraintFn::ngram_similarity(Tokens reference, std::vector<std::size_t> orders, std::size_t vocab_size,
                                            real tau) {
  if (orders.empty()) {
    throw DomainError("ngram_similarity: at least one n-gram order is required");
  }
  for (std::size_t n : orders) {
    if (n < 1 || n > reference.size()) {
      throw DomainError("ngram_similarity: n=" + std::to_string(n) + " out of range for a reference of length " +
                        std::to_string(reference.size()));
    }
  }
  for (TokenId id : reference) {
    if (id >= vocab_size) {
      throw DomainError("ngram_similarity: reference token id " + std::to_string(id) + " outside vocabulary");
    }
  }
  ConstraintFn f;
  f.kind_ = ConstraintKind::ngram_similarity;
  f.tokens_ = std::move(reference);
  f.orders_ = std::move(orders);
  f.vocab_size_ = vocab_size;
  f.tau_ = tau;
  return f;
}

ConstraintFn ConstraintFn::keyword_similarity(const std::set<TokenId>& keywords, std::size_t vocab_size, real tau) {
  ConstraintFn f;
  f.kind_ = ConstraintKind::ngram_similarity;
  f.tokens_.assign(keywords.begin(), keywords.end());
  for (TokenId id : f.tokens_) {
    if (id >= vocab_size) {
      throw DomainError("keyword_similarity: keyword id " + std::to_string(id) + " outside vocabulary");
    }
  }
  f.orders_ = {1};
  f.vocab_size_ = vocab_size;
  f.tau_ = tau;
  return f;
}

// ---- graph construction ---------------------------------------------------

Var BuildCache::softmax(Var rows, real tau) {
  auto [it, fresh] = softmax_.try_emplace({rows.index, tau});
  if (fresh) {
    it->second = softmax_rows(rows, tau);
  }
  return it->second;
}

Var BuildCache::log_softmax(Var rows) {
  auto [it, fresh] = log_softmax_.try_emplace(rows.index);
  if (fresh) {
    it->second = log_softmax_rows(rows);
  }
  return it->second;
}

const LmGraph& BuildCache::graph(const LanguageModel& lm) {
  auto& g = graphs_[&lm];
  if (!g) {
    g = std::make_unique<LmGraph>(lm, *tape_);
  }
  return *g;
}

std::span<const Var> BuildCache::soft_states(const LanguageModel& lm, Var rows, const BatchLayout& layout,
                                             const Tokens& prefix, bool reverse, real tau, std::size_t count) {
  const LmGraph& g = graph(lm);
  auto& states = runs_[RunKey{&lm, rows.index, prefix, reverse, tau}];
  if (states.empty()) {
    Var h = g.step(g.embed_repeated(Vocabulary::bos, layout.batch), g.initial_state(layout.batch));
    for (TokenId id : prefix) {
      h = g.step(g.embed_repeated(id, layout.batch), h);
    }
    states.push_back(h);
  }
  if (states.size() <= count) {
    Var probs = softmax(rows, tau);
    for (std::size_t i = states.size() - 1; i < count; ++i) {
      const std::size_t t = reverse ? layout.length - 1 - i : i;
      states.push_back(g.step(g.embed_soft(gather_rows(probs, layout.rows_at(t))), states.back()));
    }
  }
  return std::span<const Var>(states).first(count + 1);
}

Var ConstraintFn::build(Tape& tape, Var rows, const BatchLayout& layout, BuildCache* cache) const {
  const Array& y = rows.value();
  if (layout.length == 0 || layout.batch == 0) {
    throw DomainError(std::string(name()) + ": empty soft sequence");
  }
  if (y.rows() != layout.batch * layout.length || y.cols() != vocab_size_) {
    throw ShapeError(std::string(name()) + ": soft rows " + shape_string(y) + " do not match batch " +
                     std::to_string(layout.batch) + " x length " + std::to_string(layout.length) + " x vocabulary " +
                     std::to_string(vocab_size_));
  }
  std::optional<BuildCache> local;
  if (!cache) {
    cache = &local.emplace(tape);
  }
  switch (kind_) {
    case ConstraintKind::fluency_forward: return build_fluency(tape, rows, layout, false, *cache);
    case ConstraintKind::fluency_reverse: return build_fluency(tape, rows, layout, true, *cache);
    case ConstraintKind::future_prediction: return build_prediction(rows, layout, *cache);
    case ConstraintKind::ngram_similarity: return build_ngram(tape, rows, layout, *cache);
  }
  throw DomainError("unknown constraint kind");
}

Var ConstraintFn::build_fluency(Tape& tape, Var rows, const BatchLayout& layout, bool reverse,
                                BuildCache& cache) const {
  const LmGraph& g = cache.graph(*lm_);
  const std::size_t T = layout.length;
  const Tokens prefix = reverse ? Tokens(tokens_.rbegin(), tokens_.rend()) : tokens_;
  const auto states = cache.soft_states(*lm_, rows, layout, prefix, reverse, tau_, T - 1);
  Var log_soft = cache.log_softmax(rows);
  std::optional<Var> total;
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t t = reverse ? T - 1 - i : i;
    Var reference = softmax_rows(g.logits(states[i]));
    if (detach_reference_) {
      reference = tape.constant(reference.value());
    }
    Var term = sum_cols(mul(reference, gather_rows(log_soft, layout.rows_at(t))));
    total = total ? add(*total, term) : term;
  }
  return *total;
}

Var ConstraintFn::build_prediction(Var rows, const BatchLayout& layout, BuildCache& cache) const {
  const LmGraph& g = cache.graph(*lm_);
  const std::size_t B = layout.batch;
  Var h = cache.soft_states(*lm_, rows, layout, {}, false, tau_, layout.length).back();
  std::optional<Var> total;
  for (std::size_t k = 0; k < tokens_.size(); ++k) {
    const std::vector<std::size_t> cols(B, tokens_[k]);
    Var term = pick(log_softmax_rows(g.logits(h)), cols);
    total = total ? add(*total, term) : term;
    if (k + 1 < tokens_.size()) {
      h = g.step(g.embed_repeated(tokens_[k], B), h);
    }
  }
  return *total;
}

Var ConstraintFn::build_ngram(Tape& tape, Var rows, const BatchLayout& layout, BuildCache& cache) const {
  const std::size_t B = layout.batch;
  const std::size_t T = layout.length;
  if (tokens_.empty()) {
    // Only reachable for an empty keyword set.
    return tape.constant(Array(B, 1));
  }
  for (std::size_t n : orders_) {
    if (n > T) {
      throw DomainError("ngram_similarity: n=" + std::to_string(n) + " out of range for a soft sequence of length " +
                        std::to_string(T));
    }
  }
  Var probs = cache.softmax(rows, tau_);
  std::vector<Var> position(T);
  for (std::size_t t = 0; t < T; ++t) {
    position[t] = gather_rows(probs, layout.rows_at(t));
  }
  std::map<std::pair<std::size_t, TokenId>, Var> picked;
  auto prob_of = [&](std::size_t t, TokenId id) {
    auto key = std::make_pair(t, id);
    auto it = picked.find(key);
    if (it == picked.end()) {
      const std::vector<std::size_t> cols(B, id);
      it = picked.emplace(key, pick(position[t], cols)).first;
    }
    return it->second;
  };

  std::optional<Var> average;
  for (std::size_t n : orders_) {
    std::map<Tokens, std::size_t> counts;
    for (std::size_t i = 0; i + n <= tokens_.size(); ++i) {
      ++counts[Tokens(tokens_.begin() + static_cast<std::ptrdiff_t>(i),
                      tokens_.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    std::optional<Var> matched;
    for (const auto& [gram, count] : counts) {
      std::optional<Var> soft_count;
      for (std::size_t t = 0; t + n <= T; ++t) {
        Var prod = prob_of(t, gram[0]);
        for (std::size_t j = 1; j < n; ++j) {
          prod = mul(prod, prob_of(t + j, gram[j]));
        }
        soft_count = soft_count ? add(*soft_count, prod) : prod;
      }
      Var clipped = minimum(*soft_count, tape.constant(Array(B, 1, static_cast<real>(count))));
      matched = matched ? add(*matched, clipped) : clipped;
    }
    Var precision = scale(*matched, real{1} / static_cast<real>(T - n + 1));
    average = average ? add(*average, precision) : precision;
  }
  return scale(*average, real{1} / static_cast<real>(orders_.size()));
}

double ConstraintFn::evaluate(const SoftSequence& y) const {
  Tape tape;
  Var rows = tape.constant_ref(y.logits);
  return static_cast<double>(build(tape, rows, {1, y.length()}).value()(0, 0));
}

// ---- single-sequence forms ------------------------------------------------

double fluency_forward(const SoftSequence& y, const Tokens& left_context, std::shared_ptr<const LanguageModel> lm,
                       real tau) {
  return ConstraintFn::fluency_forward(std::move(lm), left_context, tau).evaluate(y);
}

double fluency_reverse(const SoftSequence& y, const Tokens& right_context,
                       std::shared_ptr<const LanguageModel> reverse_lm, real tau) {
  return ConstraintFn::fluency_reverse(std::move(reverse_lm), right_context, tau).evaluate(y);
}

double future_token_prediction(const SoftSequence& y, const Tokens& right_tokens,
                               std::shared_ptr<const LanguageModel> lm, real tau) {
  return ConstraintFn::future_prediction(std::move(lm), right_tokens, tau).evaluate(y);
}

double ngram_similarity(const SoftSequence& y, const Tokens& reference, std::size_t n, real tau) {
  return ConstraintFn::ngram_similarity(reference, {n}, y.vocab_size(), tau).evaluate(y);
}

// ---- keywords -------------------------------------------------------------

std::filesystem::path default_stopwords_path() {
#ifdef COLD_DATA_DIR
  return std::filesystem::path(COLD_DATA_DIR) / "stopwords.txt";
#else
  return "stopwords.txt";
#endif
}

std::vector<std::string> load_stopwords(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw FormatError("cannot open stopword list: " + path.string());
  }
  std::vector<std::string> out;
  for (std::string line; std::getline(is, line);) {
    const auto b = line.find_first_not_of(" \t\r");
    const auto e = line.find_last_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') {
      continue;
    }
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

std::set<TokenId> stopword_ids(const Vocabulary& vocab, const std::vector<std::string>& stopwords) {
  std::set<TokenId> ids;
  for (const auto& w : stopwords) {
    if (auto id = vocab.find(w)) {
      ids.insert(*id);
    }
  }
  return ids;
}

std::set<TokenId> keyword_set(std::span<const TokenId> x, const std::set<TokenId>& stopwords) {
  std::set<TokenId> out;
  for (TokenId id : x) {
    if (id >= Vocabulary::num_reserved && !stopwords.contains(id)) {
      out.insert(id);
    }
  }
  return out;
}

}  // namespace cold
