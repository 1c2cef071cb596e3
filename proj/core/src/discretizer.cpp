#include "cold/discretizer.hpp"

#include <algorithm>
#include <numeric>

#include "cold/error.hpp"

namespace cold {

std::vector<TokenId> top_k(std::span<const real> scores, std::size_t k) {
  std::vector<TokenId> ids(scores.size());
  std::iota(ids.begin(), ids.end(), TokenId{0});
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), [&](TokenId a, TokenId b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });
  ids.resize(k);
  return ids;
}

Tokens topk_filter(const SoftSequence& y, const LanguageModel& lm, const DiscretizeConfig& cfg,
                   std::span<const TokenId> left_context) {
  require_direction(lm, Direction::forward, "topk_filter");
  if (cfg.k < 1) {
    throw DomainError("top-k filter needs k >= 1");
  }
  if (y.vocab_size() != lm.vocab_size()) {
    throw ShapeError("topk_filter: soft sequence " + shape_string(y.logits) + " does not match vocabulary size " +
                     std::to_string(lm.vocab_size()));
  }
  lm.vocab().validate(left_context, "topk_filter left context");
  for (TokenId id : cfg.extra_tokens) {
    if (id >= lm.vocab_size()) {
      throw DomainError("topk_filter: extra token id " + std::to_string(id) + " outside vocabulary");
    }
  }

  LmStepper stepper(lm);
  stepper.feed(Vocabulary::bos);
  stepper.feed(left_context);
  Tokens out;
  out.reserve(y.length());
  for (std::size_t t = 0; t < y.length(); ++t) {
    std::vector<TokenId> candidates = top_k(stepper.logits().row(0), cfg.k);
    candidates.insert(candidates.end(), cfg.extra_tokens.begin(), cfg.extra_tokens.end());
    const auto row = y.logits.row(t);
    TokenId best = candidates.front();
    for (TokenId c : candidates) {
      if (row[c] > row[best] || (row[c] == row[best] && c < best)) {
        best = c;
      }
    }
    out.push_back(best);
    stepper.feed(best);
  }
  return out;
}

Tokens continue_sequence(const LanguageModel& lm, const Tokens& y, const DiscretizeConfig& cfg,
                         std::span<const TokenId> left_context) {
  if (cfg.max_continuation == 0 || (!y.empty() && y.back() == cfg.sentence_end)) {
    return y;
  }
  LmStepper stepper(lm);
  stepper.feed(Vocabulary::bos);
  stepper.feed(left_context);
  stepper.feed(y);
  Tokens out = y;
  for (std::size_t i = 0; i < cfg.max_continuation; ++i) {
    const TokenId next = static_cast<TokenId>(argmax(stepper.logits().row(0)));
    if (next == Vocabulary::eos) {
      break;
    }
    out.push_back(next);
    if (next == cfg.sentence_end) {
      break;
    }
    stepper.feed(next);
  }
  return out;
}

}  // namespace cold
