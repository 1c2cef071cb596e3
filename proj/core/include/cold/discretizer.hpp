#pragma once

// Soft sequence to discrete tokens: top-k filtering under the LM, then
// greedy continuation to a sentence end.

#include <set>
#include <span>
#include <vector>

#include "cold/language_model.hpp"
#include "cold/soft_sequence.hpp"

namespace cold {

struct DiscretizeConfig {
  std::size_t k = 10;
  std::set<TokenId> extra_tokens;
  std::size_t max_continuation = 20;
  TokenId sentence_end = Vocabulary::sentence_end;
};

// Indices of the k largest scores, largest first; ties go to the lowest id.
std::vector<TokenId> top_k(std::span<const real> scores, std::size_t k);

// Left to right: candidates at t are the LM's top-k after
// <bos> + left_context + y_<t, plus extra_tokens; y_t is the candidate with
// the largest soft logit (ties to the lowest id).
Tokens topk_filter(const SoftSequence& y, const LanguageModel& lm, const DiscretizeConfig& cfg,
                   std::span<const TokenId> left_context = {});

// Greedy extension of y (after <bos> + left_context) until the sentence end
// is emitted or max_continuation tokens were added. An end-of-sequence
// prediction also stops the extension and is not appended.
Tokens continue_sequence(const LanguageModel& lm, const Tokens& y, const DiscretizeConfig& cfg,
                         std::span<const TokenId> left_context = {});

}  // namespace cold
