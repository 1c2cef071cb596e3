#pragma once

#include <cstddef>

#include "cold/numerics.hpp"
#include "cold/vocabulary.hpp"

namespace cold {

// Relaxed text: one row of real logits over the vocabulary per position.
struct SoftSequence {
  Array logits;  // T x V

  SoftSequence() = default;
  explicit SoftSequence(Array l) : logits(std::move(l)) {}

  std::size_t length() const { return logits.rows(); }
  std::size_t vocab_size() const { return logits.cols(); }

  // Rows equal to `scale` at the token and 0 elsewhere.
  static SoftSequence one_hot(std::span<const TokenId> tokens, std::size_t vocab_size, real scale = real{1});
  static SoftSequence uniform(std::size_t length, std::size_t vocab_size);

  // Lowest-id argmax of every row.
  Tokens argmax() const;
  // Rows in reverse order.
  SoftSequence reversed() const;
};

}  // namespace cold
