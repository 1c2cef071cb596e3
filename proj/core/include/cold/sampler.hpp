#pragma once

// Energy composition and Langevin sampling over soft sequences.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cold/constraints.hpp"
#include "cold/language_model.hpp"
#include "cold/numerics.hpp"
#include "cold/random.hpp"
#include "cold/soft_sequence.hpp"

namespace cold {

// Values and gradient of an energy over a batch of chains stacked as in
// BatchLayout.
struct EnergyEval {
  std::vector<double> total;               // per chain
  std::vector<std::vector<double>> terms;  // per chain, per term: lambda_i * f_i
  Array grad;                              // d(sum of totals) / d(rows)
};

class Energy {
 public:
  virtual ~Energy() = default;
  virtual std::size_t num_terms() const = 0;
  virtual std::string term_name(std::size_t i) const = 0;
  virtual EnergyEval evaluate(const Array& rows, const BatchLayout& layout) const = 0;
};

struct EnergyTerm {
  ConstraintFn fn;
  real weight = 1;
  std::string label;
};

// E(y) = -sum_i lambda_i f_i(y).
class EnergySpec : public Energy {
 public:
  // Throws DomainError on an empty list, a negative or non-finite weight, or
  // all weights zero.
  explicit EnergySpec(std::vector<EnergyTerm> terms);

  const std::vector<EnergyTerm>& terms() const { return terms_; }
  EnergySpec scaled(real factor) const;

  std::size_t num_terms() const override { return terms_.size(); }
  std::string term_name(std::size_t i) const override { return terms_.at(i).label; }
  // Throws NumericalError naming the first term whose value or gradient is
  // not finite.
  EnergyEval evaluate(const Array& rows, const BatchLayout& layout) const override;

 private:
  Var build(Tape& tape, Var rows, const BatchLayout& layout, std::vector<Var>* term_values) const;
  std::vector<EnergyTerm> terms_;
};

// E(z) = 1/2 sum (z - mu)^2 with mu broadcast over chains. Closed-form target
// for sampler checks.
class QuadraticEnergy : public Energy {
 public:
  explicit QuadraticEnergy(Array mu) : mu_(std::move(mu)) {}
  std::size_t num_terms() const override { return 1; }
  std::string term_name(std::size_t) const override { return "quadratic"; }
  EnergyEval evaluate(const Array& rows, const BatchLayout& layout) const override;

 private:
  Array mu_;  // T x V
};

double energy(const Energy& e, const SoftSequence& y);

// Piecewise-constant noise standard deviation over iterations.
class NoiseSchedule {
 public:
  NoiseSchedule() : NoiseSchedule(standard()) {}
  // Breakpoints must start at iteration 0, be strictly increasing, and carry
  // finite non-negative non-increasing values.
  explicit NoiseSchedule(std::vector<std::pair<std::size_t, double>> breakpoints);

  static NoiseSchedule standard();
  static NoiseSchedule constant(double sigma);
  // "0:1,50:0.5,..."
  static NoiseSchedule parse(std::string_view text);

  // Value of the greatest breakpoint at or before `iteration`.
  double sigma_at(std::size_t iteration) const;
  const std::vector<std::pair<std::size_t, double>>& breakpoints() const { return breakpoints_; }
  std::string to_string() const;

 private:
  std::vector<std::pair<std::size_t, double>> breakpoints_;
};

struct DecodeConfig {
  std::size_t iterations = 2000;
  double eta = 0.1;
  std::size_t length = 10;
  real tau = 1;
  std::size_t topk = 10;
  std::size_t num_samples = 16;
  std::uint64_t seed = 0;
  NoiseSchedule schedule;
  bool clip_gradient = false;
  std::size_t trace_every = 10;

  // Throws DomainError on out-of-range fields.
  void validate() const;
};

inline constexpr real kGradientClip = 10;

struct TracePoint {
  std::size_t iteration = 0;
  double total = 0;
  std::vector<double> terms;
};

struct SampleResult {
  std::vector<SoftSequence> samples;
  std::vector<std::vector<TracePoint>> traces;  // per chain
};

// Greedy-decode logits of <bos> + prompt.
SoftSequence init_soft_sequence(const LanguageModel& lm, std::span<const TokenId> prompt, std::size_t length);

// y' = y - eta * grad E(y) + eps, eps ~ Normal(0, sigma) per entry.
SoftSequence langevin_step(const SoftSequence& y, const Energy& e, double eta, double sigma, Rng& rng,
                           bool clip_gradient = false);

// Runs `iterations` steps on every chain (stacked rows, one generator per
// chain, noise drawn chain by chain in row-major order). Returns per-chain
// traces taken every `trace_every` iterations and at the end.
std::vector<std::vector<TracePoint>> run_chains(Array& rows, const BatchLayout& layout, const Energy& e,
                                                const DecodeConfig& config, std::vector<Rng>& rngs);

// num_samples chains from the greedy initialization, chain i seeded with
// derive_seed(config.seed, i).
SampleResult sample(const Energy& e, const DecodeConfig& config, const LanguageModel& lm,
                    std::span<const TokenId> prompt);

// Chains stacked chain-major into one array and back.
Array stack_chains(std::span<const SoftSequence> chains);
std::vector<SoftSequence> unstack_chains(const Array& rows, const BatchLayout& layout);

}  // namespace cold
