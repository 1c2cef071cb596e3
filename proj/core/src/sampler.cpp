#include "cold/sampler.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "cold/error.hpp"

namespace cold {

// ---- energy ---------------------------------------------------------------

EnergySpec::EnergySpec(std::vector<EnergyTerm> terms) : terms_(std::move(terms)) {
  if (terms_.empty()) {
    throw DomainError("energy needs at least one term");
  }
  bool any_positive = false;
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    const real w = terms_[i].weight;
    if (!std::isfinite(w) || w < 0) {
      throw DomainError("energy term " + std::to_string(i) + " has invalid weight " + std::to_string(w));
    }
    any_positive = any_positive || w > 0;
    if (terms_[i].label.empty()) {
      terms_[i].label = terms_[i].fn.name();
    }
  }
  if (!any_positive) {
    throw DomainError("energy weights are all zero");
  }
}

EnergySpec EnergySpec::scaled(real factor) const {
  auto terms = terms_;
  for (auto& t : terms) {
    t.weight *= factor;
  }
  return EnergySpec(std::move(terms));
}

Var EnergySpec::build(Tape& tape, Var rows, const BatchLayout& layout, std::vector<Var>* term_values) const {
  BuildCache cache(tape);
  std::optional<Var> total;
  for (const auto& term : terms_) {
    Var v = term.fn.build(tape, rows, layout, &cache);
    if (term_values) {
      term_values->push_back(v);
    }
    Var weighted = scale(v, -term.weight);
    total = total ? add(*total, weighted) : weighted;
  }
  return *total;
}

EnergyEval EnergySpec::evaluate(const Array& rows, const BatchLayout& layout) const {
  Tape tape;
  Var x = tape.leaf_ref(rows);
  std::vector<Var> values;
  Var per_chain = build(tape, x, layout, &values);
  tape.backward(sum(per_chain));

  EnergyEval out;
  out.total.resize(layout.batch);
  out.terms.assign(layout.batch, std::vector<double>(terms_.size()));
  for (std::size_t b = 0; b < layout.batch; ++b) {
    out.total[b] = static_cast<double>(per_chain.value()(b, 0));
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      out.terms[b][i] = static_cast<double>(terms_[i].weight * values[i].value()(b, 0));
    }
  }
  out.grad = x.grad();

  const bool values_ok = std::all_of(out.total.begin(), out.total.end(), [](double v) { return std::isfinite(v); });
  if (!values_ok || !out.grad.all_finite()) {
    // Locate the offending term by differentiating each one alone.
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      Tape single;
      Var xi = single.leaf_ref(rows);
      Var v = terms_[i].fn.build(single, xi, layout);
      single.backward(sum(v));
      if (!v.value().all_finite() || !xi.grad().all_finite()) {
        throw NumericalError("energy term " + std::to_string(i) + " (" + terms_[i].label +
                             ") produced a non-finite value or gradient");
      }
    }
    throw NumericalError("energy produced a non-finite value or gradient");
  }
  return out;
}

EnergyEval QuadraticEnergy::evaluate(const Array& rows, const BatchLayout& layout) const {
  if (mu_.rows() != layout.length || rows.cols() != mu_.cols() || rows.rows() != layout.batch * layout.length) {
    throw ShapeError("quadratic energy: rows " + shape_string(rows) + " do not match target " + shape_string(mu_));
  }
  EnergyEval out;
  out.total.assign(layout.batch, 0.0);
  out.terms.assign(layout.batch, std::vector<double>(1));
  out.grad = Array(rows.rows(), rows.cols());
  const std::size_t block = mu_.size();
  for (std::size_t b = 0; b < layout.batch; ++b) {
    double e = 0;
    for (std::size_t i = 0; i < block; ++i) {
      const real d = rows[b * block + i] - mu_[i];
      out.grad[b * block + i] = d;
      e += 0.5 * static_cast<double>(d) * static_cast<double>(d);
    }
    out.total[b] = e;
    out.terms[b][0] = -e;
  }
  return out;
}

double energy(const Energy& e, const SoftSequence& y) {
  return e.evaluate(y.logits, {1, y.length()}).total[0];
}

// ---- noise schedule -------------------------------------------------------

NoiseSchedule::NoiseSchedule(std::vector<std::pair<std::size_t, double>> breakpoints)
    : breakpoints_(std::move(breakpoints)) {
  if (breakpoints_.empty() || breakpoints_.front().first != 0) {
    throw DomainError("noise schedule must start at iteration 0");
  }
  for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
    const double s = breakpoints_[i].second;
    if (!std::isfinite(s) || s < 0) {
      throw DomainError("noise schedule value " + std::to_string(s) + " must be finite and non-negative");
    }
    if (i > 0) {
      if (breakpoints_[i].first <= breakpoints_[i - 1].first) {
        throw DomainError("noise schedule iterations must be strictly increasing");
      }
      if (s > breakpoints_[i - 1].second) {
        throw DomainError("noise schedule values must be non-increasing");
      }
    }
  }
}

NoiseSchedule NoiseSchedule::standard() {
  return NoiseSchedule({{0, 1.0}, {50, 0.5}, {500, 0.1}, {1000, 0.05}, {1500, 0.01}});
}

NoiseSchedule NoiseSchedule::constant(double sigma) { return NoiseSchedule({{0, sigma}}); }

NoiseSchedule NoiseSchedule::parse(std::string_view text) {
  std::vector<std::pair<std::size_t, double>> points;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos) {
      end = text.size();
    }
    const std::string_view item = text.substr(pos, end - pos);
    const std::size_t colon = item.find(':');
    if (colon == std::string_view::npos) {
      throw DomainError("noise schedule entry '" + std::string(item) + "' is not iteration:sigma");
    }
    std::size_t iter = 0;
    const auto key = item.substr(0, colon);
    const auto r = std::from_chars(key.data(), key.data() + key.size(), iter);
    if (r.ec != std::errc() || r.ptr != key.data() + key.size()) {
      throw DomainError("noise schedule iteration '" + std::string(key) + "' is not an integer");
    }
    const std::string value(item.substr(colon + 1));
    std::size_t used = 0;
    double sigma = 0;
    try {
      sigma = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) {
      throw DomainError("noise schedule value '" + value + "' is not a number");
    }
    points.emplace_back(iter, sigma);
    pos = end + 1;
  }
  return NoiseSchedule(std::move(points));
}

double NoiseSchedule::sigma_at(std::size_t iteration) const {
  auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), iteration,
                             [](std::size_t n, const auto& bp) { return n < bp.first; });
  return std::prev(it)->second;
}

std::string NoiseSchedule::to_string() const {
  // Shortest round-trip form, so parse(to_string()) is exact.
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
    const double sigma = static_cast<double>(breakpoints_[i].second);
    const auto end = std::to_chars(buf, buf + sizeof buf, sigma).ptr;
    out += (i ? "," : "") + std::to_string(breakpoints_[i].first) + ':' + std::string(buf, end);
  }
  return out;
}

void DecodeConfig::validate() const {
  if (iterations < 1) throw DomainError("iterations must be at least 1");
  if (!(eta >= 0) || !std::isfinite(eta)) throw DomainError("step size must be finite and non-negative");
  if (length < 1) throw DomainError("length must be at least 1");
  if (!(tau > 0) || !std::isfinite(tau)) throw DomainError("temperature must be positive");
  if (topk < 1) throw DomainError("top-k must be at least 1");
  if (num_samples < 1) throw DomainError("num_samples must be at least 1");
  if (trace_every < 1) throw DomainError("trace interval must be at least 1");
}

// ---- sampling -------------------------------------------------------------

SoftSequence init_soft_sequence(const LanguageModel& lm, std::span<const TokenId> prompt, std::size_t length) {
  if (length < 1) {
    throw DomainError("soft sequence length must be at least 1");
  }
  return SoftSequence(greedy_decode(lm, prompt, length).logits);
}

namespace {

void apply_update(Array& rows, const Array& grad, const BatchLayout& layout, double eta, double sigma,
                  std::span<Rng> rngs, bool clip) {
  const std::size_t block = layout.length * rows.cols();
  for (std::size_t b = 0; b < layout.batch; ++b) {
    Rng& rng = rngs[b];
    for (std::size_t i = b * block; i < (b + 1) * block; ++i) {
      real g = grad[i];
      if (clip) {
        g = std::clamp(g, -kGradientClip, kGradientClip);
      }
      rows[i] -= static_cast<real>(eta) * g;
      if (sigma > 0) {
        rows[i] += static_cast<real>(rng.normal(sigma));
      }
    }
  }
}

void record(std::vector<std::vector<TracePoint>>& traces, std::size_t iteration, const EnergyEval& ev) {
  for (std::size_t b = 0; b < traces.size(); ++b) {
    traces[b].push_back({iteration, ev.total[b], ev.terms[b]});
  }
}

}  // namespace

SoftSequence langevin_step(const SoftSequence& y, const Energy& e, double eta, double sigma, Rng& rng,
                           bool clip_gradient) {
  if (!(sigma >= 0)) {
    throw DomainError("noise scale must be non-negative");
  }
  const BatchLayout layout{1, y.length()};
  SoftSequence out = y;
  const EnergyEval ev = e.evaluate(y.logits, layout);
  apply_update(out.logits, ev.grad, layout, eta, sigma, std::span<Rng>(&rng, 1), clip_gradient);
  return out;
}

std::vector<std::vector<TracePoint>> run_chains(Array& rows, const BatchLayout& layout, const Energy& e,
                                                const DecodeConfig& config, std::vector<Rng>& rngs) {
  config.validate();
  if (rngs.size() != layout.batch) {
    throw DomainError("run_chains: one generator per chain is required");
  }
  std::vector<std::vector<TracePoint>> traces(layout.batch);
  for (std::size_t n = 0; n < config.iterations; ++n) {
    const EnergyEval ev = e.evaluate(rows, layout);
    if (n % config.trace_every == 0) {
      record(traces, n, ev);
    }
    apply_update(rows, ev.grad, layout, config.eta, config.schedule.sigma_at(n), rngs, config.clip_gradient);
    if (!rows.all_finite()) {
      throw NumericalError("soft sequence became non-finite at iteration " + std::to_string(n + 1));
    }
  }
  record(traces, config.iterations, e.evaluate(rows, layout));
  return traces;
}

Array stack_chains(std::span<const SoftSequence> chains) {
  if (chains.empty()) {
    throw DomainError("no chains to stack");
  }
  const std::size_t T = chains[0].length();
  const std::size_t V = chains[0].vocab_size();
  Array rows(chains.size() * T, V);
  for (std::size_t b = 0; b < chains.size(); ++b) {
    if (chains[b].length() != T || chains[b].vocab_size() != V) {
      throw ShapeError("chains differ in shape: " + shape_string(chains[0].logits) + " vs " +
                       shape_string(chains[b].logits));
    }
    std::copy(chains[b].logits.values().begin(), chains[b].logits.values().end(),
              rows.values().begin() + static_cast<std::ptrdiff_t>(b * T * V));
  }
  return rows;
}

std::vector<SoftSequence> unstack_chains(const Array& rows, const BatchLayout& layout) {
  std::vector<SoftSequence> out;
  const std::size_t block = layout.length * rows.cols();
  for (std::size_t b = 0; b < layout.batch; ++b) {
    auto first = rows.values().begin() + static_cast<std::ptrdiff_t>(b * block);
    out.emplace_back(Array(layout.length, rows.cols(), std::vector<real>(first, first + static_cast<std::ptrdiff_t>(block))));
  }
  return out;
}

SampleResult sample(const Energy& e, const DecodeConfig& config, const LanguageModel& lm,
                    std::span<const TokenId> prompt) {
  config.validate();
  const SoftSequence init = init_soft_sequence(lm, prompt, config.length);
  const std::vector<SoftSequence> chains(config.num_samples, init);
  Array rows = stack_chains(chains);
  std::vector<Rng> rngs;
  rngs.reserve(config.num_samples);
  for (std::size_t i = 0; i < config.num_samples; ++i) {
    rngs.emplace_back(derive_seed(config.seed, i));
  }
  const BatchLayout layout{config.num_samples, config.length};
  SampleResult out;
  out.traces = run_chains(rows, layout, e, config, rngs);
  out.samples = unstack_chains(rows, layout);
  return out;
}

}  // namespace cold
