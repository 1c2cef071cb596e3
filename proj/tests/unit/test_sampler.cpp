#include <doctest.h>

#include <cmath>
#include <limits>

#include "cold/error.hpp"
#include "cold/sampler.hpp"
#include "support/oracles.hpp"

using namespace cold;
using cold::testing::toy_models;

namespace {

EnergySpec two_terms(real a = 1, real b = 0.5) {
  const auto& m = toy_models();
  return EnergySpec({{ConstraintFn::fluency_forward(m.forward, {10}), a, "fluency"},
                     {ConstraintFn::ngram_similarity({20, 21}, {1}, m.vocab.size()), b, "sim"}});
}

}  // namespace

TEST_CASE("energy is the negative weighted sum") {
  const auto& m = toy_models();
  Rng rng(51);
  const SoftSequence y(testing::random_array(rng, 3, m.vocab.size()));
  const auto fn = ConstraintFn::fluency_forward(m.forward, {10});
  const EnergySpec one({{fn, 1, "f"}});
  CHECK(energy(one, y) == doctest::Approx(-fn.evaluate(y)).epsilon(1e-14));

  const EnergySpec spec = two_terms();
  CHECK(energy(spec.scaled(2), y) == doctest::Approx(2 * energy(spec, y)).epsilon(1e-14));

  const EnergyEval ev = spec.evaluate(y.logits, {1, 3});
  CHECK(ev.terms[0].size() == 2);
  CHECK(ev.total[0] == doctest::Approx(-(ev.terms[0][0] + ev.terms[0][1])).epsilon(1e-14));
}

TEST_CASE("energy specs reject bad weights") {
  const auto fn = ConstraintFn::keyword_similarity({5}, 10);
  CHECK_THROWS_AS(EnergySpec({{fn, 0, "a"}, {fn, 0, "b"}}), DomainError);
  CHECK_THROWS_AS(EnergySpec({{fn, -1, "a"}}), DomainError);
  CHECK_THROWS_AS(EnergySpec({{fn, std::numeric_limits<real>::infinity(), "a"}}), DomainError);
  CHECK_THROWS_AS(EnergySpec(std::vector<EnergyTerm>{}), DomainError);
}

TEST_CASE("non-finite terms are named") {
  const auto& m = toy_models();
  auto broken = std::make_shared<LanguageModel>(*m.forward);
  broken->mutable_params().b_out(0, 5) = std::numeric_limits<real>::quiet_NaN();
  const EnergySpec spec({{ConstraintFn::ngram_similarity({20}, {1}, m.vocab.size()), 1, "sim"},
                         {ConstraintFn::fluency_forward(broken, {}), 1, "lm_forward"}});
  Rng rng(52);
  try {
    langevin_step(SoftSequence(testing::random_array(rng, 2, m.vocab.size())), spec, 0.1, 0.0, rng);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("1") != std::string::npos);
    CHECK(msg.find("lm_forward") != std::string::npos);
  }
}

TEST_CASE("greedy initialization") {
  const auto& m = toy_models();
  const Tokens prompt = m.vocab.encode("one day");
  const SoftSequence a = init_soft_sequence(*m.forward, prompt, 6);
  CHECK(a.length() == 6);
  CHECK(a.vocab_size() == m.vocab.size());
  CHECK(a.argmax() == greedy_decode(*m.forward, prompt, 6).tokens);
  CHECK(a.logits == init_soft_sequence(*m.forward, prompt, 6).logits);
}

TEST_CASE("Langevin steps") {
  const auto& m = toy_models();
  Rng init(53);
  const SoftSequence y(testing::random_array(init, 3, m.vocab.size()));
  const EnergySpec spec = two_terms();

  SUBCASE("zero step and zero noise is the identity") {
    Rng rng(1);
    CHECK(langevin_step(y, spec, 0.0, 0.0, rng).logits == y.logits);
  }
  SUBCASE("a fixed seed gives identical steps") {
    Rng a(9), b(9);
    CHECK(langevin_step(y, spec, 0.1, 0.5, a).logits == langevin_step(y, spec, 0.1, 0.5, b).logits);
  }
  SUBCASE("negative noise is rejected") {
    Rng rng(1);
    CHECK_THROWS_AS(langevin_step(y, spec, 0.1, -0.1, rng), DomainError);
  }
  SUBCASE("scaling weights and step inversely leaves a noiseless step unchanged") {
    Rng a(1), b(1);
    const Array s1 = langevin_step(y, spec, 0.1, 0.0, a).logits;
    const Array s2 = langevin_step(y, spec.scaled(4), 0.025, 0.0, b).logits;
    for (std::size_t i = 0; i < s1.size(); ++i) CHECK(std::abs(s1[i] - s2[i]) < 1e-12);
  }
  SUBCASE("gradient clipping bounds each update entry") {
    const EnergySpec big = spec.scaled(1e4);
    Rng rng(1);
    const Array out = langevin_step(y, big, 1.0, 0.0, rng, true).logits;
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(out[i] - y.logits[i]) <= kGradientClip + 1e-12);
  }
}

TEST_CASE("noiseless steps contract towards the quadratic minimum") {
  Rng rng(54);
  const Array mu = testing::random_array(rng, 2, 3);
  const QuadraticEnergy e(mu);
  SoftSequence z(Array(2, 3));
  auto dist = [&](const SoftSequence& s) {
    double d = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) d = std::max(d, std::abs(static_cast<double>(s.logits[i] - mu[i])));
    return d;
  };
  double prev = dist(z);
  for (int n = 0; n < 50; ++n) {
    z = langevin_step(z, e, 0.3, 0.0, rng);
    const double d = dist(z);
    CHECK(d < prev);
    CHECK(d == doctest::Approx(0.7 * prev).epsilon(1e-9));
    prev = d;
  }
}

TEST_CASE("stationary spread on the quadratic target") {
  // Unit curvature, step eta, noise sd sigma: the chain is AR(1) with
  // coefficient 1 - eta, so the stationary variance is sigma^2 / (eta (2 - eta)).
  const double eta = 0.1;
  const double sigma = 0.1;
  const Array mu = Array::from_rows({{0.5, -1.0, 2.0}});
  const QuadraticEnergy e(mu);
  const std::size_t chains = 200;
  DecodeConfig cfg;
  cfg.iterations = 400;
  cfg.eta = eta;
  cfg.length = 1;
  cfg.schedule = NoiseSchedule::constant(sigma);
  Array rows(chains, 3);
  std::vector<Rng> rngs;
  for (std::size_t i = 0; i < chains; ++i) rngs.emplace_back(derive_seed(77, i));
  run_chains(rows, {chains, 1}, e, cfg, rngs);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, sq = 0;
    for (std::size_t b = 0; b < chains; ++b) mean += rows(b, c);
    mean /= chains;
    for (std::size_t b = 0; b < chains; ++b) sq += (rows(b, c) - mean) * (rows(b, c) - mean);
    const double var = sq / (chains - 1);
    const double expected = sigma * sigma / (eta * (2 - eta));
    CHECK(std::abs(var - expected) < 0.3 * expected);
    CHECK(std::abs(mean - mu[c]) < 0.06);
  }
}

TEST_CASE("noise schedule") {
  const NoiseSchedule s = NoiseSchedule::standard();
  CHECK(s.to_string() == "0:1,50:0.5,500:0.1,1000:0.05,1500:0.01");
  CHECK(s.sigma_at(0) == 1.0);
  CHECK(s.sigma_at(49) == 1.0);
  CHECK(s.sigma_at(50) == 0.5);
  CHECK(s.sigma_at(999) == 0.1);
  CHECK(s.sigma_at(1500) == 0.01);
  CHECK(s.sigma_at(100000) == 0.01);
  double prev = 2;
  for (std::size_t n = 0; n < 2000; n += 7) {
    CHECK(s.sigma_at(n) <= prev);
    prev = s.sigma_at(n);
  }
  CHECK(NoiseSchedule::parse("0:1,50:0.5,500:0.1,1000:0.05,1500:0.01").breakpoints() == s.breakpoints());
  CHECK_THROWS_AS(NoiseSchedule::parse("5:1"), DomainError);
  CHECK_THROWS_AS(NoiseSchedule::parse("0:1,10:2"), DomainError);
  CHECK_THROWS_AS(NoiseSchedule::parse("0:1,10:0.5,10:0.4"), DomainError);
  CHECK_THROWS_AS(NoiseSchedule::parse("0:x"), DomainError);
  CHECK(NoiseSchedule::constant(0).sigma_at(10) == 0);
}

TEST_CASE("decode configuration defaults and validation") {
  const DecodeConfig c;
  CHECK(c.iterations == 2000);
  CHECK(c.eta == 0.1);
  CHECK(c.length == 10);
  CHECK(c.num_samples == 16);
  CHECK(c.topk == 10);
  CHECK(c.tau == 1);
  CHECK_FALSE(c.clip_gradient);
  DecodeConfig bad = c;
  bad.iterations = 0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = c;
  bad.tau = 0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = c;
  bad.num_samples = 0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("sampling is deterministic and traced") {
  const auto& m = toy_models();
  DecodeConfig cfg;
  cfg.iterations = 25;
  cfg.length = 4;
  cfg.num_samples = 3;
  cfg.seed = 8;
  const EnergySpec spec = two_terms();
  const Tokens prompt = {10};
  const SampleResult a = sample(spec, cfg, *m.forward, prompt);
  const SampleResult b = sample(spec, cfg, *m.forward, prompt);
  REQUIRE(a.samples.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.samples[i].logits == b.samples[i].logits);
    REQUIRE(a.traces[i].size() == 4);
    CHECK(a.traces[i][0].iteration == 0);
    CHECK(a.traces[i][2].iteration == 20);
    CHECK(a.traces[i][3].iteration == 25);
    for (std::size_t k = 0; k < a.traces[i].size(); ++k) CHECK(a.traces[i][k].total == b.traces[i][k].total);
  }
  CHECK(a.samples[0].logits != a.samples[1].logits);

  SUBCASE("a chain does not depend on how many chains run") {
    DecodeConfig two = cfg;
    two.num_samples = 2;
    const SampleResult c = sample(spec, two, *m.forward, prompt);
    CHECK(c.samples[1].logits == a.samples[1].logits);
  }
}
