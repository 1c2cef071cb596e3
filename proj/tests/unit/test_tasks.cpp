#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "cold/error.hpp"
#include "cold/tasks.hpp"
#include "support/oracles.hpp"

using namespace cold;
using cold::testing::toy_models;

namespace {

TaskModels task_models() {
  const auto& m = toy_models();
  return {m.forward, m.reverse, m.stopwords};
}

TaskInstance abductive_instance() {
  const auto& v = toy_models().vocab;
  TaskInstance t;
  t.kind = TaskKind::abductive;
  t.id = "a";
  t.x_l = v.encode("one day mia went to the park .");
  t.x_r = v.encode("she found a red ball .");
  return t;
}

TaskInstance counterfactual_instance() {
  const auto& v = toy_models().vocab;
  TaskInstance t;
  t.kind = TaskKind::counterfactual;
  t.id = "c";
  t.x_l = v.encode("one day mia went to the park .");
  t.x_l_prime = v.encode("one day ben went to the park .");
  t.x_r = v.encode("she found a red ball .");
  return t;
}

TaskInstance lexical_instance() {
  const auto& v = toy_models().vocab;
  TaskInstance t;
  t.kind = TaskKind::lexical;
  t.id = "l";
  for (const char* w : {"ball", "park", "red"}) t.keywords.insert(*v.find(w));
  return t;
}

std::vector<std::string> labels(const EnergySpec& s) {
  std::vector<std::string> out;
  for (const auto& t : s.terms()) out.push_back(t.label);
  return out;
}

}  // namespace

TEST_CASE("default weights") {
  const auto a = WeightConfig::defaults(TaskKind::abductive);
  CHECK(a.a_lr == doctest::Approx(0.3));
  CHECK(a.a_rl == doctest::Approx(0.2));
  CHECK(a.b == doctest::Approx(0.5 / 1.05));
  CHECK(a.c == doctest::Approx(0.5 * 0.05 / 1.05));
  CHECK(a.b / a.c == doctest::Approx(20.0));
  CHECK(a.sum() == doctest::Approx(1.0));

  const auto c = WeightConfig::defaults(TaskKind::counterfactual);
  CHECK(c.a_lr == doctest::Approx(0.64));
  CHECK(c.a_rl == doctest::Approx(0.16));
  CHECK(c.b == doctest::Approx(0.2));
  CHECK(c.c == 0);

  const auto l = WeightConfig::defaults(TaskKind::lexical);
  CHECK(l.b == doctest::Approx(0.05));
  CHECK(l.c == doctest::Approx(0.45));

  WeightConfig w;
  w.set("b", 2);
  CHECK(w.b == 2);
  CHECK_THROWS_AS(w.set("d", 1), DomainError);
  w.b = -1;
  CHECK_THROWS_AS(w.validate(), DomainError);
}

TEST_CASE("decode defaults per task") {
  CHECK(task_decode_defaults(TaskKind::abductive).length == 10);
  CHECK(task_decode_defaults(TaskKind::abductive).num_samples == 16);
  CHECK(task_decode_defaults(TaskKind::counterfactual).length == 20);
  CHECK(task_decode_defaults(TaskKind::counterfactual).num_samples == 32);
  CHECK(task_decode_defaults(TaskKind::lexical).length == 10);
}

TEST_CASE("task energies have the documented terms") {
  const TaskModels lms = task_models();
  const auto a = abductive_energy(abductive_instance(), WeightConfig::defaults(TaskKind::abductive), lms);
  CHECK(labels(a) == std::vector<std::string>{"lm_forward", "lm_reverse", "pred", "sim"});
  const auto c =
      counterfactual_energy(counterfactual_instance(), WeightConfig::defaults(TaskKind::counterfactual), lms);
  CHECK(labels(c) == std::vector<std::string>{"lm_forward", "lm_reverse", "sim"});
  const auto l = lexical_energy(lexical_instance(), WeightConfig::defaults(TaskKind::lexical), lms);
  CHECK(labels(l) == std::vector<std::string>{"lm_forward", "lm_reverse", "sim", "pred"});

  TaskOptions opt;
  opt.ablation.no_revlm = true;
  opt.ablation.no_sim = true;
  CHECK(labels(abductive_energy(abductive_instance(), WeightConfig::defaults(TaskKind::abductive), lms, opt)) ==
        std::vector<std::string>{"lm_forward", "pred"});
  CHECK(opt.ablation.label() == "full-sim-revlm");
  CHECK(Ablation{}.label() == "full");
}

TEST_CASE("kind mismatches are rejected") {
  const TaskModels lms = task_models();
  const WeightConfig w = WeightConfig::defaults(TaskKind::abductive);
  CHECK_THROWS_AS(lexical_energy(abductive_instance(), w, lms), DomainError);
  CHECK_THROWS_AS(abductive_energy(lexical_instance(), w, lms), DomainError);
  CHECK_THROWS_AS(counterfactual_energy(abductive_instance(), w, lms), DomainError);
  TaskModels swapped = lms;
  std::swap(swapped.forward, swapped.reverse);
  CHECK_THROWS_AS(task_energy(abductive_instance(), w, swapped), DomainError);
}

TEST_CASE("similarity terms reach one at their targets") {
  const TaskModels lms = task_models();
  const std::size_t V = lms.vocab().size();

  SUBCASE("counterfactual: one-hot x_r") {
    TaskInstance inst = counterfactual_instance();
    inst.x_l_prime = inst.x_l;
    WeightConfig w{0, 0, 1, 0};
    const auto spec = counterfactual_energy(inst, w, lms);
    CHECK(-energy(spec, SoftSequence::one_hot(inst.x_r, V, 20)) == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("lexical: every keyword once") {
    const TaskInstance inst = lexical_instance();
    WeightConfig w{0, 0, 1, 0};
    const auto spec = lexical_energy(inst, w, lms);
    const Tokens y(inst.keywords.begin(), inst.keywords.end());
    CHECK(-energy(spec, SoftSequence::one_hot(y, V, 20)) == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("abductive: no new keywords gives a zero term") {
    TaskInstance inst = abductive_instance();
    inst.x_r = inst.x_l;
    CHECK(abductive_keywords(inst, lms.stopwords).empty());
    WeightConfig w{0, 0, 0, 1};
    const auto spec = abductive_energy(inst, w, lms);
    Rng rng(71);
    CHECK(energy(spec, SoftSequence(testing::random_array(rng, 3, V))) == 0.0);
  }
}

TEST_CASE("keyword helpers") {
  const auto& m = toy_models();
  const TaskInstance a = abductive_instance();
  const auto kw = abductive_keywords(a, m.stopwords);
  CHECK(kw.count(*m.vocab.find("ball")) == 1);
  CHECK(kw.count(*m.vocab.find("park")) == 0);
  CHECK(kw.count(*m.vocab.find("a")) == 0);
  const Tokens c = concatenate_keywords({30, 4, 17});
  CHECK(c == Tokens{4, 17, 30});
  CHECK(task_left_context(counterfactual_instance()) == counterfactual_instance().x_l_prime);
  CHECK(task_left_context(lexical_instance()).empty());
  CHECK(task_extra_tokens(lexical_instance(), m.stopwords) == lexical_instance().keywords);
}

TEST_CASE("energies built from presets pass the gradient check") {
  const TaskModels lms = task_models();
  Rng rng(72);
  for (const TaskInstance& inst : {abductive_instance(), counterfactual_instance(), lexical_instance()}) {
    CAPTURE(task_kind_name(inst.kind));
    const auto spec = task_energy(inst, WeightConfig::defaults(inst.kind), lms);
    Array x = testing::random_array(rng, 3, lms.vocab().size());
    const BatchLayout layout{1, 3};
    const Array g = spec.evaluate(x, layout).grad;
    double worst = 0;
    for (std::size_t i = 0; i < x.size(); i += 7) {
      const real keep = x[i];
      const double h = 1e-5;
      x[i] = keep + h;
      const double up = spec.evaluate(x, layout).total[0];
      x[i] = keep - h;
      const double down = spec.evaluate(x, layout).total[0];
      x[i] = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(fd)));
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("ranking rules") {
  auto cand = [](std::map<std::string, double> s) {
    Candidate c;
    c.scores = std::move(s);
    return c;
  };
  SUBCASE("abductive picks the best right perplexity among the five best joint") {
    std::vector<Candidate> pool;
    const double joint[] = {5, 1, 7, 3, 2, 4, 6};
    const double right[] = {0, 9, 0, 8, 7, 6, 0};
    for (int i = 0; i < 7; ++i) pool.push_back(cand({{"ppl_joint", joint[i]}, {"ppl_right", right[i]}}));
    // Top five by joint: 1, 4, 3, 5, 0; lowest right among them is index 0.
    CHECK(rank_pool(TaskKind::abductive, pool) == 0);
    CHECK(pool[0].rank == 0);
  }
  SUBCASE("counterfactual and lexical take the minimum") {
    std::vector<Candidate> pool = {cand({{"ppl_context", 3}}), cand({{"ppl_context", 1}}), cand({{"ppl_context", 1}})};
    CHECK(rank_pool(TaskKind::counterfactual, pool) == 1);
    std::vector<Candidate> lex = {cand({{"energy", 0.5}}), cand({{"energy", -2}})};
    CHECK(rank_pool(TaskKind::lexical, lex) == 1);
  }
  std::vector<Candidate> empty;
  CHECK_THROWS_AS(rank_pool(TaskKind::lexical, empty), DomainError);
}

TEST_CASE("sample and select") {
  const TaskModels lms = task_models();
  const TaskInstance inst = abductive_instance();
  const auto spec = task_energy(inst, WeightConfig::defaults(inst.kind), lms);
  DecodeConfig cfg = task_decode_defaults(inst.kind);
  cfg.iterations = 20;
  cfg.length = 4;
  cfg.num_samples = 10;
  const Selection sel = sample_and_select(spec, inst, cfg, lms);
  REQUIRE(sel.pool.size() == 10);
  std::vector<double> joint;
  for (const auto& c : sel.pool) {
    CHECK(c.filtered.size() == 4);
    CHECK(c.tokens.size() >= 4);
    CHECK(c.energy_terms.size() == 4);
    joint.push_back(c.scores.at("ppl_joint"));
  }
  std::sort(joint.begin(), joint.end());
  // With at least ten candidates the five best joint scores sit at or below the median.
  CHECK(sel.best().scores.at("ppl_joint") <= (joint[4] + joint[5]) / 2);
  CHECK(sel.best().rank == 0);

  cfg.num_samples = 1;
  const Selection one = sample_and_select(spec, inst, cfg, lms);
  CHECK(one.winner == 0);
}

TEST_CASE("instance files") {
  const auto& m = toy_models();
  const auto dir = std::filesystem::temp_directory_path() / "cold_unit";
  std::filesystem::create_directories(dir);

  for (TaskKind kind : {TaskKind::abductive, TaskKind::counterfactual, TaskKind::lexical}) {
    CAPTURE(task_kind_name(kind));
    const auto insts = generate_instances(kind, 5, 3, m.vocab, m.stopwords);
    REQUIRE(insts.size() == 5);
    for (const auto& i : insts) {
      CHECK_NOTHROW(i.validate(m.vocab));
      CHECK(!i.y_star.empty());
      if (kind == TaskKind::lexical) CHECK(i.keywords.size() == 3);
    }
    const auto path = dir / (std::string(task_kind_name(kind)) + ".jsonl");
    write_instances(path, insts, m.vocab);
    const auto back = read_instances(path, m.vocab);
    REQUIRE(back.size() == insts.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(instance_to_json(back[i], m.vocab) == instance_to_json(insts[i], m.vocab));
    }
    const auto again = generate_instances(kind, 5, 3, m.vocab, m.stopwords);
    CHECK(instance_to_json(again[4], m.vocab) == instance_to_json(insts[4], m.vocab));
  }

  CHECK_THROWS_AS(instance_from_json("{not json", m.vocab), FormatError);
  CHECK_THROWS_AS(instance_from_json(R"({"kind":"lexical","keywords":["ball","ball"]})", m.vocab), FormatError);
  CHECK_THROWS_AS(instance_from_json(R"({"kind":"lexical","keywords":["zzzz"]})", m.vocab), FormatError);
  CHECK_THROWS_AS(instance_from_json(R"({"kind":"lexical"})", m.vocab), DomainError);
  CHECK_THROWS_AS(instance_from_json(R"({"kind":"abductive","x_l":"one day"})", m.vocab), DomainError);
  const auto t = instance_from_json(R"({"kind":"lexical","keywords":["red","ball"]})", m.vocab);
  CHECK(t.keywords.size() == 2);
}
