#include "cold/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "cold/corpus.hpp"
#include "cold/error.hpp"

namespace cold {

const char* task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::abductive: return "abductive";
    case TaskKind::counterfactual: return "counterfactual";
    case TaskKind::lexical: return "lexical";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view s) {
  if (s == "abductive") return TaskKind::abductive;
  if (s == "counterfactual") return TaskKind::counterfactual;
  if (s == "lexical") return TaskKind::lexical;
  throw DomainError("unknown task kind '" + std::string(s) + "'");
}

void TaskInstance::validate(const Vocabulary& vocab) const {
  const std::string where = "instance " + (id.empty() ? std::string("<unnamed>") : id);
  auto need = [&](const Tokens& t, const char* field) {
    if (t.empty()) {
      throw DomainError(where + ": field " + field + " is required for " + task_kind_name(kind) + " tasks");
    }
    vocab.validate(t, where + " " + field);
  };
  switch (kind) {
    case TaskKind::abductive:
      need(x_l, "x_l");
      need(x_r, "x_r");
      break;
    case TaskKind::counterfactual:
      need(x_l, "x_l");
      need(x_r, "x_r");
      need(x_l_prime, "x_l_prime");
      break;
    case TaskKind::lexical:
      if (keywords.empty()) {
        throw DomainError(where + ": lexical tasks need at least one keyword");
      }
      vocab.validate(Tokens(keywords.begin(), keywords.end()), where + " keywords");
      break;
  }
  vocab.validate(y_star, where + " y_star");
}

// ---- weights --------------------------------------------------------------

WeightConfig WeightConfig::defaults(TaskKind kind) {
  switch (kind) {
    case TaskKind::abductive:
      // The remaining 0.5 is split 1 : 0.05 between prediction and similarity.
      return {real(0.3), real(0.2), real(0.5 / 1.05), real(0.5 * 0.05 / 1.05)};
    case TaskKind::counterfactual:
      return {real(0.64), real(0.16), real(0.2), real(0)};
    case TaskKind::lexical:
      return {real(0.3), real(0.2), real(0.05), real(0.45)};
  }
  throw DomainError("unknown task kind");
}

void WeightConfig::set(std::string_view key, real value) {
  if (key == "a_lr") a_lr = value;
  else if (key == "a_rl") a_rl = value;
  else if (key == "b") b = value;
  else if (key == "c") c = value;
  else throw DomainError("unknown weight '" + std::string(key) + "' (expected a_lr, a_rl, b or c)");
}

void WeightConfig::validate() const {
  for (real v : {a_lr, a_rl, b, c}) {
    if (!std::isfinite(v) || v < 0) {
      throw DomainError("weights must be finite and non-negative");
    }
  }
}

std::string Ablation::label() const {
  std::string out = "full";
  if (no_sim) out += "-sim";
  if (no_revlm) out += "-revlm";
  if (no_pred) out += "-pred";
  return out;
}

void TaskModels::validate() const {
  if (!forward || !reverse) {
    throw DomainError("both forward and reverse language models are required");
  }
  require_direction(*forward, Direction::forward, "forward model");
  require_direction(*reverse, Direction::reverse, "reverse model");
  if (forward->vocab().hash() != reverse->vocab().hash()) {
    throw FormatError("forward and reverse models use different vocabularies (" + hex64(forward->vocab().hash()) +
                      " vs " + hex64(reverse->vocab().hash()) + ")");
  }
}

// ---- energies -------------------------------------------------------------

namespace {

void require_kind(const TaskInstance& inst, TaskKind kind, const char* what) {
  if (inst.kind != kind) {
    throw DomainError(std::string(what) + ": instance " + inst.id + " is a " + task_kind_name(inst.kind) + " task");
  }
}

struct TermList {
  std::vector<EnergyTerm> terms;

  void add(bool enabled, real weight, const char* label, auto make) {
    if (enabled && weight > 0) {
      terms.push_back({make(), weight, label});
    }
  }
};

}  // namespace

std::set<TokenId> abductive_keywords(const TaskInstance& inst, const std::set<TokenId>& stopwords) {
  const auto right = keyword_set(inst.x_r, stopwords);
  const auto left = keyword_set(inst.x_l, stopwords);
  std::set<TokenId> out;
  std::set_difference(right.begin(), right.end(), left.begin(), left.end(), std::inserter(out, out.end()));
  return out;
}

Tokens concatenate_keywords(const std::set<TokenId>& keywords) { return Tokens(keywords.begin(), keywords.end()); }

EnergySpec abductive_energy(const TaskInstance& inst, const WeightConfig& w, const TaskModels& lms,
                            const TaskOptions& opt) {
  require_kind(inst, TaskKind::abductive, "abductive_energy");
  lms.validate();
  w.validate();
  inst.validate(lms.vocab());
  const std::size_t V = lms.vocab().size();
  TermList t;
  t.add(true, w.a_lr, kTermLmForward,
        [&] { return ConstraintFn::fluency_forward(lms.forward, inst.x_l, opt.tau, opt.detach_reference); });
  t.add(!opt.ablation.no_revlm, w.a_rl, kTermLmReverse,
        [&] { return ConstraintFn::fluency_reverse(lms.reverse, inst.x_r, opt.tau, opt.detach_reference); });
  t.add(!opt.ablation.no_pred, w.b, kTermPred,
        [&] { return ConstraintFn::future_prediction(lms.forward, inst.x_r, opt.tau); });
  t.add(!opt.ablation.no_sim, w.c, kTermSim, [&] {
    return ConstraintFn::keyword_similarity(abductive_keywords(inst, lms.stopwords), V, opt.tau);
  });
  return EnergySpec(std::move(t.terms));
}

EnergySpec counterfactual_energy(const TaskInstance& inst, const WeightConfig& w, const TaskModels& lms,
                                 const TaskOptions& opt) {
  require_kind(inst, TaskKind::counterfactual, "counterfactual_energy");
  lms.validate();
  w.validate();
  inst.validate(lms.vocab());
  const std::size_t V = lms.vocab().size();
  TermList t;
  t.add(true, w.a_lr, kTermLmForward,
        [&] { return ConstraintFn::fluency_forward(lms.forward, inst.x_l_prime, opt.tau, opt.detach_reference); });
  t.add(!opt.ablation.no_revlm, w.a_rl, kTermLmReverse,
        [&] { return ConstraintFn::fluency_reverse(lms.reverse, {}, opt.tau, opt.detach_reference); });
  t.add(!opt.ablation.no_sim, w.b, kTermSim,
        [&] { return ConstraintFn::ngram_similarity(inst.x_r, {2, 3}, V, opt.tau); });
  // Slot c is unused by this preset; a positive override adds prediction of x_r.
  t.add(!opt.ablation.no_pred, w.c, kTermPred,
        [&] { return ConstraintFn::future_prediction(lms.forward, inst.x_r, opt.tau); });
  return EnergySpec(std::move(t.terms));
}

EnergySpec lexical_energy(const TaskInstance& inst, const WeightConfig& w, const TaskModels& lms,
                          const TaskOptions& opt) {
  require_kind(inst, TaskKind::lexical, "lexical_energy");
  lms.validate();
  w.validate();
  inst.validate(lms.vocab());
  const std::size_t V = lms.vocab().size();
  TermList t;
  t.add(true, w.a_lr, kTermLmForward,
        [&] { return ConstraintFn::fluency_forward(lms.forward, {}, opt.tau, opt.detach_reference); });
  t.add(!opt.ablation.no_revlm, w.a_rl, kTermLmReverse,
        [&] { return ConstraintFn::fluency_reverse(lms.reverse, {}, opt.tau, opt.detach_reference); });
  t.add(!opt.ablation.no_sim, w.b, kTermSim,
        [&] { return ConstraintFn::keyword_similarity(inst.keywords, V, opt.tau); });
  t.add(!opt.ablation.no_pred, w.c, kTermPred, [&] {
    return ConstraintFn::future_prediction(lms.forward, concatenate_keywords(inst.keywords), opt.tau);
  });
  return EnergySpec(std::move(t.terms));
}

EnergySpec task_energy(const TaskInstance& inst, const WeightConfig& w, const TaskModels& lms,
                       const TaskOptions& opt) {
  switch (inst.kind) {
    case TaskKind::abductive: return abductive_energy(inst, w, lms, opt);
    case TaskKind::counterfactual: return counterfactual_energy(inst, w, lms, opt);
    case TaskKind::lexical: return lexical_energy(inst, w, lms, opt);
  }
  throw DomainError("unknown task kind");
}

Tokens task_left_context(const TaskInstance& inst) {
  switch (inst.kind) {
    case TaskKind::abductive: return inst.x_l;
    case TaskKind::counterfactual: return inst.x_l_prime;
    case TaskKind::lexical: return {};
  }
  return {};
}

std::set<TokenId> task_extra_tokens(const TaskInstance& inst, const std::set<TokenId>& stopwords) {
  switch (inst.kind) {
    case TaskKind::abductive: return abductive_keywords(inst, stopwords);
    case TaskKind::counterfactual: return {};
    case TaskKind::lexical: return inst.keywords;
  }
  return {};
}

DecodeConfig task_decode_defaults(TaskKind kind) {
  DecodeConfig c;
  if (kind == TaskKind::counterfactual) {
    c.length = 20;
    c.num_samples = 32;
  }
  return c;
}

// ---- sample and select ----------------------------------------------------

namespace {

Tokens concat(std::initializer_list<const Tokens*> parts) {
  Tokens out;
  for (const Tokens* p : parts) {
    out.insert(out.end(), p->begin(), p->end());
  }
  return out;
}

std::vector<std::size_t> order_by(const std::vector<Candidate>& pool, const std::string& key) {
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return pool[a].scores.at(key) < pool[b].scores.at(key); });
  return idx;
}

}  // namespace

std::size_t rank_pool(TaskKind kind, std::vector<Candidate>& pool) {
  if (pool.empty()) {
    throw DomainError("cannot rank an empty pool");
  }
  std::vector<std::size_t> order;
  switch (kind) {
    case TaskKind::abductive: {
      order = order_by(pool, "ppl_joint");
      const std::size_t top = std::min<std::size_t>(5, order.size());
      std::size_t best = 0;
      for (std::size_t i = 1; i < top; ++i) {
        if (pool[order[i]].scores.at("ppl_right") < pool[order[best]].scores.at("ppl_right")) {
          best = i;
        }
      }
      std::rotate(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(best),
                  order.begin() + static_cast<std::ptrdiff_t>(best + 1));
      break;
    }
    case TaskKind::counterfactual: order = order_by(pool, "ppl_context"); break;
    case TaskKind::lexical: order = order_by(pool, "energy"); break;
  }
  for (std::size_t r = 0; r < order.size(); ++r) {
    pool[order[r]].rank = r;
  }
  return order.front();
}

Selection sample_and_select(const EnergySpec& spec, const TaskInstance& inst, const DecodeConfig& config,
                            const TaskModels& lms, const SelectOptions& opt) {
  lms.validate();
  config.validate();
  const LanguageModel& fwd = *lms.forward;
  const Tokens left = task_left_context(inst);

  SampleResult sr = sample(spec, config, fwd, left);

  DiscretizeConfig dc;
  dc.k = config.topk;
  dc.extra_tokens = task_extra_tokens(inst, lms.stopwords);
  dc.max_continuation = opt.max_continuation;

  Selection sel;
  sel.traces = std::move(sr.traces);
  std::vector<SoftSequence> casts;
  for (std::size_t i = 0; i < sr.samples.size(); ++i) {
    Candidate c;
    c.chain = i;
    c.soft_argmax = sr.samples[i].argmax();
    c.filtered = topk_filter(sr.samples[i], fwd, dc, left);
    c.tokens = continue_sequence(fwd, c.filtered, dc, left);
    casts.push_back(SoftSequence::one_hot(c.filtered, fwd.vocab_size(), opt.cast_scale));
    sel.pool.push_back(std::move(c));
  }

  const BatchLayout layout{casts.size(), config.length};
  const EnergyEval ev = spec.evaluate(stack_chains(casts), layout);
  for (std::size_t i = 0; i < sel.pool.size(); ++i) {
    Candidate& c = sel.pool[i];
    c.energy = ev.total[i];
    c.energy_terms = ev.terms[i];
    c.scores["energy"] = c.energy;
    switch (inst.kind) {
      case TaskKind::abductive:
        c.scores["ppl_joint"] = perplexity(fwd, concat({&inst.x_l, &c.tokens, &inst.x_r}));
        c.scores["ppl_right"] = perplexity(fwd, concat({&c.tokens, &inst.x_r}));
        break;
      case TaskKind::counterfactual:
        c.scores["ppl_context"] = perplexity(fwd, concat({&inst.x_l_prime, &c.tokens}));
        break;
      case TaskKind::lexical: break;
    }
  }
  sel.winner = rank_pool(inst.kind, sel.pool);
  return sel;
}

// ---- synthetic instances --------------------------------------------------

namespace {

std::optional<Tokens> try_encode(const Vocabulary& vocab, const std::vector<Sentence>& sentences) {
  Sentence words;
  for (const auto& s : sentences) {
    words.insert(words.end(), s.begin(), s.end());
  }
  for (const auto& w : words) {
    if (!vocab.find(w)) {
      return std::nullopt;
    }
  }
  return vocab.encode(words);
}

std::string pick_other(Rng& rng, const std::vector<std::string>& options, const std::string& current) {
  for (;;) {
    const std::string& c = options[rng.below(options.size())];
    if (c != current) {
      return c;
    }
  }
}

std::string instance_id(TaskKind kind, std::size_t i) {
  std::string n = std::to_string(i);
  return std::string(task_kind_name(kind)).substr(0, 3) + "-" + std::string(n.size() < 3 ? 3 - n.size() : 0, '0') + n;
}

}  // namespace

std::vector<TaskInstance> generate_instances(TaskKind kind, std::size_t count, std::uint64_t seed,
                                             const Vocabulary& vocab, const std::set<TokenId>& stopwords,
                                             std::size_t keywords_per_instance) {
  const StoryGrammar& g = story_grammar();
  Rng rng(seed);
  std::vector<TaskInstance> out;
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 1000 * (count + 1)) {
      throw DomainError("could not generate task instances from this vocabulary");
    }
    TaskInstance inst;
    inst.kind = kind;
    const StoryCast cast = g.sample_cast(rng);
    if (kind == TaskKind::abductive) {
      const auto story = g.sample_story(rng, cast, false);
      auto xl = try_encode(vocab, {story[0]});
      auto ys = try_encode(vocab, {story[1]});
      auto xr = try_encode(vocab, {story[2]});
      if (!xl || !ys || !xr) continue;
      inst.x_l = *xl;
      inst.y_star = *ys;
      inst.x_r = *xr;
    } else if (kind == TaskKind::counterfactual) {
      Rng replay = rng;
      const auto story = g.sample_story(rng, cast, false);
      StoryCast changed = cast;
      changed.animal = pick_other(rng, g.categories().at("animal"), cast.animal);
      changed.object = pick_other(rng, g.categories().at("object"), cast.object);
      const auto altered = g.sample_story(replay, changed, false);
      auto xl = try_encode(vocab, {story[0], story[1]});
      auto xr = try_encode(vocab, {story[2]});
      auto xlp = try_encode(vocab, {altered[0], altered[1]});
      auto ys = try_encode(vocab, {altered[2]});
      if (!xl || !xr || !xlp || !ys) continue;
      inst.x_l = *xl;
      inst.x_r = *xr;
      inst.x_l_prime = *xlp;
      inst.y_star = *ys;
    } else {
      const auto story = g.sample_story(rng);
      std::vector<Tokens> usable;
      for (const auto& s : story) {
        auto ids = try_encode(vocab, {s});
        if (ids && ids->size() <= 7 && keyword_set(*ids, stopwords).size() >= keywords_per_instance) {
          usable.push_back(*ids);
        }
      }
      if (usable.empty()) continue;
      const Tokens& sentence = usable[rng.below(usable.size())];
      const auto kws = keyword_set(sentence, stopwords);
      std::vector<TokenId> pool(kws.begin(), kws.end());
      for (std::size_t i = 0; i < keywords_per_instance; ++i) {
        std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
      }
      inst.keywords.insert(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keywords_per_instance));
      inst.y_star = sentence;
    }
    inst.id = instance_id(kind, out.size());
    out.push_back(std::move(inst));
  }
  return out;
}

// ---- files ----------------------------------------------------------------

namespace {

Tokens tokens_field(const nlohmann::json& j, const char* key, const Vocabulary& vocab) {
  if (!j.contains(key) || j.at(key).is_null()) {
    return {};
  }
  const auto& v = j.at(key);
  try {
    if (v.is_string()) {
      return vocab.encode(v.get<std::string>());
    }
    if (v.is_array()) {
      return vocab.encode(v.get<std::vector<std::string>>());
    }
  } catch (const DomainError& e) {
    throw FormatError(std::string("field ") + key + ": " + e.what());
  }
  throw FormatError(std::string("field ") + key + " must be a string or a list of strings");
}

}  // namespace

std::string instance_to_json(const TaskInstance& inst, const Vocabulary& vocab) {
  nlohmann::json j;
  j["id"] = inst.id;
  j["kind"] = task_kind_name(inst.kind);
  if (!inst.x_l.empty()) j["x_l"] = vocab.decode(inst.x_l);
  if (!inst.x_r.empty()) j["x_r"] = vocab.decode(inst.x_r);
  if (!inst.x_l_prime.empty()) j["x_l_prime"] = vocab.decode(inst.x_l_prime);
  if (!inst.keywords.empty()) j["keywords"] = vocab.words(Tokens(inst.keywords.begin(), inst.keywords.end()));
  if (!inst.y_star.empty()) j["y_star"] = vocab.decode(inst.y_star);
  return j.dump();
}

TaskInstance instance_from_json(std::string_view line, const Vocabulary& vocab) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string()) {
    throw FormatError("instance needs a string field 'kind'");
  }
  TaskInstance inst;
  inst.kind = parse_task_kind(j.at("kind").get<std::string>());
  if (j.contains("id")) {
    inst.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  }
  inst.x_l = tokens_field(j, "x_l", vocab);
  inst.x_r = tokens_field(j, "x_r", vocab);
  inst.x_l_prime = tokens_field(j, "x_l_prime", vocab);
  inst.y_star = tokens_field(j, "y_star", vocab);
  const Tokens kws = tokens_field(j, "keywords", vocab);
  for (TokenId k : kws) {
    if (!inst.keywords.insert(k).second) {
      throw FormatError("instance " + inst.id + ": duplicate keyword '" + vocab.token(k) + "'");
    }
  }
  inst.validate(vocab);
  return inst;
}

void write_instances(const std::filesystem::path& path, const std::vector<TaskInstance>& instances,
                     const Vocabulary& vocab) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw FormatError("cannot write " + path.string());
  }
  for (const auto& inst : instances) {
    os << instance_to_json(inst, vocab) << '\n';
  }
}

std::vector<TaskInstance> read_instances(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw FormatError("cannot open " + path.string());
  }
  std::vector<TaskInstance> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      out.push_back(instance_from_json(line, vocab));
    } catch (const Error& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cold
