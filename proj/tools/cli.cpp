#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "cold/checkpoint.hpp"
#include "cold/corpus.hpp"
#include "cold/error.hpp"
#include "cold/language_model.hpp"
#include "cold/metrics.hpp"
#include "cold/tasks.hpp"

namespace cold::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string hash_of(const fs::path& path) { return hex64(file_hash(path)); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw FormatError("cannot write " + path.string());
  }
  f << text;
  if (!f) {
    throw FormatError("write failed: " + path.string());
  }
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) {
    throw FormatError(std::string(what) + " not found: " + path.string());
  }
}

// ---- gen-corpus -------------------------------------------------------------

struct GenCorpusArgs {
  std::uint64_t seed = 0;
  std::size_t size = kDefaultCorpusSequences;
  std::string out;
};

void gen_corpus(const GenCorpusArgs& a, std::ostream& out) {
  if (a.size < 1) {
    throw DomainError("corpus size must be at least 1");
  }
  const TextCorpus corpus = generate_story_corpus(a.seed, a.size);
  write_corpus(a.out, corpus);
  json j;
  j["command"] = "gen-corpus";
  j["seed"] = a.seed;
  j["size"] = a.size;
  j["tokens"] = corpus.token_count();
  j["out"] = a.out;
  j["hash"] = hash_of(a.out);
  out << j.dump() << '\n';
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string corpus;
  std::string direction = "forward";
  std::string out;
  TrainConfig config;
  bool force = false;
};

void train_cmd(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  require_file(a.corpus, "corpus");
  if (fs::exists(a.out) && !a.force) {
    throw FormatError("refusing to overwrite " + a.out + " (use --force)");
  }
  const Direction dir = parse_direction(a.direction);
  const TextCorpus text = read_corpus(a.corpus);
  const Vocabulary vocab = build_vocabulary(text);
  const Corpus corpus = encode_corpus(text, vocab);
  auto [train_part, heldout] = split_holdout(corpus);
  const LanguageModel lm = train(train_part, vocab, dir, a.config, [&](const EpochReport& r) {
    err << "epoch " << r.epoch << " loss " << r.train_loss << '\n';
  });
  const double ppl = corpus_perplexity(lm, heldout);
  err << "held-out perplexity " << ppl << '\n';
  save_checkpoint(lm, a.out);

  json j;
  j["command"] = "train";
  j["direction"] = direction_name(dir);
  j["corpus"] = a.corpus;
  j["corpus_hash"] = hash_of(a.corpus);
  j["dim"] = a.config.dim;
  j["epochs"] = a.config.epochs;
  j["lr"] = a.config.learning_rate;
  j["seed"] = a.config.seed;
  j["batch"] = a.config.batch_size;
  j["window"] = a.config.context_window;
  j["vocab_size"] = vocab.size();
  j["vocab_hash"] = hex64(vocab.hash());
  j["heldout_perplexity"] = ppl;
  j["out"] = a.out;
  j["hash"] = hash_of(a.out);
  out << j.dump() << '\n';
}

// ---- gen-tasks ------------------------------------------------------------

struct GenTasksArgs {
  std::string kind;
  std::size_t count = 50;
  std::uint64_t seed = 0;
  std::string forward;
  std::size_t keywords = 3;
  std::string out;
};

void gen_tasks(const GenTasksArgs& a, std::ostream& out) {
  require_file(a.forward, "forward checkpoint");
  const TaskKind kind = parse_task_kind(a.kind);
  const LanguageModel lm = load_checkpoint(a.forward);
  const auto stop = stopword_ids(lm.vocab(), load_stopwords());
  const auto instances = generate_instances(kind, a.count, a.seed, lm.vocab(), stop, a.keywords);
  write_instances(a.out, instances, lm.vocab());
  json j;
  j["command"] = "gen-tasks";
  j["kind"] = task_kind_name(kind);
  j["count"] = a.count;
  j["seed"] = a.seed;
  j["keywords"] = a.keywords;
  j["vocab_hash"] = hex64(lm.vocab().hash());
  j["out"] = a.out;
  j["hash"] = hash_of(a.out);
  out << j.dump() << '\n';
}

// ---- decode ---------------------------------------------------------------

struct DecodeArgs {
  std::string tasks;
  std::string forward;
  std::string reverse;
  std::string out;
  std::size_t iters = 2000;
  double eta = 0.1;
  double tau = 1;
  std::size_t topk = 10;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> length;
  std::uint64_t seed = 0;
  std::string schedule;
  std::optional<double> sigma;
  bool clip_grad = false;
  std::vector<std::string> weights;
  Ablation ablation;
  bool detach_reference = false;
  std::size_t max_continuation = 20;
  bool greedy = false;
  std::size_t trace_every = 10;
};

void add_decode_options(CLI::App* cmd, DecodeArgs& a, bool with_ablation) {
  cmd->add_option("--tasks", a.tasks, "instance file (JSON lines)")->required();
  cmd->add_option("--forward", a.forward, "forward checkpoint")->required();
  cmd->add_option("--reverse", a.reverse, "reverse checkpoint")->required();
  cmd->add_option("--iters", a.iters, "Langevin iterations")->capture_default_str();
  cmd->add_option("--eta", a.eta, "step size")->capture_default_str();
  cmd->add_option("--tau", a.tau, "softmax temperature")->capture_default_str();
  cmd->add_option("--topk", a.topk, "top-k filter size")->capture_default_str();
  cmd->add_option("--samples", a.samples, "chains per instance (task default)");
  cmd->add_option("--length", a.length, "soft sequence length (task default)");
  cmd->add_option("--seed", a.seed, "master seed")->capture_default_str();
  auto* sched = cmd->add_option("--schedule", a.schedule, "noise schedule it:sigma,...");
  cmd->add_option("--sigma", a.sigma, "constant noise level")->excludes(sched);
  cmd->add_flag("--clip-grad", a.clip_grad, "clip gradient entries at 10");
  cmd->add_option("--weights", a.weights, "weight override KEY=VAL (a_lr, a_rl, b, c)");
  cmd->add_flag("--detach-reference", a.detach_reference, "treat LM reference distributions as constants");
  cmd->add_option("--max-continuation", a.max_continuation, "continuation limit")->capture_default_str();
  cmd->add_option("--trace-every", a.trace_every, "trace interval")->capture_default_str();
  if (with_ablation) {
    cmd->add_flag("--no-sim", a.ablation.no_sim, "drop the similarity term");
    cmd->add_flag("--no-revlm", a.ablation.no_revlm, "drop the reverse fluency term");
    cmd->add_flag("--no-pred", a.ablation.no_pred, "drop the future-token term");
    cmd->add_flag("--greedy", a.greedy, "greedy-decoding baseline instead of sampling");
  }
}

struct Loaded {
  TaskModels models;
  std::vector<TaskInstance> instances;
  std::map<std::string, std::string> inputs;
};

Loaded load_inputs(const std::string& tasks, const std::string& forward, const std::string& reverse) {
  require_file(tasks, "task file");
  require_file(forward, "forward checkpoint");
  Loaded l;
  l.models.forward = std::make_shared<LanguageModel>(load_checkpoint(forward, Direction::forward));
  l.inputs["forward"] = hash_of(forward);
  if (!reverse.empty()) {
    require_file(reverse, "reverse checkpoint");
    l.models.reverse = std::make_shared<LanguageModel>(load_checkpoint(reverse, Direction::reverse));
    l.inputs["reverse"] = hash_of(reverse);
    if (l.models.reverse->vocab().hash() != l.models.forward->vocab().hash()) {
      throw FormatError("vocabulary hash mismatch between " + forward + " and " + reverse);
    }
  }
  l.models.stopwords = stopword_ids(l.models.vocab(), load_stopwords());
  l.instances = read_instances(tasks, l.models.vocab());
  l.inputs["tasks"] = hash_of(tasks);
  if (l.instances.empty()) {
    throw FormatError("no instances in " + tasks);
  }
  return l;
}

DecodeConfig resolve_config(const DecodeArgs& a, TaskKind kind, std::size_t index) {
  DecodeConfig c = task_decode_defaults(kind);
  c.iterations = a.iters;
  c.eta = a.eta;
  c.tau = static_cast<real>(a.tau);
  c.topk = a.topk;
  if (a.samples) c.num_samples = *a.samples;
  if (a.length) c.length = *a.length;
  c.seed = derive_seed(a.seed, index);
  if (a.sigma) {
    c.schedule = NoiseSchedule::constant(*a.sigma);
  } else if (!a.schedule.empty()) {
    c.schedule = NoiseSchedule::parse(a.schedule);
  }
  c.clip_gradient = a.clip_grad;
  c.trace_every = a.trace_every;
  c.validate();
  return c;
}

WeightConfig resolve_weights(const DecodeArgs& a, TaskKind kind) {
  WeightConfig w = WeightConfig::defaults(kind);
  for (const std::string& kv : a.weights) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw CLI::ValidationError("--weights", "expected KEY=VAL, got '" + kv + "'");
    }
    double v = 0;
    try {
      std::size_t used = 0;
      v = std::stod(kv.substr(eq + 1), &used);
      if (used != kv.size() - eq - 1) throw std::invalid_argument(kv);
    } catch (const std::logic_error&) {
      throw CLI::ValidationError("--weights", "bad value in '" + kv + "'");
    }
    w.set(kv.substr(0, eq), static_cast<real>(v));
  }
  w.validate();
  return w;
}

json tokens_json(const Vocabulary& vocab, const Tokens& t) { return vocab.decode(t); }

json config_json(const DecodeArgs& a, const DecodeConfig& c, const WeightConfig& w, const std::string& label) {
  json j;
  j["label"] = label;
  j["method"] = a.greedy ? "greedy" : "cold";
  j["master_seed"] = a.seed;
  j["seed"] = c.seed;
  j["iters"] = c.iterations;
  j["eta"] = c.eta;
  j["tau"] = c.tau;
  j["topk"] = c.topk;
  j["samples"] = c.num_samples;
  j["length"] = c.length;
  j["schedule"] = c.schedule.to_string();
  j["clip_grad"] = c.clip_gradient;
  j["weights"] = {{"a_lr", w.a_lr}, {"a_rl", w.a_rl}, {"b", w.b}, {"c", w.c}};
  j["ablation"] = {{"no_sim", a.ablation.no_sim}, {"no_revlm", a.ablation.no_revlm}, {"no_pred", a.ablation.no_pred}};
  j["detach_reference"] = a.detach_reference;
  j["max_continuation"] = a.max_continuation;
  return j;
}

std::string run_label(const DecodeArgs& a) { return a.greedy ? "greedy" : a.ablation.label(); }

// Decodes every instance; writes outputs and, for sampling runs, a trace
// sidecar next to them.
void decode_run(const DecodeArgs& a, const Loaded& in, const fs::path& out_path, std::ostream& out,
                std::ostream& err) {
  const Vocabulary& vocab = in.models.vocab();
  if (!a.greedy) {
    in.models.validate();
  }
  const std::string label = run_label(a);
  const fs::path trace_path = out_path.string() + ".trace.jsonl";
  std::ostringstream lines;
  std::ostringstream traces;

  for (std::size_t i = 0; i < in.instances.size(); ++i) {
    const TaskInstance& inst = in.instances[i];
    const DecodeConfig cfg = resolve_config(a, inst.kind, i);
    const WeightConfig w = resolve_weights(a, inst.kind);
    json j;
    j["id"] = inst.id;
    j["kind"] = task_kind_name(inst.kind);
    if (a.greedy) {
      const Tokens left = task_left_context(inst);
      DiscretizeConfig dc;
      dc.max_continuation = a.max_continuation;
      const Tokens y = greedy_decode(*in.models.forward, left, cfg.length).tokens;
      const Tokens full = continue_sequence(*in.models.forward, y, dc, left);
      j["text"] = tokens_json(vocab, full);
      j["pool"] = json::array();
    } else {
      TaskOptions opt;
      opt.tau = cfg.tau;
      opt.detach_reference = a.detach_reference;
      opt.ablation = a.ablation;
      const EnergySpec spec = task_energy(inst, w, in.models, opt);
      SelectOptions so;
      so.max_continuation = a.max_continuation;
      const Selection sel = sample_and_select(spec, inst, cfg, in.models, so);
      j["text"] = tokens_json(vocab, sel.best().tokens);
      json pool = json::array();
      for (const Candidate& c : sel.pool) {
        json p;
        p["chain"] = c.chain;
        p["rank"] = c.rank;
        p["tokens"] = tokens_json(vocab, c.tokens);
        p["filtered"] = tokens_json(vocab, c.filtered);
        p["soft_argmax"] = tokens_json(vocab, c.soft_argmax);
        p["energy"] = c.energy;
        json terms;
        for (std::size_t t = 0; t < spec.num_terms(); ++t) {
          terms[spec.term_name(t)] = c.energy_terms.at(t);
        }
        p["energy_terms"] = terms;
        p["scores"] = c.scores;
        pool.push_back(std::move(p));
      }
      j["pool"] = std::move(pool);
      j["trace"] = trace_path.filename().string();
      for (std::size_t chain = 0; chain < sel.traces.size(); ++chain) {
        for (const TracePoint& tp : sel.traces[chain]) {
          json t;
          t["id"] = inst.id;
          t["chain"] = chain;
          t["iteration"] = tp.iteration;
          t["total"] = tp.total;
          json terms;
          for (std::size_t k = 0; k < spec.num_terms(); ++k) {
            terms[spec.term_name(k)] = tp.terms.at(k);
          }
          t["terms"] = terms;
          traces << t.dump() << '\n';
        }
      }
    }
    j["config"] = config_json(a, cfg, w, label);
    j["inputs"] = in.inputs;
    lines << j.dump() << '\n';
    err << label << ' ' << inst.id << ": " << j["text"].get<std::string>() << '\n';
  }
  write_text(out_path, lines.str());
  if (!a.greedy) {
    write_text(trace_path, traces.str());
  }
  json s;
  s["command"] = "decode";
  s["label"] = label;
  s["instances"] = in.instances.size();
  s["out"] = out_path.string();
  s["hash"] = hash_of(out_path);
  out << s.dump() << '\n';
}

// ---- eval -----------------------------------------------------------------

struct OutputFile {
  std::string label;
  std::vector<Tokens> outputs;
};

OutputFile read_outputs(const fs::path& path, const std::vector<TaskInstance>& instances, const Vocabulary& vocab) {
  require_file(path, "output file");
  std::ifstream f(path);
  OutputFile o;
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(n);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (!j.contains("id") || !j.contains("text")) {
      throw FormatError(where + ": missing id or text");
    }
    const std::size_t k = o.outputs.size();
    if (k >= instances.size()) {
      throw FormatError(where + ": more outputs than instances (" + std::to_string(instances.size()) + ")");
    }
    if (j["id"].get<std::string>() != instances[k].id) {
      throw FormatError(where + ": output " + j["id"].get<std::string>() + " does not match instance " +
                        instances[k].id);
    }
    if (o.label.empty() && j.contains("config") && j["config"].contains("label")) {
      o.label = j["config"]["label"].get<std::string>();
    }
    o.outputs.push_back(vocab.encode(j["text"].get<std::string>()));
  }
  if (o.outputs.size() != instances.size()) {
    throw FormatError(path.string() + ": " + std::to_string(o.outputs.size()) + " outputs for " +
                      std::to_string(instances.size()) + " instances");
  }
  if (o.label.empty()) {
    o.label = path.stem().string();
  }
  return o;
}

struct EvalArgs {
  std::vector<std::string> outputs;
  std::string tasks;
  std::string forward;
  std::string out;
  std::string table;
};

void eval_cmd(const EvalArgs& a, std::ostream& out) {
  const Loaded in = load_inputs(a.tasks, a.forward, "");
  std::map<std::string, std::string> inputs = in.inputs;
  std::vector<EvalReport> reports;
  for (const std::string& path : a.outputs) {
    const OutputFile o = read_outputs(path, in.instances, in.models.vocab());
    inputs["outputs:" + o.label] = hash_of(path);
    reports.push_back(evaluate(o.outputs, in.instances, *in.models.forward, {}, o.label));
  }
  write_text(a.out, report_to_json(reports, inputs));
  const std::string table = report_table(reports);
  if (!a.table.empty()) {
    write_text(a.table, table);
  }
  out << table;
}

// ---- ablate ---------------------------------------------------------------

struct AblateArgs {
  DecodeArgs decode;
  std::string out_dir;
  bool baseline = false;
};

void ablate_cmd(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  const Loaded in = load_inputs(a.decode.tasks, a.decode.forward, a.decode.reverse);
  const fs::path dir = a.out_dir;
  std::vector<DecodeArgs> runs;
  const Ablation variants[] = {{}, {true, false, false}, {false, true, false}, {false, false, true}};
  for (const Ablation& ab : variants) {
    DecodeArgs d = a.decode;
    d.ablation = ab;
    runs.push_back(d);
  }
  if (a.baseline) {
    DecodeArgs d = a.decode;
    d.greedy = true;
    runs.push_back(d);
  }
  EvalArgs ev;
  ev.tasks = a.decode.tasks;
  ev.forward = a.decode.forward;
  ev.out = (dir / "report.json").string();
  ev.table = (dir / "report.txt").string();
  for (const DecodeArgs& d : runs) {
    const fs::path path = dir / (run_label(d) + ".jsonl");
    decode_run(d, in, path, out, err);
    ev.outputs.push_back(path.string());
  }
  eval_cmd(ev, out);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Constrained text generation by Langevin sampling over soft token sequences", "cold"};
  app.require_subcommand(1);

  GenCorpusArgs gc;
  auto* c_corpus = app.add_subcommand("gen-corpus", "write a synthetic story corpus");
  c_corpus->add_option("--seed", gc.seed, "generator seed")->capture_default_str();
  c_corpus->add_option("--size", gc.size, "number of sequences")->capture_default_str();
  c_corpus->add_option("--out", gc.out, "output file")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a forward or reverse language model");
  c_train->add_option("--corpus", tr.corpus, "corpus file")->required();
  c_train->add_option("--direction", tr.direction, "forward or reverse")->capture_default_str();
  c_train->add_option("--out", tr.out, "checkpoint file")->required();
  c_train->add_option("--dim", tr.config.dim, "hidden size")->capture_default_str();
  c_train->add_option("--epochs", tr.config.epochs, "epochs")->capture_default_str();
  c_train->add_option("--lr", tr.config.learning_rate, "learning rate")->capture_default_str();
  c_train->add_option("--seed", tr.config.seed, "initialization and shuffling seed")->capture_default_str();
  c_train->add_option("--batch", tr.config.batch_size, "sequences per batch")->capture_default_str();
  c_train->add_option("--window", tr.config.context_window, "context window")->capture_default_str();
  c_train->add_flag("--force", tr.force, "overwrite an existing checkpoint");

  GenTasksArgs gt;
  auto* c_tasks = app.add_subcommand("gen-tasks", "write synthetic task instances");
  c_tasks->add_option("--kind", gt.kind, "abductive, counterfactual or lexical")->required();
  c_tasks->add_option("--count", gt.count, "number of instances")->capture_default_str();
  c_tasks->add_option("--seed", gt.seed, "generator seed")->capture_default_str();
  c_tasks->add_option("--forward", gt.forward, "checkpoint providing the vocabulary")->required();
  c_tasks->add_option("--keywords", gt.keywords, "keywords per lexical instance")->capture_default_str();
  c_tasks->add_option("--out", gt.out, "output file")->required();

  DecodeArgs dec;
  auto* c_decode = app.add_subcommand("decode", "decode task instances");
  add_decode_options(c_decode, dec, true);
  c_decode->add_option("--out", dec.out, "output file (JSON lines)")->required();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "score decoded outputs");
  c_eval->add_option("--outputs", ev.outputs, "decode output files, one report row each")->required();
  c_eval->add_option("--tasks", ev.tasks, "instance file")->required();
  c_eval->add_option("--forward", ev.forward, "forward checkpoint for perplexity")->required();
  c_eval->add_option("--out", ev.out, "report file (JSON)")->required();
  c_eval->add_option("--table", ev.table, "optional text table");

  AblateArgs ab;
  auto* c_ablate = app.add_subcommand("ablate", "decode with each constraint removed and report");
  add_decode_options(c_ablate, ab.decode, false);
  c_ablate->add_option("--out-dir", ab.out_dir, "directory for outputs and report")->required();
  c_ablate->add_flag("--baseline", ab.baseline, "add a greedy-decoding row");

  std::vector<std::string> reversed_args(args.rbegin(), args.rend());
  try {
    app.parse(reversed_args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? ok : usage;
  }

  try {
    if (*c_corpus) gen_corpus(gc, out);
    if (*c_train) train_cmd(tr, out, err);
    if (*c_tasks) gen_tasks(gt, out);
    if (*c_decode) {
      const Loaded in = load_inputs(dec.tasks, dec.forward, dec.reverse);
      decode_run(dec, in, dec.out, out, err);
    }
    if (*c_eval) eval_cmd(ev, out);
    if (*c_ablate) ablate_cmd(ab, out, err);
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return usage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return numerical_failure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return data_error;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return data_error;
  }
  return ok;
}

}  // namespace cold::cli
