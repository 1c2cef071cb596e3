#pragma once

// Task presets: energies for abductive infilling, counterfactual rewriting
// and keyword-constrained generation, and sample-and-select ranking.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cold/discretizer.hpp"
#include "cold/language_model.hpp"
#include "cold/sampler.hpp"

namespace cold {

enum class TaskKind { abductive, counterfactual, lexical };

const char* task_kind_name(TaskKind kind);
TaskKind parse_task_kind(std::string_view s);

struct TaskInstance {
  TaskKind kind = TaskKind::abductive;
  std::string id;
  Tokens x_l;
  Tokens x_r;
  Tokens x_l_prime;
  std::set<TokenId> keywords;
  // Optional reference output used by evaluation.
  Tokens y_star;

  // Throws DomainError when a required field is missing or an id is invalid.
  void validate(const Vocabulary& vocab) const;
};

// Weights of the four energy slots: forward fluency, reverse fluency and the
// two task-specific terms b and c.
struct WeightConfig {
  real a_lr = 0;
  real a_rl = 0;
  real b = 0;
  real c = 0;

  static WeightConfig defaults(TaskKind kind);
  // Keys: a_lr, a_rl, b, c.
  void set(std::string_view key, real value);
  real sum() const { return a_lr + a_rl + b + c; }
  void validate() const;
};

// Constraint switches mirroring the ablation study.
struct Ablation {
  bool no_sim = false;
  bool no_revlm = false;
  bool no_pred = false;

  std::string label() const;
};

struct TaskModels {
  std::shared_ptr<const LanguageModel> forward;
  std::shared_ptr<const LanguageModel> reverse;
  std::set<TokenId> stopwords;

  // Throws DomainError on missing models, direction mismatch or differing
  // vocabularies.
  void validate() const;
  const Vocabulary& vocab() const { return forward->vocab(); }
};

struct TaskOptions {
  real tau = 1;
  bool detach_reference = false;
  Ablation ablation;
};

// Term labels used in energy traces and reports.
inline constexpr const char* kTermLmForward = "lm_forward";
inline constexpr const char* kTermLmReverse = "lm_reverse";
inline constexpr const char* kTermPred = "pred";
inline constexpr const char* kTermSim = "sim";

EnergySpec abductive_energy(const TaskInstance& inst, const WeightConfig& w, const TaskModels& lms,
                            const TaskOptions& opt = {});
EnergySpec counterfactual_energy(const TaskInstance& inst, const WeightConfig& w, const TaskModels& lms,
                                 const TaskOptions& opt = {});
EnergySpec lexical_energy(const TaskInstance& inst, const WeightConfig& w, const TaskModels& lms,
                          const TaskOptions& opt = {});
EnergySpec task_energy(const TaskInstance& inst, const WeightConfig& w, const TaskModels& lms,
                       const TaskOptions& opt = {});

// Keywords of x_r that are not keywords of x_l.
std::set<TokenId> abductive_keywords(const TaskInstance& inst, const std::set<TokenId>& stopwords);
// Keywords in ascending id order.
Tokens concatenate_keywords(const std::set<TokenId>& keywords);

// Prompt for greedy initialization and left context for top-k filtering.
Tokens task_left_context(const TaskInstance& inst);
// Candidate-set expansion for top-k filtering.
std::set<TokenId> task_extra_tokens(const TaskInstance& inst, const std::set<TokenId>& stopwords);

// Default length / sample count of each preset.
DecodeConfig task_decode_defaults(TaskKind kind);

struct Candidate {
  std::size_t chain = 0;
  Tokens soft_argmax;  // row argmax of the final soft sequence
  Tokens filtered;     // top-k filtered, length T
  Tokens tokens;       // after continuation
  double energy = 0;   // at the one-hot cast of `filtered`
  std::vector<double> energy_terms;
  std::map<std::string, double> scores;
  std::size_t rank = 0;
};

struct Selection {
  std::size_t winner = 0;  // index into pool
  std::vector<Candidate> pool;
  std::vector<std::vector<TracePoint>> traces;

  const Candidate& best() const { return pool.at(winner); }
};

struct SelectOptions {
  std::size_t max_continuation = 20;
  // Logit scale of the one-hot cast used for energy scores.
  real cast_scale = 10;
};

// Draws config.num_samples chains, discretizes and continues each, scores
// them and picks the winner by the task's ranking rule.
Selection sample_and_select(const EnergySpec& spec, const TaskInstance& inst, const DecodeConfig& config,
                            const TaskModels& lms, const SelectOptions& opt = {});

// Ranks an already scored pool (scores filled per task kind) in place and
// returns the winner index.
std::size_t rank_pool(TaskKind kind, std::vector<Candidate>& pool);

// ---- synthetic instances --------------------------------------------------

std::vector<TaskInstance> generate_instances(TaskKind kind, std::size_t count, std::uint64_t seed,
                                             const Vocabulary& vocab, const std::set<TokenId>& stopwords,
                                             std::size_t keywords_per_instance = 3);

// ---- files ----------------------------------------------------------------

// JSON lines: {"id", "kind", "x_l", "x_r", "x_l_prime", "keywords", "y_star"};
// token sequences are space-joined strings, keywords a list of strings.
std::string instance_to_json(const TaskInstance& inst, const Vocabulary& vocab);
TaskInstance instance_from_json(std::string_view line, const Vocabulary& vocab);
void write_instances(const std::filesystem::path& path, const std::vector<TaskInstance>& instances,
                     const Vocabulary& vocab);
std::vector<TaskInstance> read_instances(const std::filesystem::path& path, const Vocabulary& vocab);

}  // namespace cold
