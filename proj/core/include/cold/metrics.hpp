#pragma once

// Evaluation measures: keyword coverage, clipped n-gram precision, edit
// similarity and LM perplexity, with per-instance and aggregate reports.

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cold/language_model.hpp"
#include "cold/tasks.hpp"

namespace cold {

struct Coverage {
  std::size_t count = 0;
  double percent = 0;
};

// Exact-token containment of each keyword. Throws on an empty keyword set.
Coverage coverage(std::span<const TokenId> y, const std::set<TokenId>& keywords);

// Clipped n-gram precision of y against y_star. Requires 1 <= n <= both lengths.
double bleu_n(std::span<const TokenId> y, std::span<const TokenId> y_star, std::size_t n);

enum class EditOp : char { substitute = 'S', remove = 'D', insert = 'I' };

struct Edit {
  std::size_t position = 0;  // index in the source
  EditOp op = EditOp::substitute;
  TokenId token = 0;  // new token for S and I, removed token for D

  auto operator<=>(const Edit&) const = default;
};

// Minimal unit-cost script turning source into target. Among minimal
// alignments the traceback from the end prefers match, then substitution,
// deletion and insertion. Returned in source order.
std::vector<Edit> edit_script(std::span<const TokenId> source, std::span<const TokenId> target);

// |S1 & S2| / |S1 | S2| for S1 = edits(x_r -> y_star), S2 = edits(x_r -> y) as
// multisets; 1 when both are empty.
double edit_similarity(std::span<const TokenId> x_r, std::span<const TokenId> y, std::span<const TokenId> y_star);

struct InstanceMetrics {
  std::string id;
  std::optional<std::size_t> coverage_count;
  std::optional<double> coverage_percent;
  double perplexity = 0;
  std::map<std::size_t, double> bleu;  // by n
  std::optional<double> edit_similarity;
};

struct EvalConfig {
  std::size_t max_bleu_order = 4;
};

struct EvalReport {
  std::string label;
  TaskKind kind = TaskKind::lexical;
  std::vector<InstanceMetrics> instances;
  // Arithmetic means over the instances where each metric is defined.
  std::map<std::string, double> aggregate;
};

// outputs[i] is the generated text for instances[i]. Perplexity is that of
// the output under the forward model, conditioned on x_l (abductive) or x'_l
// (counterfactual). Throws on an empty or mixed-kind instance list.
EvalReport evaluate(const std::vector<Tokens>& outputs, const std::vector<TaskInstance>& instances,
                    const LanguageModel& forward, const EvalConfig& config = {}, std::string label = "cold");

// {"inputs": {...}, "reports": [...]}; `inputs` records provenance such as
// file hashes.
std::string report_to_json(const std::vector<EvalReport>& reports,
                           const std::map<std::string, std::string>& inputs = {});
// One row per report: Count / Percent / PPL plus the task-specific columns.
std::string report_table(const std::vector<EvalReport>& reports);

}  // namespace cold
