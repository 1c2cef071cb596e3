#include "cold/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "cold/error.hpp"

namespace cold {

Coverage coverage(std::span<const TokenId> y, const std::set<TokenId>& keywords) {
  if (keywords.empty()) {
    throw DomainError("coverage needs a non-empty keyword set");
  }
  Coverage c;
  for (TokenId w : keywords) {
    if (std::find(y.begin(), y.end(), w) != y.end()) {
      ++c.count;
    }
  }
  c.percent = 100.0 * static_cast<double>(c.count) / static_cast<double>(keywords.size());
  return c;
}

double bleu_n(std::span<const TokenId> y, std::span<const TokenId> y_star, std::size_t n) {
  if (n < 1 || n > y.size() || n > y_star.size()) {
    throw DomainError("bleu_n: n=" + std::to_string(n) + " out of range for lengths " + std::to_string(y.size()) +
                      " and " + std::to_string(y_star.size()));
  }
  auto counts = [n](std::span<const TokenId> s) {
    std::map<Tokens, std::size_t> out;
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
      ++out[Tokens(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return out;
  };
  const auto ref = counts(y_star);
  std::size_t matched = 0;
  for (const auto& [gram, c] : counts(y)) {
    auto it = ref.find(gram);
    if (it != ref.end()) {
      matched += std::min(c, it->second);
    }
  }
  return static_cast<double>(matched) / static_cast<double>(y.size() - n + 1);
}

std::vector<Edit> edit_script(std::span<const TokenId> source, std::span<const TokenId> target) {
  const std::size_t m = source.size();
  const std::size_t n = target.size();
  std::vector<std::size_t> d((m + 1) * (n + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (n + 1) + j]; };
  for (std::size_t i = 0; i <= m; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= n; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (source[i - 1] == target[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  std::vector<Edit> edits;
  std::size_t i = m;
  std::size_t j = n;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && source[i - 1] == target[j - 1] && at(i, j) == at(i - 1, j - 1)) {
      --i;
      --j;
    } else if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + 1) {
      edits.push_back({i - 1, EditOp::substitute, target[j - 1]});
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      edits.push_back({i - 1, EditOp::remove, source[i - 1]});
      --i;
    } else {
      edits.push_back({i, EditOp::insert, target[j - 1]});
      --j;
    }
  }
  std::reverse(edits.begin(), edits.end());
  return edits;
}

double edit_similarity(std::span<const TokenId> x_r, std::span<const TokenId> y, std::span<const TokenId> y_star) {
  auto a = edit_script(x_r, y_star);
  auto b = edit_script(x_r, y);
  if (a.empty() && b.empty()) {
    return 1.0;
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<Edit> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  const std::size_t uni = a.size() + b.size() - common.size();
  return static_cast<double>(common.size()) / static_cast<double>(uni);
}

// ---- reports --------------------------------------------------------------

EvalReport evaluate(const std::vector<Tokens>& outputs, const std::vector<TaskInstance>& instances,
                    const LanguageModel& forward, const EvalConfig& config, std::string label) {
  if (instances.empty()) {
    throw DomainError("evaluate: no instances");
  }
  if (outputs.size() != instances.size()) {
    throw FormatError("evaluate: " + std::to_string(outputs.size()) + " outputs for " +
                      std::to_string(instances.size()) + " instances");
  }
  require_direction(forward, Direction::forward, "evaluate");
  EvalReport report;
  report.label = std::move(label);
  report.kind = instances.front().kind;
  std::map<std::string, std::pair<double, std::size_t>> sums;
  auto add = [&](const std::string& key, double v) {
    auto& s = sums[key];
    s.first += v;
    ++s.second;
  };

  for (std::size_t i = 0; i < instances.size(); ++i) {
    const TaskInstance& inst = instances[i];
    const Tokens& y = outputs[i];
    if (inst.kind != report.kind) {
      throw DomainError("evaluate: instance " + inst.id + " is " + task_kind_name(inst.kind) + ", expected " +
                        task_kind_name(report.kind));
    }
    if (y.empty()) {
      throw DomainError("evaluate: empty output for instance " + inst.id);
    }
    forward.vocab().validate(y, "output for instance " + inst.id);
    InstanceMetrics m;
    m.id = inst.id;
    const Tokens condition = task_left_context(inst);
    m.perplexity = perplexity(forward, y, condition);
    add("perplexity", m.perplexity);
    if (inst.kind == TaskKind::lexical) {
      const Coverage c = coverage(y, inst.keywords);
      m.coverage_count = c.count;
      m.coverage_percent = c.percent;
      add("coverage_count", static_cast<double>(c.count));
      add("coverage_percent", c.percent);
    }
    if (!inst.y_star.empty()) {
      for (std::size_t n = 1; n <= config.max_bleu_order && n <= y.size() && n <= inst.y_star.size(); ++n) {
        m.bleu[n] = bleu_n(y, inst.y_star, n);
        add("bleu_" + std::to_string(n), m.bleu[n]);
      }
      if (inst.kind == TaskKind::counterfactual) {
        m.edit_similarity = edit_similarity(inst.x_r, y, inst.y_star);
        add("edit_similarity", *m.edit_similarity);
      }
    }
    report.instances.push_back(std::move(m));
  }
  for (const auto& [key, s] : sums) {
    report.aggregate[key] = s.first / static_cast<double>(s.second);
  }
  return report;
}

std::string report_to_json(const std::vector<EvalReport>& reports, const std::map<std::string, std::string>& inputs) {
  nlohmann::ordered_json doc;
  doc["inputs"] = inputs;
  nlohmann::ordered_json& out = doc["reports"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["label"] = r.label;
    j["kind"] = task_kind_name(r.kind);
    j["aggregate"] = r.aggregate;
    auto& rows = j["instances"] = nlohmann::ordered_json::array();
    for (const auto& m : r.instances) {
      nlohmann::ordered_json row;
      row["id"] = m.id;
      if (m.coverage_count) row["coverage_count"] = *m.coverage_count;
      if (m.coverage_percent) row["coverage_percent"] = *m.coverage_percent;
      row["perplexity"] = m.perplexity;
      for (const auto& [n, v] : m.bleu) row["bleu_" + std::to_string(n)] = v;
      if (m.edit_similarity) row["edit_similarity"] = *m.edit_similarity;
      rows.push_back(std::move(row));
    }
    out.push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

std::string report_table(const std::vector<EvalReport>& reports) {
  std::vector<std::string> columns = {"coverage_count", "coverage_percent", "perplexity"};
  for (const auto& r : reports) {
    for (const auto& [key, v] : r.aggregate) {
      if (std::find(columns.begin(), columns.end(), key) == columns.end()) {
        columns.push_back(key);
      }
    }
  }
  auto header = [](const std::string& key) -> std::string {
    if (key == "coverage_count") return "Count";
    if (key == "coverage_percent") return "Percent";
    if (key == "perplexity") return "PPL";
    return key;
  };
  std::size_t label_width = 6;
  for (const auto& r : reports) label_width = std::max(label_width, r.label.size());
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(label_width), "Method");
  os << buf;
  for (const auto& c : columns) {
    std::snprintf(buf, sizeof buf, " %15s", header(c).c_str());
    os << buf;
  }
  os << '\n';
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(label_width), r.label.c_str());
    os << buf;
    for (const auto& c : columns) {
      auto it = r.aggregate.find(c);
      if (it == r.aggregate.end()) {
        std::snprintf(buf, sizeof buf, " %15s", "-");
      } else {
        std::snprintf(buf, sizeof buf, " %15.4f", it->second);
      }
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace cold
