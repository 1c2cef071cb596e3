#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "cold/checkpoint.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using cold::testing::toy_models;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cold::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<nlohmann::json> json_lines(const fs::path& p) {
  std::vector<nlohmann::json> out;
  std::ifstream f(p);
  for (std::string l; std::getline(f, l);) out.push_back(nlohmann::json::parse(l));
  return out;
}

// Toy checkpoints written once for all CLI cases.
const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "cold_unit_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    cold::save_checkpoint(*toy_models().forward, d / "fwd.ckpt");
    cold::save_checkpoint(*toy_models().reverse, d / "rev.ckpt");
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(cli({}).code == cold::cli::usage);
  CHECK(cli({"frobnicate"}).code == cold::cli::usage);
  CHECK(cli({"decode", "--tasks", "x"}).code == cold::cli::usage);
  CHECK(cli({"gen-corpus", "--out", "x", "--size", "many"}).code == cold::cli::usage);
  CHECK(cli({"--help"}).code == cold::cli::ok);
}

TEST_CASE("data errors exit with 2") {
  const fs::path d = workdir();
  const Run r = cli({"eval", "--outputs", (d / "missing.jsonl").string(), "--tasks", (d / "missing.jsonl").string(),
                     "--forward", (d / "fwd.ckpt").string(), "--out", (d / "r.json").string()});
  CHECK(r.code == cold::cli::data_error);
  CHECK(!r.err.empty());
  std::ofstream(d / "bad.ckpt") << "not a checkpoint";
  CHECK(cli({"gen-tasks", "--kind", "lexical", "--forward", (d / "bad.ckpt").string(), "--out",
             (d / "t.jsonl").string()})
            .code == cold::cli::data_error);
}

TEST_CASE("corpus and training commands") {
  const fs::path d = workdir();
  const fs::path corpus = d / "corpus.txt";
  Run r = cli({"gen-corpus", "--seed", "3", "--size", "40", "--out", corpus.string()});
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(r.out).contains("tokens"));
  const std::string first = slurp(corpus);
  REQUIRE(cli({"gen-corpus", "--seed", "3", "--size", "40", "--out", corpus.string()}).code == 0);
  CHECK(slurp(corpus) == first);

  const fs::path ckpt = d / "small.ckpt";
  r = cli({"train", "--corpus", corpus.string(), "--out", ckpt.string(), "--dim", "8", "--epochs", "1"});
  REQUIRE(r.code == 0);
  CHECK(cold::load_checkpoint(ckpt).direction() == cold::Direction::forward);
  r = cli({"train", "--corpus", corpus.string(), "--out", ckpt.string(), "--dim", "8", "--epochs", "1"});
  CHECK(r.code == cold::cli::data_error);
  r = cli({"train", "--corpus", corpus.string(), "--out", ckpt.string(), "--dim", "8", "--epochs", "1",
           "--direction", "sideways"});
  CHECK(r.code != 0);
}

TEST_CASE("decode and eval") {
  const fs::path d = workdir();
  const std::string fwd = (d / "fwd.ckpt").string();
  const std::string rev = (d / "rev.ckpt").string();
  const fs::path tasks = d / "abd.jsonl";
  REQUIRE(cli({"gen-tasks", "--kind", "abductive", "--count", "3", "--seed", "4", "--forward", fwd, "--out",
               tasks.string()})
              .code == 0);

  SUBCASE("a frozen single chain with k = 1 reproduces the greedy baseline") {
    const fs::path frozen = d / "frozen.jsonl";
    const fs::path greedy = d / "greedy.jsonl";
    REQUIRE(cli({"decode", "--tasks", tasks.string(), "--forward", fwd, "--reverse", rev, "--samples", "1", "--sigma",
                 "0", "--eta", "0", "--topk", "1", "--iters", "3", "--out", frozen.string()})
                .code == 0);
    REQUIRE(cli({"decode", "--tasks", tasks.string(), "--forward", fwd, "--reverse", rev, "--greedy", "--out",
                 greedy.string()})
                .code == 0);
    const auto a = json_lines(frozen);
    const auto b = json_lines(greedy);
    REQUIRE(a.size() == 3);
    REQUIRE(b.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(a[i].at("text") == b[i].at("text"));
  }

  SUBCASE("outputs, traces and reports") {
    const fs::path out = d / "cold.jsonl";
    const std::vector<std::string> args = {"decode", "--tasks", tasks.string(), "--forward", fwd, "--reverse", rev,
                                           "--samples", "2", "--iters", "12", "--trace-every", "5", "--seed", "13",
                                           "--out", out.string()};
    REQUIRE(cli(args).code == 0);
    const auto lines = json_lines(out);
    REQUIRE(lines.size() == 3);
    const auto& first = lines[0];
    for (const char* key : {"id", "kind", "text", "pool", "config", "inputs"}) CHECK(first.contains(key));
    CHECK(first.at("pool").size() == 2);
    CHECK(first.at("config").at("iters") == 12);
    CHECK(first.at("config").at("length") == 10);
    CHECK(first.at("pool").at(0).at("energy_terms").contains("lm_forward"));
    const auto trace = json_lines(fs::path(out.string() + ".trace.jsonl"));
    CHECK(trace.size() == 3 * 2 * 4);

    const std::string first_bytes = slurp(out);
    REQUIRE(cli(args).code == 0);
    CHECK(slurp(out) == first_bytes);

    const fs::path report = d / "report.json";
    const fs::path table = d / "report.txt";
    REQUIRE(cli({"eval", "--outputs", out.string(), "--tasks", tasks.string(), "--forward", fwd, "--out",
                 report.string(), "--table", table.string()})
                .code == 0);
    const auto doc = nlohmann::json::parse(slurp(report));
    CHECK(doc.at("reports").at(0).at("instances").size() == 3);
    CHECK(doc.at("reports").at(0).at("aggregate").contains("perplexity"));
    CHECK(slurp(table).find("PPL") != std::string::npos);

    const fs::path other_tasks = d / "lex.jsonl";
    REQUIRE(cli({"gen-tasks", "--kind", "lexical", "--count", "2", "--forward", fwd, "--out", other_tasks.string()})
                .code == 0);
    CHECK(cli({"eval", "--outputs", out.string(), "--tasks", other_tasks.string(), "--forward", fwd, "--out",
               report.string()})
              .code == cold::cli::data_error);
  }

  SUBCASE("conflicting noise options") {
    CHECK(cli({"decode", "--tasks", tasks.string(), "--forward", fwd, "--reverse", rev, "--sigma", "0", "--schedule",
               "0:1", "--out", (d / "x.jsonl").string()})
              .code == cold::cli::usage);
    CHECK(cli({"decode", "--tasks", tasks.string(), "--forward", fwd, "--reverse", rev, "--weights", "zz=1", "--out",
               (d / "x.jsonl").string()})
              .code != 0);
  }
}
