#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cold/checkpoint.hpp"
#include "cold/corpus.hpp"
#include "cold/error.hpp"
#include "cold/language_model.hpp"
#include "support/oracles.hpp"

using namespace cold;
using cold::testing::toy_models;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "cold_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("vocabulary ids are dense and round-trip") {
  const Vocabulary& v = toy_models().vocab;
  CHECK(v.token(Vocabulary::bos) == "<bos>");
  CHECK(v.token(Vocabulary::eos) == "<eos>");
  CHECK(v.token(Vocabulary::sentence_end) == ".");
  CHECK(v.token(Vocabulary::unknown) == "<unk>");
  for (TokenId id = 0; id < v.size(); ++id) {
    CHECK(v.find(v.token(id)) == id);
  }
  CHECK(v.encode("the cat sat", true).size() == 3);
  CHECK_THROWS_AS(v.encode("zzzz qqqq"), DomainError);
}

TEST_CASE("corpus generation") {
  SUBCASE("same seed gives identical text") {
    CHECK(corpus_text(generate_story_corpus(3, 50)) == corpus_text(generate_story_corpus(3, 50)));
    CHECK(corpus_text(generate_story_corpus(3, 50)) != corpus_text(generate_story_corpus(4, 50)));
  }
  SUBCASE("size one is one line plus the provenance header") {
    const auto path = temp_path("one.txt");
    write_corpus(path, generate_story_corpus(9, 1));
    std::ifstream f(path);
    std::vector<std::string> lines;
    for (std::string l; std::getline(f, l);) lines.push_back(l);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0].rfind("#", 0) == 0);
    CHECK(lines[0].find("seed=9") != std::string::npos);
    CHECK(read_corpus(path).lines.size() == 1);
  }
  SUBCASE("default size is about fifty thousand tokens") {
    const std::size_t n = generate_story_corpus(0).token_count();
    CHECK(n > 45000);
    CHECK(n < 55000);
  }
  SUBCASE("encoded sequences end with eos and use valid ids") {
    for (const auto& s : toy_models().corpus.sequences) {
      REQUIRE(!s.empty());
      CHECK(s.back() == Vocabulary::eos);
    }
  }
}

TEST_CASE("zero-weight model is uniform") {
  const Vocabulary& v = toy_models().vocab;
  LanguageModel lm(v, Direction::forward, 8);
  const Tokens y = {10, 20, 30};
  CHECK(perplexity(lm, y) == doctest::Approx(static_cast<double>(v.size())).epsilon(1e-12));
  const Array p = next_token_dist(lm, Tokens{Vocabulary::bos}, nullptr);
  CHECK(p[0] == doctest::Approx(1.0 / static_cast<double>(v.size())));
}

TEST_CASE("single-token perplexity is the inverse probability") {
  const auto& m = toy_models();
  const Array p = next_token_dist(*m.forward, Tokens{Vocabulary::bos}, nullptr);
  const TokenId w = 12;
  CHECK(perplexity(*m.forward, Tokens{w}) == doctest::Approx(1.0 / p[w]).epsilon(1e-10));
}

TEST_CASE("vanishing probability gives infinite perplexity") {
  LanguageModel lm(toy_models().vocab, Direction::forward, 4);
  lm.mutable_params().b_out(0, 7) = -1000;
  CHECK(std::isinf(perplexity(lm, Tokens{7})));
}

TEST_CASE("initialized but untrained model is near uniform") {
  const Vocabulary& v = toy_models().vocab;
  const auto lm = LanguageModel::initialized(v, Direction::forward, 16, 3);
  const double ppl = corpus_perplexity(lm, toy_models().corpus);
  CHECK(std::abs(ppl - static_cast<double>(v.size())) < 0.2 * static_cast<double>(v.size()));
}

TEST_CASE("trained model beats half the uniform perplexity on held-out text") {
  const auto& m = toy_models();
  TextCorpus text = generate_story_corpus(99, 60);
  // Drop lines with words the small training corpus never produced.
  std::erase_if(text.lines, [&](const auto& line) {
    return std::any_of(line.begin(), line.end(), [&](const std::string& w) { return !m.vocab.find(w); });
  });
  REQUIRE(text.lines.size() > 20);
  const Corpus heldout = encode_corpus(text, m.vocab);
  CHECK(corpus_perplexity(*m.forward, heldout) < 0.5 * static_cast<double>(m.vocab.size()));
  CHECK(corpus_perplexity(*m.reverse, heldout) < 0.5 * static_cast<double>(m.vocab.size()));
}

TEST_CASE("memorizing one repeated sequence") {
  const Vocabulary& v = toy_models().vocab;
  const Tokens seq = v.encode("one day mia went to the park . she found a red ball .");
  Corpus c;
  Tokens with_eos = seq;
  with_eos.push_back(Vocabulary::eos);
  c.sequences.assign(40, with_eos);
  TrainConfig cfg;
  cfg.dim = 24;
  cfg.epochs = 30;
  cfg.learning_rate = 0.02;
  const LanguageModel lm = train(c, v, Direction::forward, cfg);

  CHECK(perplexity(lm, with_eos) < 1.5);
  const auto g = greedy_decode(lm, Tokens{seq[0]}, seq.size() - 1);
  CHECK(g.tokens == Tokens(seq.begin() + 1, seq.end()));

  Tokens shuffled = seq;
  std::rotate(shuffled.begin(), shuffled.begin() + 5, shuffled.end());
  CHECK(perplexity(lm, seq) < perplexity(lm, shuffled));
}

TEST_CASE("training is deterministic") {
  const auto& m = toy_models();
  Corpus small;
  small.sequences.assign(m.corpus.sequences.begin(), m.corpus.sequences.begin() + 30);
  TrainConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 2;
  cfg.seed = 42;
  const auto a = serialize_checkpoint(train(small, m.vocab, Direction::forward, cfg));
  const auto b = serialize_checkpoint(train(small, m.vocab, Direction::forward, cfg));
  CHECK(a == b);
  CHECK_THROWS_AS(train(Corpus{}, m.vocab, Direction::forward, cfg), DomainError);
}

TEST_CASE("next-token distribution") {
  const auto& m = toy_models();
  Rng rng(21);
  const Tokens prefix = {Vocabulary::bos, 10, 11};

  SUBCASE("lies in the simplex") {
    const SoftSequence soft(testing::random_array(rng, 3, m.vocab.size(), 2.0));
    const Array p = next_token_dist(*m.forward, prefix, &soft, 0.8);
    double z = 0;
    for (real v : p.values()) {
      CHECK(v >= 0);
      z += v;
    }
    CHECK(std::abs(z - 1) < 1e-12);
  }
  SUBCASE("one-hot soft suffix matches the hard prefix") {
    for (int trial = 0; trial < 10; ++trial) {
      const Tokens w = testing::random_tokens(rng, 1 + rng.below(4), 4, static_cast<TokenId>(m.vocab.size()));
      const SoftSequence soft = SoftSequence::one_hot(w, m.vocab.size());
      Tokens hard = prefix;
      hard.insert(hard.end(), w.begin(), w.end());
      const Array a = next_token_dist(*m.forward, prefix, &soft, 0.01);
      const Array b = next_token_dist(*m.forward, hard, nullptr);
      for (std::size_t v = 0; v < a.size(); ++v) CHECK(std::abs(a[v] - b[v]) < 1e-6);
    }
  }
  SUBCASE("empty context is rejected") {
    CHECK_THROWS_AS(next_token_dist(*m.forward, Tokens{}, nullptr), DomainError);
  }
  SUBCASE("log of an output coordinate has exact gradients") {
    for (TokenId target : {TokenId{5}, TokenId{40}}) {
      auto f = [&](Tape& tape, Var x) {
        LmGraph g(*m.forward, tape);
        const std::size_t col = target;
        return sum(log(pick(next_token_dist(g, prefix, x, 0.9), std::span<const std::size_t>(&col, 1))));
      };
      CHECK(check_gradient(f, testing::random_array(rng, 3, m.vocab.size()), 1e-4).max_relative_error <= 1e-4);
    }
  }
}

TEST_CASE("greedy decoding") {
  const auto& m = toy_models();
  const Tokens prompt = m.vocab.encode("one day");
  const auto a = greedy_decode(*m.forward, prompt, 7);
  const auto b = greedy_decode(*m.forward, prompt, 7);
  CHECK(a.tokens == b.tokens);
  CHECK(a.logits == b.logits);
  REQUIRE(a.tokens.size() == 7);
  CHECK(a.logits.rows() == 7);
  CHECK(a.logits.cols() == m.vocab.size());
  Tokens ctx = {Vocabulary::bos};
  ctx.insert(ctx.end(), prompt.begin(), prompt.end());
  for (std::size_t t = 0; t < 7; ++t) {
    const auto top = testing::sorted_top_k(a.logits.row(t), 1);
    CHECK(*top.begin() == a.tokens[t]);
    const Array p = next_token_dist(*m.forward, ctx, nullptr);
    CHECK(*testing::sorted_top_k(p.values(), 1).begin() == a.tokens[t]);
    ctx.push_back(a.tokens[t]);
  }
  CHECK_THROWS_AS(greedy_decode(*m.forward, prompt, 0), DomainError);
}

TEST_CASE("checkpoints") {
  const auto& m = toy_models();
  const auto path = temp_path("fwd.ckpt");
  save_checkpoint(*m.forward, path);

  SUBCASE("round trip is bitwise") {
    const LanguageModel back = load_checkpoint(path);
    CHECK(serialize_checkpoint(back) == serialize_checkpoint(*m.forward));
    bool same = true;
    std::vector<const Array*> a, b;
    m.forward->params().for_each([&](const Array& x) { a.push_back(&x); });
    back.params().for_each([&](const Array& x) { b.push_back(&x); });
    for (std::size_t i = 0; i < a.size(); ++i) same = same && (*a[i] == *b[i]);
    CHECK(same);
    CHECK(back.info().corpus_hash == m.forward->info().corpus_hash);
    CHECK(back.direction() == Direction::forward);
  }
  SUBCASE("corrupt magic") {
    std::string bytes = read_file_bytes(path);
    bytes[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(bytes), FormatError);
  }
  SUBCASE("version mismatch") {
    std::string bytes = read_file_bytes(path);
    bytes[7] = 9;
    CHECK_THROWS_AS(deserialize_checkpoint(bytes), FormatError);
  }
  SUBCASE("truncated") {
    const std::string bytes = read_file_bytes(path);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, 20)), FormatError);
  }
  SUBCASE("vocabulary entry altered") {
    std::string bytes = read_file_bytes(path);
    const auto at = bytes.find("park");
    REQUIRE(at != std::string::npos);
    bytes[at] = 'b';
    CHECK_THROWS_AS(deserialize_checkpoint(bytes), FormatError);
  }
  SUBCASE("direction is enforced") {
    CHECK_THROWS_AS(load_checkpoint(path, Direction::reverse), DomainError);
  }
}
