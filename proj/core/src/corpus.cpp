#include "cold/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "cold/error.hpp"

namespace cold {

namespace {

const std::vector<std::string> kFemaleNames = {"anna", "dora", "emma", "gina", "ivy",  "kate", "lucy",
                                               "mia",  "nora", "olga", "rosa", "tina"};
const std::vector<std::string> kMaleNames = {"ben", "carl", "finn", "hugo", "jack", "leo",
                                             "max", "nick", "omar", "paul", "sam",  "walt"};

std::vector<std::string> concat(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::string> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

const std::string& pick_word(Rng& rng, const std::vector<std::string>& words) {
  return words[rng.below(words.size())];
}

std::vector<std::string> split_words(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string w; is >> w;) {
    out.push_back(w);
  }
  return out;
}

}  // namespace

StoryGrammar::StoryGrammar() {
  categories_["name"] = concat(kFemaleNames, kMaleNames);
  categories_["pron"] = {"he", "she"};
  categories_["animal"] = {"cat",   "dog",   "bird", "fox",  "horse", "cow",  "duck", "frog",
                           "owl",   "pig",   "rabbit", "sheep", "goat", "mouse", "bear", "wolf",
                           "deer",  "hen",   "lamb", "turtle", "goose", "pony", "snail", "crab"};
  categories_["object"] = {"ball", "book", "box",  "cup",    "hat",    "key",    "lamp",   "map",
                           "pen",  "rope", "kite", "drum",   "bell",   "coin",   "sock",   "shoe",
                           "bag",  "boat", "clock", "chair", "basket", "bucket", "blanket", "bottle",
                           "candle", "flag", "spoon", "toy"};
  categories_["food"] = {"apple", "bread", "cake", "cheese", "corn", "egg", "fish", "milk",
                         "pie",   "soup",  "carrot", "honey", "rice", "plum", "jam", "nut"};
  categories_["place"] = {"park",  "farm", "forest", "garden", "house", "lake",   "market", "river",
                          "school", "shop", "beach", "hill",  "kitchen", "field", "barn",  "village",
                          "road",  "pond", "yard",  "hut"};
  categories_["adj"] = {"big",   "small", "red",   "blue",  "green", "old",   "new",     "tiny",
                        "brown", "white", "black", "yellow", "soft", "shiny", "little", "pretty",
                        "strange", "round", "wild", "gentle"};
  categories_["feeling"] = {"hungry", "tired", "sad", "happy", "scared", "sleepy", "cold", "angry"};
  categories_["action"] = {"washed",  "painted", "fixed", "opened", "dropped", "kicked",
                           "carried", "cleaned", "filled", "hid",    "sold",    "shook"};
  categories_["time"] = {"morning", "evening", "night", "day"};

  auto add = [&](std::string role, std::string text) { templates_.push_back({std::move(role), split_words(text)}); };
  add("opening", "@name went to the @place .");
  add("opening", "@name walked to the @place in the @time .");
  add("opening", "one @time @name went to the @place .");
  add("opening", "@name lived near the @place .");
  add("event_animal", "@pron saw a @adj @animal .");
  add("event_animal", "there @pron met a @adj @animal .");
  add("event_animal", "a @feeling @animal came to @name .");
  add("event_object", "@pron found a @adj @object .");
  add("event_object", "@pron saw a @adj @object near the @place .");
  add("event_object", "there @pron found a @adj @object .");
  add("action_animal", "@pron gave the @food to the @animal .");
  add("action_animal", "the @animal ate the @food .");
  add("action_animal", "@pron played with the @animal .");
  add("action_animal", "the @animal was very @feeling .");
  add("action_object", "@pron @action the @object .");
  add("action_object", "@pron put the @food in the @object .");
  add("action_object", "the @object was very @adj .");
  add("ending_animal", "then the @animal slept .");
  add("ending_animal", "the @animal followed @name home .");
  add("ending_animal", "later @name and the @animal were happy .");
  add("ending_object", "@pron took the @object home .");
  add("ending_object", "then @name gave the @object to a friend .");
  add("ending_object", "later @pron lost the @object .");
}

std::vector<std::string> StoryGrammar::all_words() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  auto push = [&](const std::string& w) {
    if (seen.insert(w).second) {
      out.push_back(w);
    }
  };
  for (const auto& t : templates_) {
    for (const auto& slot : t.slots) {
      if (slot.starts_with('@')) {
        for (const auto& w : categories_.at(slot.substr(1))) {
          push(w);
        }
      } else {
        push(slot);
      }
    }
  }
  return out;
}

StoryCast StoryGrammar::sample_cast(Rng& rng) const {
  StoryCast c;
  const bool female = rng.below(2) == 0;
  c.name = pick_word(rng, female ? kFemaleNames : kMaleNames);
  c.pronoun = female ? "she" : "he";
  c.place = pick_word(rng, categories_.at("place"));
  c.animal = pick_word(rng, categories_.at("animal"));
  c.object = pick_word(rng, categories_.at("object"));
  c.food = pick_word(rng, categories_.at("food"));
  c.adjective = pick_word(rng, categories_.at("adj"));
  c.feeling = pick_word(rng, categories_.at("feeling"));
  c.action = pick_word(rng, categories_.at("action"));
  c.time = pick_word(rng, categories_.at("time"));
  return c;
}

Sentence StoryGrammar::realize(std::size_t index, const StoryCast& cast) const {
  Sentence out;
  for (const auto& slot : templates_.at(index).slots) {
    if (!slot.starts_with('@')) {
      out.push_back(slot);
      continue;
    }
    const std::string cat = slot.substr(1);
    if (cat == "name") out.push_back(cast.name);
    else if (cat == "pron") out.push_back(cast.pronoun);
    else if (cat == "place") out.push_back(cast.place);
    else if (cat == "animal") out.push_back(cast.animal);
    else if (cat == "object") out.push_back(cast.object);
    else if (cat == "food") out.push_back(cast.food);
    else if (cat == "adj") out.push_back(cast.adjective);
    else if (cat == "feeling") out.push_back(cast.feeling);
    else if (cat == "action") out.push_back(cast.action);
    else if (cat == "time") out.push_back(cast.time);
    else throw DomainError("unknown grammar category " + cat);
  }
  return out;
}

std::vector<std::size_t> StoryGrammar::templates_with_role(std::string_view role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < templates_.size(); ++i) {
    if (templates_[i].role == role) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<Sentence> StoryGrammar::sample_story(Rng& rng, const StoryCast& cast, bool with_action) const {
  const bool animal = rng.below(2) == 0;
  const std::string kind = animal ? "animal" : "object";
  auto choose = [&](std::string_view role) {
    const auto idx = templates_with_role(role);
    return realize(idx[rng.below(idx.size())], cast);
  };
  std::vector<Sentence> story;
  story.push_back(choose("opening"));
  story.push_back(choose("event_" + kind));
  if (with_action) {
    story.push_back(choose("action_" + kind));
  }
  story.push_back(choose("ending_" + kind));
  return story;
}

std::vector<Sentence> StoryGrammar::sample_story(Rng& rng) const {
  const StoryCast cast = sample_cast(rng);
  const bool with_action = rng.below(10) < 7;
  return sample_story(rng, cast, with_action);
}

bool StoryGrammar::slot_matches(const std::string& slot, const std::string& word) const {
  if (!slot.starts_with('@')) {
    return slot == word;
  }
  const auto& words = categories_.at(slot.substr(1));
  return std::find(words.begin(), words.end(), word) != words.end();
}

bool StoryGrammar::accepts(std::span<const std::string> words) const {
  for (const auto& t : templates_) {
    if (t.slots.size() != words.size()) {
      continue;
    }
    bool ok = true;
    for (std::size_t i = 0; i < words.size() && ok; ++i) {
      ok = slot_matches(t.slots[i], words[i]);
    }
    if (ok) {
      return true;
    }
  }
  return false;
}

bool StoryGrammar::accepts_prefix(std::span<const std::string> words) const {
  for (const auto& t : templates_) {
    if (t.slots.size() < words.size()) {
      continue;
    }
    bool ok = true;
    for (std::size_t i = 0; i < words.size() && ok; ++i) {
      ok = slot_matches(t.slots[i], words[i]);
    }
    if (ok) {
      return true;
    }
  }
  return false;
}

const StoryGrammar& story_grammar() {
  static const StoryGrammar grammar;
  return grammar;
}

// ---- corpora --------------------------------------------------------------

std::size_t TextCorpus::token_count() const {
  std::size_t n = 0;
  for (const auto& l : lines) {
    n += l.size();
  }
  return n;
}

std::size_t Corpus::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sequences) {
    n += s.size();
  }
  return n;
}

TextCorpus generate_story_corpus(std::uint64_t seed, std::size_t num_sequences) {
  if (num_sequences == 0) {
    throw DomainError("corpus size must be at least one sequence");
  }
  const StoryGrammar& g = story_grammar();
  Rng rng(seed);
  TextCorpus corpus;
  corpus.provenance = "generator=story-grammar-v1 seed=" + std::to_string(seed) +
                      " sequences=" + std::to_string(num_sequences);
  corpus.lines.reserve(num_sequences);
  for (std::size_t i = 0; i < num_sequences; ++i) {
    std::vector<std::string> line;
    for (const auto& s : g.sample_story(rng)) {
      line.insert(line.end(), s.begin(), s.end());
    }
    corpus.lines.push_back(std::move(line));
  }
  return corpus;
}

std::string corpus_text(const TextCorpus& corpus) {
  std::string out;
  if (!corpus.provenance.empty()) {
    out += "# " + corpus.provenance + "\n";
  }
  for (const auto& line : corpus.lines) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i) {
        out += ' ';
      }
      out += line[i];
    }
    out += '\n';
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const TextCorpus& corpus) {
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw FormatError("cannot open corpus file for writing: " + path.string());
  }
  os << corpus_text(corpus);
  if (!os) {
    throw FormatError("failed writing corpus file: " + path.string());
  }
}

TextCorpus read_corpus(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw FormatError("cannot open corpus file: " + path.string());
  }
  TextCorpus corpus;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (first && line.starts_with('#')) {
      corpus.provenance = line.size() > 2 ? line.substr(2) : "";
      first = false;
      continue;
    }
    first = false;
    auto words = split_words(line);
    if (!words.empty()) {
      corpus.lines.push_back(std::move(words));
    }
  }
  return corpus;
}

Vocabulary build_vocabulary(const TextCorpus& corpus) {
  std::vector<std::string> words;
  for (const auto& line : corpus.lines) {
    words.insert(words.end(), line.begin(), line.end());
  }
  return Vocabulary::sorted(words);
}

Corpus encode_corpus(const TextCorpus& corpus, const Vocabulary& vocab) {
  Corpus out;
  out.provenance = corpus.provenance;
  out.sequences.reserve(corpus.lines.size());
  for (const auto& line : corpus.lines) {
    Tokens ids = vocab.encode(line);
    ids.push_back(Vocabulary::eos);
    out.sequences.push_back(std::move(ids));
  }
  return out;
}

std::uint64_t corpus_hash(const Corpus& corpus) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : corpus.sequences) {
    for (TokenId id : s) {
      unsigned char bytes[4] = {static_cast<unsigned char>(id), static_cast<unsigned char>(id >> 8),
                                static_cast<unsigned char>(id >> 16), static_cast<unsigned char>(id >> 24)};
      h = fnv1a(std::string_view(reinterpret_cast<const char*>(bytes), 4), h);
    }
  }
  return h;
}

std::pair<Corpus, Corpus> split_holdout(const Corpus& corpus, std::size_t period) {
  Corpus train, held;
  train.provenance = held.provenance = corpus.provenance;
  for (std::size_t i = 0; i < corpus.sequences.size(); ++i) {
    if (period > 0 && i % period == period - 1) {
      held.sequences.push_back(corpus.sequences[i]);
    } else {
      train.sequences.push_back(corpus.sequences[i]);
    }
  }
  return {std::move(train), std::move(held)};
}

Corpus reversed(const Corpus& corpus) {
  Corpus out;
  out.provenance = corpus.provenance;
  for (const auto& s : corpus.sequences) {
    Tokens r(s.begin(), s.end());
    const bool has_eos = !r.empty() && r.back() == Vocabulary::eos;
    if (has_eos) {
      r.pop_back();
    }
    std::reverse(r.begin(), r.end());
    if (has_eos) {
      r.push_back(Vocabulary::eos);
    }
    out.sequences.push_back(std::move(r));
  }
  return out;
}

}  // namespace cold
