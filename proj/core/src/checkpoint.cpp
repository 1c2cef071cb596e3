#include "cold/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cold/error.hpp"

namespace cold {

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > in_.size()) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_++])) << (8 * i);
    }
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_++])) << (8 * i);
    }
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const LanguageModel& lm) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(lm.direction()));
  w.u32(static_cast<std::uint32_t>(lm.vocab_size()));
  w.u32(static_cast<std::uint32_t>(lm.dim()));
  w.u32(static_cast<std::uint32_t>(lm.context_window()));
  for (const auto& t : lm.vocab().tokens()) {
    w.u32(static_cast<std::uint32_t>(t.size()));
    w.bytes(t.data(), t.size());
  }
  w.u64(lm.vocab().hash());
  w.u64(lm.info().corpus_hash);
  w.u64(lm.info().seed);
  w.u32(lm.info().epochs);
  lm.params().for_each([&](const Array& a) {
    w.u32(static_cast<std::uint32_t>(a.rows()));
    w.u32(static_cast<std::uint32_t>(a.cols()));
    for (real x : a.values()) {
      w.f64(static_cast<double>(x));
    }
  });
  return w.take();
}

LanguageModel deserialize_checkpoint(const std::string& bytes, std::optional<Direction> required) {
  Reader r(bytes);
  const std::string magic = r.bytes(sizeof kCheckpointMagic, "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw FormatError("not a checkpoint: bad magic bytes");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint8_t dir = r.u8("direction");
  if (dir > 1) {
    throw FormatError("checkpoint direction byte " + std::to_string(dir) + " is invalid");
  }
  const auto direction = static_cast<Direction>(dir);
  if (required && *required != direction) {
    throw DomainError(std::string("checkpoint holds a ") + direction_name(direction) + " model, but a " +
                      direction_name(*required) + " model is required");
  }
  const std::uint32_t v = r.u32("vocabulary size");
  const std::uint32_t d = r.u32("dimension");
  const std::uint32_t window = r.u32("context window");
  std::vector<std::string> tokens;
  tokens.reserve(v);
  for (std::uint32_t i = 0; i < v; ++i) {
    const std::uint32_t len = r.u32("vocabulary entry length");
    tokens.push_back(r.bytes(len, "vocabulary entry"));
  }
  Vocabulary vocab = Vocabulary::from_stored(std::move(tokens));
  const std::uint64_t stored_hash = r.u64("vocabulary hash");
  if (stored_hash != vocab.hash()) {
    throw FormatError("checkpoint vocabulary hash mismatch: stored " + hex64(stored_hash) + ", computed " +
                      hex64(vocab.hash()));
  }
  TrainingInfo info;
  info.corpus_hash = r.u64("corpus hash");
  info.seed = r.u64("seed");
  info.epochs = r.u32("epochs");

  LanguageModel lm(std::move(vocab), direction, d, window);
  lm.set_info(info);
  lm.mutable_params().for_each([&](Array& a) {
    const std::uint32_t rows = r.u32("parameter rows");
    const std::uint32_t cols = r.u32("parameter cols");
    if (rows != a.rows() || cols != a.cols()) {
      throw FormatError("checkpoint parameter shape [" + std::to_string(rows) + "x" + std::to_string(cols) +
                        "] does not match expected " + shape_string(a));
    }
    for (auto& x : a.values()) {
      x = static_cast<real>(r.f64("parameter values"));
    }
  });
  if (!r.at_end()) {
    throw FormatError("checkpoint has trailing bytes");
  }
  lm.validate();
  return lm;
}

void save_checkpoint(const LanguageModel& lm, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(lm);
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw FormatError("cannot open checkpoint for writing: " + path.string());
  }
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) {
    throw FormatError("failed writing checkpoint: " + path.string());
  }
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw FormatError("cannot open file: " + path.string());
  }
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

LanguageModel load_checkpoint(const std::filesystem::path& path, std::optional<Direction> required) {
  return deserialize_checkpoint(read_file_bytes(path), required);
}

std::uint64_t file_hash(const std::filesystem::path& path) { return fnv1a(read_file_bytes(path)); }

}  // namespace cold
