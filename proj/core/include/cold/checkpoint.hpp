#pragma once

// Binary checkpoint layout (all integers and floats little-endian):
//
//   magic            7 bytes  "COLDLM1"
//   format version   u32      currently 1
//   direction        u8       0 = forward, 1 = reverse
//   V                u32      vocabulary size
//   d                u32      hidden size
//   context window   u32
//   vocabulary       V x (u32 byte length, UTF-8 bytes)
//   vocabulary hash  u64      FNV-1a, see Vocabulary::hash
//   corpus hash      u64
//   training seed    u64
//   epochs           u32
//   parameters       12 x (u32 rows, u32 cols, rows*cols f64) in LmParameters order

#include <filesystem>
#include <optional>
#include <string>

#include "cold/language_model.hpp"

namespace cold {

inline constexpr char kCheckpointMagic[7] = {'C', 'O', 'L', 'D', 'L', 'M', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const LanguageModel& lm);
LanguageModel deserialize_checkpoint(const std::string& bytes, std::optional<Direction> required = std::nullopt);

void save_checkpoint(const LanguageModel& lm, const std::filesystem::path& path);
// Throws FormatError on bad magic, version, truncation or a vocabulary hash
// that does not match the stored entries; DomainError on direction mismatch.
LanguageModel load_checkpoint(const std::filesystem::path& path, std::optional<Direction> required = std::nullopt);

std::string read_file_bytes(const std::filesystem::path& path);
std::uint64_t file_hash(const std::filesystem::path& path);

}  // namespace cold
