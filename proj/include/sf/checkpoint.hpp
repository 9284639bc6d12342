#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sf/array.hpp"

namespace sf {

// Little-endian binary container of named f64 arrays:
//   magic (4 bytes), format version u32, array count u32, then per array
//   name length u16 + UTF-8 name, rank u8, extents u64 each, raw f64 data.
// "SFCK" holds field parameters, "SFFX" holds extractor weights.
inline constexpr char kCheckpointMagic[5] = "SFCK";
inline constexpr char kExtractorMagic[5] = "SFFX";
inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedArrays = std::vector<std::pair<std::string, Array>>;

void save_named_arrays(const std::string& path, const NamedArrays& arrays,
                       const char magic[5] = kCheckpointMagic);
NamedArrays load_named_arrays(const std::string& path, const char magic[5] = kCheckpointMagic);

// FNV-1a over the raw bytes of every array in order; freezing contract checks.
std::uint64_t hash_arrays(const NamedArrays& arrays);

}  // namespace sf
