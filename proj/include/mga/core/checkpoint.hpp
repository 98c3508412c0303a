#pragma once

#include <filesystem>
#include <iosfwd>

#include "mga/core/params.hpp"

namespace mga::nn {

// Binary checkpoint layout (all integers and floats little-endian):
//
//   magic     8 bytes  "MGACKPT\0"
//   version   u32      kCheckpointVersion
//   count     u32      number of entries
//   entry*    kind u8 (0 = parameter, 1 = buffer, 2 = parameter, frozen)
//             name_len u32, name bytes (UTF-8, no terminator)
//             rank u32, extents u64 × rank
//             payload f64 × prod(extents)
//
// Entries are written in name order, so equal stores give equal files.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ParameterStore& store);
ParameterStore read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store);
// Throws StateError when the file does not exist, DataError when it is corrupt.
ParameterStore load_checkpoint(const std::filesystem::path& path);

}  // namespace mga::nn
