#pragma once

#include <string>
#include <utility>
#include <vector>

#include "eenas/tensor.hpp"

namespace eenas {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Flat binary weight file. Byte layout (all integers little-endian):
//   magic "NCHW1" (5 bytes)
//   per parameter, in order:
//     u32 name length, name bytes,
//     u32 rank, u64 extent per dimension,
//     f64 value per element (row-major, IEEE-754 little-endian).
// Records run to end of file; see docs/FORMATS.md for a worked example.
void save_checkpoint(const std::string& path, const NamedParams& params);

/// Parses a checkpoint; malformed input raises ParseError naming the byte offset.
NamedParams load_checkpoint(const std::string& path);

}  // namespace eenas
