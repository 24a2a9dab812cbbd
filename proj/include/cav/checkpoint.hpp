#pragma once
#include <string>
#include <utility>
#include <vector>

#include "cav/matrix.hpp"

namespace cav::num {

using NamedBlocks = std::vector<std::pair<std::string, Matrix>>;

// Flat binary format: magic "CAVCKPT", version byte 1, u32 block count, then
// per block u32 name length, name bytes, u32 rows, u32 cols, row-major
// little-endian doubles. Block order is preserved.
void save_checkpoint(const std::string& path, const NamedBlocks& blocks);
NamedBlocks load_checkpoint(const std::string& path);  // throws std::runtime_error

}  // namespace cav::num
