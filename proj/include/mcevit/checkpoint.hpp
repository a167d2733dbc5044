#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mcevit/tensor.hpp"

namespace mcevit {

// Parameter checkpoint file:
//   { magic "MCEW", u32 format version, u32 tensor count }
// then per tensor
//   { u32 name length, UTF-8 name, u32 rank, u32 extents..., f32 data }
// all integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& path);

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

}  // namespace mcevit
