#pragma once

#include <cstdint>

#include "mcevit/image.hpp"

namespace mcevit {

struct NoiseSpec {
  double sigma = 0.0;  // 8-bit intensity units, >= 0
  std::uint64_t seed = 0;
};

// Adds i.i.d. N(0, sigma^2) per channel in float, rounds half away from zero
// and clamps to [0,255]. sigma == 0 returns the input bitwise. Deterministic
// for a fixed seed.
ImageU8 add_gaussian_noise(const ImageU8& img, const NoiseSpec& spec);

}  // namespace mcevit
