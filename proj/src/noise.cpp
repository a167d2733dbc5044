#include "mcevit/noise.hpp"

#include <string>

#include "mcevit/errors.hpp"
#include "mcevit/rng.hpp"

namespace mcevit {

ImageU8 add_gaussian_noise(const ImageU8& img, const NoiseSpec& spec) {
  if (spec.sigma < 0.0) throw ConfigError("noise sigma must be >= 0, got " + std::to_string(spec.sigma));
  if (spec.sigma == 0.0) return img;
  ImageU8 out = img;
  Rng rng(spec.seed);
  for (auto& byte : out.data) {
    byte = to_u8(static_cast<double>(byte) + rng.normal(0.0, spec.sigma));
  }
  return out;
}

}  // namespace mcevit
