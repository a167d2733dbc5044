#pragma once

#include <array>
#include <cstdint>

#include "mcevit/color.hpp"

namespace mcevit {

enum class ChromaSubsampling { k420, k444 };

struct JpegSimConfig {
  int quality = 90;  // 1..100
  ChromaSubsampling chroma_subsampling = ChromaSubsampling::k420;
};

// Quality-scaled quantization table. scale = 5000/Q for Q<50 else 200-2Q;
// entries are clamp(floor((base*scale+50)/100), 1, 255).
std::array<int, 64> scaled_quant_table(const std::array<int, 64>& base, int quality);
const std::array<int, 64>& luma_base_table();
const std::array<int, 64>& chroma_base_table();

// Simulates the lossy stages of JPEG on full-range YCbCr planes: optional
// 2x box-filter chroma downsampling, per 8x8 block a level shift, orthonormal
// forward DCT, quantization (round to nearest, half away from zero),
// dequantization, inverse DCT, level unshift, then nearest-neighbor chroma
// upsampling. Entropy coding is lossless and therefore not modeled.
//
// Dimensions must be multiples of 8 (multiples of 16 for 4:2:0); a ShapeError
// is thrown otherwise. Output planes are not clamped.
PlanarYCbCr jpeg_degrade(const PlanarYCbCr& planes, const JpegSimConfig& cfg);

// Chroma-error enrichment:
//   y  unchanged
//   cb = cb + (cb - cb')
//   cr = cr + (cr - cr')
// where (y',cb',cr') = jpeg_degrade(planes, cfg). The luma difference is
// discarded; chroma output is not clamped.
EnrichedYCbCr enrich(const PlanarYCbCr& planes, const JpegSimConfig& cfg);

}  // namespace mcevit
