#include "mcevit/jpeg_sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mcevit/errors.hpp"
#include "mcevit/image.hpp"

namespace mcevit {

namespace {

// ITU-T T.81 Annex K reference tables, zig-zag undone (natural row order).
constexpr std::array<int, 64> kLumaBase = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

constexpr std::array<int, 64> kChromaBase = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99};

// Orthonormal DCT-II basis, C[k][x] = s(k) * cos((2x+1) k pi / 16).
struct DctBasis {
  double c[8][8];
  DctBasis() {
    const double pi = 3.14159265358979323846;
    for (int k = 0; k < 8; ++k) {
      const double s = (k == 0) ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) c[k][x] = s * std::cos((2 * x + 1) * k * pi / 16.0);
    }
  }
};
const DctBasis kDct;

void forward_dct8x8(const double in[8][8], double out[8][8]) {
  double tmp[8][8];
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int x = 0; x < 8; ++x) acc += kDct.c[u][x] * in[y][x];
      tmp[y][u] = acc;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double acc = 0.0;
      for (int y = 0; y < 8; ++y) acc += kDct.c[v][y] * tmp[y][u];
      out[v][u] = acc;
    }
}

void inverse_dct8x8(const double in[8][8], double out[8][8]) {
  double tmp[8][8];
  for (int v = 0; v < 8; ++v)
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int u = 0; u < 8; ++u) acc += kDct.c[u][x] * in[v][u];
      tmp[v][x] = acc;
    }
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y) {
      double acc = 0.0;
      for (int v = 0; v < 8; ++v) acc += kDct.c[v][y] * tmp[v][x];
      out[y][x] = acc;
    }
}

// Level shift, DCT, quantize/dequantize, inverse DCT on one plane in place.
void degrade_plane(std::vector<float>& plane, int width, int height, const std::array<int, 64>& table) {
  double block[8][8];
  double spec[8][8];
  for (int by = 0; by < height; by += 8) {
    for (int bx = 0; bx < width; bx += 8) {
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          block[y][x] = static_cast<double>(plane[static_cast<std::size_t>(by + y) * width + bx + x]) - 128.0;
      forward_dct8x8(block, spec);
      for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u) {
          const int t = table[v * 8 + u];
          const int q = round_half_away(spec[v][u] / t);
          spec[v][u] = static_cast<double>(q) * t;
        }
      inverse_dct8x8(spec, block);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          plane[static_cast<std::size_t>(by + y) * width + bx + x] = static_cast<float>(block[y][x] + 128.0);
    }
  }
}

std::vector<float> box_downsample2(const std::vector<float>& plane, int width, int height) {
  const int hw = width / 2, hh = height / 2;
  std::vector<float> out(static_cast<std::size_t>(hw) * hh);
  for (int y = 0; y < hh; ++y)
    for (int x = 0; x < hw; ++x) {
      const std::size_t i = static_cast<std::size_t>(2 * y) * width + 2 * x;
      out[static_cast<std::size_t>(y) * hw + x] =
          0.25f * (plane[i] + plane[i + 1] + plane[i + width] + plane[i + width + 1]);
    }
  return out;
}

std::vector<float> nearest_upsample2(const std::vector<float>& plane, int hw, int hh) {
  const int w = hw * 2, h = hh * 2;
  std::vector<float> out(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out[static_cast<std::size_t>(y) * w + x] = plane[static_cast<std::size_t>(y / 2) * hw + x / 2];
  return out;
}

}  // namespace

const std::array<int, 64>& luma_base_table() { return kLumaBase; }
const std::array<int, 64>& chroma_base_table() { return kChromaBase; }

std::array<int, 64> scaled_quant_table(const std::array<int, 64>& base, int quality) {
  if (quality < 1 || quality > 100) {
    throw ConfigError("jpeg quality must be in [1,100], got " + std::to_string(quality));
  }
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> out{};
  for (int i = 0; i < 64; ++i) out[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  return out;
}

PlanarYCbCr jpeg_degrade(const PlanarYCbCr& planes, const JpegSimConfig& cfg) {
  const int align = cfg.chroma_subsampling == ChromaSubsampling::k420 ? 16 : 8;
  if (planes.width % align != 0 || planes.height % align != 0 || planes.width < align ||
      planes.height < align) {
    throw ShapeError("jpeg_degrade needs dims aligned to " + std::to_string(align) + ", got " +
                     std::to_string(planes.width) + "x" + std::to_string(planes.height));
  }
  const auto luma_table = scaled_quant_table(kLumaBase, cfg.quality);
  const auto chroma_table = scaled_quant_table(kChromaBase, cfg.quality);

  PlanarYCbCr out = planes;
  degrade_plane(out.y_plane, out.width, out.height, luma_table);

  if (cfg.chroma_subsampling == ChromaSubsampling::k420) {
    const int hw = out.width / 2, hh = out.height / 2;
    for (auto* chroma : {&out.cb_plane, &out.cr_plane}) {
      auto half = box_downsample2(*chroma, out.width, out.height);
      degrade_plane(half, hw, hh, chroma_table);
      *chroma = nearest_upsample2(half, hw, hh);
    }
  } else {
    degrade_plane(out.cb_plane, out.width, out.height, chroma_table);
    degrade_plane(out.cr_plane, out.width, out.height, chroma_table);
  }
  return out;
}

EnrichedYCbCr enrich(const PlanarYCbCr& planes, const JpegSimConfig& cfg) {
  const PlanarYCbCr degraded = jpeg_degrade(planes, cfg);
  EnrichedYCbCr out;
  out.width = planes.width;
  out.height = planes.height;
  out.y_plane = planes.y_plane;
  const std::size_t n = planes.cb_plane.size();
  out.cb_plane.resize(n);
  out.cr_plane.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.cb_plane[i] = 2.0f * planes.cb_plane[i] - degraded.cb_plane[i];
    out.cr_plane[i] = 2.0f * planes.cr_plane[i] - degraded.cr_plane[i];
  }
  return out;
}

}  // namespace mcevit
