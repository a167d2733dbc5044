#pragma once

#include <vector>

#include "mcevit/image.hpp"

namespace mcevit {

// Full-range (JFIF) YCbCr planes. Values produced from an ImageU8 lie in
// [0,255]; degraded planes may ring slightly outside and are kept unclamped.
struct PlanarYCbCr {
  int width = 0;
  int height = 0;
  std::vector<float> y_plane;
  std::vector<float> cb_plane;
  std::vector<float> cr_plane;
};

// Result of the chroma-error enrichment. y_plane is a bitwise copy of the
// source; the chroma planes may exceed [0,255] and are not clamped.
struct EnrichedYCbCr {
  int width = 0;
  int height = 0;
  std::vector<float> y_plane;
  std::vector<float> cb_plane;
  std::vector<float> cr_plane;
};

// Y  = 0.299 R + 0.587 G + 0.114 B
// Cb = 128 - 0.168736 R - 0.331264 G + 0.5 B
// Cr = 128 + 0.5 R - 0.418688 G - 0.081312 B
// Computed in float, clamped to [0,255], not rounded.
PlanarYCbCr rgb_to_ycbcr(const ImageU8& img);

// Inverse transform, rounded half away from zero and clamped to [0,255].
ImageU8 ycbcr_to_rgb(const PlanarYCbCr& planes);

// PSNR in dB over all three planes jointly, peak 255.
double psnr(const PlanarYCbCr& a, const PlanarYCbCr& b);

}  // namespace mcevit
