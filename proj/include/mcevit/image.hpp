#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mcevit {

// Interleaved 8-bit RGB raster. Dimensions must be at least 8 and a multiple
// of 8; loaders pad to satisfy this (see load_ppm / replicate_pad).
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major, R,G,B per pixel

  ImageU8() = default;
  ImageU8(int w, int h);

  std::uint8_t& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  bool operator==(const ImageU8& o) const = default;
};

// Throws ShapeError unless dims are >= 8 and multiples of 8.
void validate_dims(int width, int height);

// Rounds half away from zero, the convention used everywhere a float becomes
// an integer intensity.
int round_half_away(double v);
std::uint8_t to_u8(double v);

// Edge-replicates the image so both dimensions become multiples of `multiple`
// (and at least `multiple`). Returns the input unchanged if already aligned.
ImageU8 replicate_pad(const ImageU8& img, int multiple);
ImageU8 crop(const ImageU8& img, int width, int height);

// Bilinear resize to an exact target size. Returns a copy when the size
// already matches.
ImageU8 resize_bilinear(const ImageU8& img, int out_width, int out_height);

// Binary PPM (P6, maxval 255). load_ppm pads to the ImageU8 alignment
// contract via replicate_pad(.., 8).
ImageU8 load_ppm(const std::string& path);
void save_ppm(const ImageU8& img, const std::string& path);

// Binary PGM (P5) for single-plane debug dumps; values clamped to [0,255].
void save_pgm(const std::vector<float>& plane, int width, int height, const std::string& path);

// Raw little-endian f32 plane stack:
//   16-byte header { magic "MCEV", u32 width, u32 height, u32 plane_count }
// followed by plane_count * width * height floats.
void save_raw_planes(const std::vector<const std::vector<float>*>& planes, int width, int height,
                     const std::string& path);

}  // namespace mcevit
