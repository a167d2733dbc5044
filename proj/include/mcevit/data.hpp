#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcevit/image.hpp"

namespace mcevit {

struct LabeledImage {
  ImageU8 image;
  int label = 0;  // 0=gan, 1=graphics, 2=real
  std::string id;
};

// Disjoint per-class 60:20:20 partition, stored as ids.
struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

struct SynthConfig {
  int per_class_count = 200;
  int image_size = 224;
  std::uint64_t seed = 7;

  void validate() const;
};

// Reads PPM files from root/{gan,graphics,real}/ in lexicographic order.
// Ids are class-prefixed relative paths, so duplicate filenames across
// classes stay distinct.
std::vector<LabeledImage> load_dataset(const std::string& root);

// Per-class seeded shuffle, then a 60/20/20 cut (rounded to the nearest
// image). Classes with fewer than 5 items cannot realize the ratio.
DatasetSplit split_dataset(const std::vector<LabeledImage>& items, std::uint64_t seed);

// One synthetic image, bitwise reproducible per (seed, label, index).
//   real:     multi-octave value noise, sensor-like grain (sigma 2), mild
//             vignette
//   gan:      low-resolution random field, bicubic 8x upsample (band-limited,
//             chroma high-frequency deficit)
//   graphics: flat-shaded random polygons, hard edges, <=16 colors per image
ImageU8 synth_image(int label, int index, const SynthConfig& cfg);

std::vector<LabeledImage> generate_synthetic(const SynthConfig& cfg);

void write_split_csv(const DatasetSplit& split, const std::vector<LabeledImage>& items,
                     const std::string& path);

// Lookup helpers: items carrying the given ids, in the ids' order.
std::vector<const LabeledImage*> select_by_id(const std::vector<LabeledImage>& items,
                                              const std::vector<std::string>& ids);

}  // namespace mcevit
