#include "mcevit/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <unordered_map>

#include "mcevit/errors.hpp"
#include "mcevit/fusion.hpp"
#include "mcevit/rng.hpp"

namespace fs = std::filesystem;

namespace mcevit {

void SynthConfig::validate() const {
  if (per_class_count < 10) {
    throw ConfigError("synth: per_class_count must be >= 10, got " + std::to_string(per_class_count));
  }
  if (image_size < 16 || image_size % 16 != 0) {
    throw ConfigError("synth: image_size must be a positive multiple of 16, got " +
                      std::to_string(image_size));
  }
}

std::vector<LabeledImage> load_dataset(const std::string& root) {
  std::vector<LabeledImage> out;
  for (int label = 0; label < kNumClasses; ++label) {
    const fs::path dir = fs::path(root) / class_name(label);
    if (!fs::is_directory(dir)) {
      throw IoError("missing class directory " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      LabeledImage item;
      item.label = label;
      item.id = std::string(class_name(label)) + "/" + f.filename().string();
      try {
        item.image = load_ppm(f.string());
      } catch (const IoError& e) {
        throw IoError(std::string("unreadable image ") + f.string() + ": " + e.what());
      }
      out.push_back(std::move(item));
    }
  }
  return out;
}

DatasetSplit split_dataset(const std::vector<LabeledImage>& items, std::uint64_t seed) {
  if (items.empty()) throw ConfigError("split: empty dataset");
  DatasetSplit split;
  split.seed = seed;
  for (int label = 0; label < kNumClasses; ++label) {
    std::vector<const std::string*> ids;
    for (const auto& item : items)
      if (item.label == label) ids.push_back(&item.id);
    if (ids.empty()) continue;
    if (ids.size() < 5) {
      throw ConfigError(std::string("split: class ") + class_name(label) + " has " +
                        std::to_string(ids.size()) + " items, need >= 5 for a 60:20:20 cut");
    }
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(label)));
    rng.shuffle(ids);
    const std::size_t n = ids.size();
    const std::size_t n_train = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(n)));
    const std::size_t n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_train) {
        split.train.push_back(*ids[i]);
      } else if (i < n_train + n_val) {
        split.validation.push_back(*ids[i]);
      } else {
        split.test.push_back(*ids[i]);
      }
    }
  }
  return split;
}

namespace {

// Bilinearly interpolated lattice of random values in [-1,1], one octave of
// value noise.
class ValueNoise {
 public:
  ValueNoise(int cells, Rng& rng) : cells_(cells), lattice_((cells + 1) * (cells + 1)) {
    for (auto& v : lattice_) v = rng.uniform(-1.0, 1.0);
  }

  double sample(double u, double v) const {  // u,v in [0,1]
    const double x = u * cells_;
    const double y = v * cells_;
    const int x0 = std::min(static_cast<int>(x), cells_ - 1);
    const int y0 = std::min(static_cast<int>(y), cells_ - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const auto at = [&](int xi, int yi) { return lattice_[yi * (cells_ + 1) + xi]; };
    const double top = (1.0 - fx) * at(x0, y0) + fx * at(x0 + 1, y0);
    const double bot = (1.0 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1);
    return (1.0 - fy) * top + fy * bot;
  }

 private:
  int cells_;
  std::vector<double> lattice_;
};

// Catmull-Rom weight, a = -0.5.
double cubic_weight(double t) {
  t = std::abs(t);
  if (t < 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
  if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
  return 0.0;
}

ImageU8 synth_real(int size, Rng& rng) {
  // Shared structure plus per-channel mottle at two scales; grain and a mild
  // vignette on top.
  const int coarse_cells = std::max(2, size / 32);
  const int fine_cells = std::max(4, size / 8);
  ValueNoise shared_coarse(coarse_cells, rng);
  ValueNoise shared_fine(fine_cells, rng);
  std::vector<ValueNoise> chroma_coarse;
  std::vector<ValueNoise> chroma_fine;
  for (int c = 0; c < 3; ++c) {
    chroma_coarse.emplace_back(coarse_cells, rng);
    chroma_fine.emplace_back(fine_cells, rng);
  }
  const double jitter = rng.uniform(-20.0, 20.0);
  ImageU8 img(size, size);
  const double center = (size - 1) / 2.0;
  const double r2max = 2.0 * center * center;
  // Grain must be drawn in a fixed pixel order.
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = static_cast<double>(x) / size;
      const double v = static_cast<double>(y) / size;
      const double base_c = shared_coarse.sample(u, v);
      const double base_f = shared_fine.sample(u, v);
      const double dx = x - center, dy = y - center;
      const double vignette = 1.0 - 0.15 * (dx * dx + dy * dy) / r2max;
      for (int c = 0; c < 3; ++c) {
        double val = 128.0 + 42.0 * (0.6 * base_c + 0.4 * chroma_coarse[c].sample(u, v)) +
                     24.0 * (0.6 * base_f + 0.4 * chroma_fine[c].sample(u, v));
        val = val * vignette + jitter + rng.normal(0.0, 2.0);
        img.at(x, y, c) = to_u8(val);
      }
    }
  }
  return img;
}

ImageU8 synth_gan(int size, Rng& rng) {
  // Low-resolution RGB field, bicubically upsampled 8x.
  const int low = size / 8;
  std::vector<double> field(static_cast<std::size_t>(low) * low * 3);
  for (auto& v : field) v = rng.uniform(0.0, 255.0);
  const double jitter = rng.uniform(-20.0, 20.0);
  const auto at = [&](int x, int y, int c) {
    x = std::clamp(x, 0, low - 1);
    y = std::clamp(y, 0, low - 1);
    return field[(static_cast<std::size_t>(y) * low + x) * 3 + c];
  };
  ImageU8 img(size, size);
  for (int y = 0; y < size; ++y) {
    const double fy = (y + 0.5) / 8.0 - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const double ty = fy - y0;
    for (int x = 0; x < size; ++x) {
      const double fx = (x + 0.5) / 8.0 - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int j = -1; j <= 2; ++j) {
          const double wy = cubic_weight(ty - j);
          if (wy == 0.0) continue;
          for (int i = -1; i <= 2; ++i) {
            acc += wy * cubic_weight(tx - i) * at(x0 + i, y0 + j, c);
          }
        }
        img.at(x, y, c) = to_u8(acc + jitter);
      }
    }
  }
  return img;
}

ImageU8 synth_graphics(int size, Rng& rng) {
  // Flat-shaded triangles over a flat background, all colors from a palette
  // of at most 16.
  constexpr int kPaletteSize = 16;
  const double jitter = rng.uniform(-20.0, 20.0);
  std::array<std::array<std::uint8_t, 3>, kPaletteSize> palette;
  for (auto& color : palette)
    for (auto& ch : color) ch = to_u8(rng.uniform(0.0, 255.0) + jitter);

  ImageU8 img(size, size);
  const auto& bg = palette[0];
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = bg[c];

  const int triangles = 26;
  for (int t = 0; t < triangles; ++t) {
    const auto& color = palette[rng.below(kPaletteSize)];
    const double cx = rng.uniform(0.0, size);
    const double cy = rng.uniform(0.0, size);
    double px[3], py[3];
    for (int k = 0; k < 3; ++k) {
      const double angle = rng.uniform(0.0, 6.283185307179586);
      const double radius = rng.uniform(10.0, size / 3.0);
      px[k] = cx + radius * std::cos(angle);
      py[k] = cy + radius * std::sin(angle);
    }
    const int x_lo = std::max(0, static_cast<int>(std::floor(std::min({px[0], px[1], px[2]}))));
    const int x_hi = std::min(size - 1, static_cast<int>(std::ceil(std::max({px[0], px[1], px[2]}))));
    const int y_lo = std::max(0, static_cast<int>(std::floor(std::min({py[0], py[1], py[2]}))));
    const int y_hi = std::min(size - 1, static_cast<int>(std::ceil(std::max({py[0], py[1], py[2]}))));
    const auto edge = [](double ax, double ay, double bx, double by, double qx, double qy) {
      return (bx - ax) * (qy - ay) - (by - ay) * (qx - ax);
    };
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double qx = x + 0.5, qy = y + 0.5;
        const double e0 = edge(px[0], py[0], px[1], py[1], qx, qy);
        const double e1 = edge(px[1], py[1], px[2], py[2], qx, qy);
        const double e2 = edge(px[2], py[2], px[0], py[0], qx, qy);
        if ((e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0)) {
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[c];
        }
      }
    }
  }
  return img;
}

}  // namespace

ImageU8 synth_image(int label, int index, const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, (static_cast<std::uint64_t>(label) << 32) |
                                 static_cast<std::uint64_t>(index)));
  switch (label) {
    case kClassGan: return synth_gan(cfg.image_size, rng);
    case kClassGraphics: return synth_graphics(cfg.image_size, rng);
    case kClassReal: return synth_real(cfg.image_size, rng);
    default: throw ConfigError("synth: unknown label " + std::to_string(label));
  }
}

std::vector<LabeledImage> generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<LabeledImage> out(static_cast<std::size_t>(cfg.per_class_count) * kNumClasses);
  for (int label = 0; label < kNumClasses; ++label) {
    for (int i = 0; i < cfg.per_class_count; ++i) {
      LabeledImage& item = out[static_cast<std::size_t>(label) * cfg.per_class_count + i];
      item.label = label;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%04d.ppm", i);
      item.id = std::string(class_name(label)) + "/" + buf;
      item.image = synth_image(label, i, cfg);
    }
  }
  return out;
}

void write_split_csv(const DatasetSplit& split, const std::vector<LabeledImage>& items,
                     const std::string& path) {
  std::unordered_map<std::string, int> labels;
  for (const auto& item : items) labels[item.id] = item.label;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "id,class,partition\n";
  const auto dump = [&](const std::vector<std::string>& ids, const char* part) {
    for (const auto& id : ids) {
      const auto it = labels.find(id);
      out << id << "," << (it == labels.end() ? "?" : class_name(it->second)) << "," << part << "\n";
    }
  };
  dump(split.train, "train");
  dump(split.validation, "validation");
  dump(split.test, "test");
  if (!out) throw IoError("short write to " + path);
}

std::vector<const LabeledImage*> select_by_id(const std::vector<LabeledImage>& items,
                                              const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const LabeledImage*> index;
  for (const auto& item : items) index[item.id] = &item;
  std::vector<const LabeledImage*> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw ConfigError("split references unknown id " + id);
    out.push_back(it->second);
  }
  return out;
}

}  // namespace mcevit
