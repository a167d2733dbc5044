#include "mcevit/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mcevit/errors.hpp"

namespace mcevit {

ImageU8::ImageU8(int w, int h) : width(w), height(h) {
  validate_dims(w, h);
  data.assign(static_cast<std::size_t>(w) * h * 3, 0);
}

void validate_dims(int width, int height) {
  if (width < 8 || height < 8 || width % 8 != 0 || height % 8 != 0) {
    throw ShapeError("image dims must be >=8 and multiples of 8, got " + std::to_string(width) +
                     "x" + std::to_string(height));
  }
}

int round_half_away(double v) {
  return static_cast<int>(v >= 0.0 ? std::floor(v + 0.5) : std::ceil(v - 0.5));
}

std::uint8_t to_u8(double v) {
  const int r = round_half_away(v);
  return static_cast<std::uint8_t>(std::clamp(r, 0, 255));
}

ImageU8 replicate_pad(const ImageU8& img, int multiple) {
  const int w = std::max(multiple, (img.width + multiple - 1) / multiple * multiple);
  const int h = std::max(multiple, (img.height + multiple - 1) / multiple * multiple);
  if (w == img.width && h == img.height) return img;
  ImageU8 out(w, h);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(y, img.height - 1);
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(x, img.width - 1);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

ImageU8 crop(const ImageU8& img, int width, int height) {
  if (width == img.width && height == img.height) return img;
  if (width > img.width || height > img.height) {
    throw ShapeError("crop target " + std::to_string(width) + "x" + std::to_string(height) +
                     " exceeds source " + std::to_string(img.width) + "x" + std::to_string(img.height));
  }
  ImageU8 out(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, c);
  return out;
}

ImageU8 resize_bilinear(const ImageU8& img, int out_width, int out_height) {
  if (out_width == img.width && out_height == img.height) return img;
  if (img.width <= 0 || img.height <= 0) throw ShapeError("resize of zero-area image");
  ImageU8 out(out_width, out_height);
  const double sx = static_cast<double>(img.width) / out_width;
  const double sy = static_cast<double>(img.height) / out_height;
  for (int y = 0; y < out_height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c);
        const double bot = (1.0 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c);
        out.at(x, y, c) = to_u8((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

namespace {

int read_pnm_token(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments between header fields.
  while (true) {
    const int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  if (!in || value < 0) throw IoError("malformed PNM header in " + path);
  return value;
}

}  // namespace

ImageU8 load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '6') throw IoError("not a binary PPM (P6): " + path);
  const int w = read_pnm_token(in, path);
  const int h = read_pnm_token(in, path);
  const int maxval = read_pnm_token(in, path);
  if (maxval != 255) throw IoError("unsupported PPM maxval " + std::to_string(maxval) + " in " + path);
  in.get();  // single whitespace after maxval
  if (w <= 0 || h <= 0) throw IoError("degenerate PPM size in " + path);
  ImageU8 raw;
  raw.width = w;
  raw.height = h;
  raw.data.resize(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data.data()), static_cast<std::streamsize>(raw.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.data.size())) {
    throw IoError("truncated PPM payload in " + path);
  }
  return replicate_pad(raw, 8);
}

void save_ppm(const ImageU8& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!out) throw IoError("short write to " + path);
}

void save_pgm(const std::vector<float>& plane, int width, int height, const std::string& path) {
  if (plane.size() != static_cast<std::size_t>(width) * height) {
    throw ShapeError("plane size " + std::to_string(plane.size()) + " does not match " +
                     std::to_string(width) + "x" + std::to_string(height));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << width << " " << height << "\n255\n";
  std::vector<std::uint8_t> bytes(plane.size());
  for (std::size_t i = 0; i < plane.size(); ++i) bytes[i] = to_u8(plane[i]);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

void save_raw_planes(const std::vector<const std::vector<float>*>& planes, int width, int height,
                     const std::string& path) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  for (const auto* p : planes) {
    if (p->size() != n) {
      throw ShapeError("plane size " + std::to_string(p->size()) + " does not match " +
                       std::to_string(width) + "x" + std::to_string(height));
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  const std::uint32_t fields[3] = {static_cast<std::uint32_t>(width), static_cast<std::uint32_t>(height),
                                   static_cast<std::uint32_t>(planes.size())};
  out.write("MCEV", 4);
  out.write(reinterpret_cast<const char*>(fields), sizeof(fields));
  for (const auto* p : planes) {
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(p->data()), static_cast<std::streamsize>(p->size() * 4));
  }
  if (!out) throw IoError("short write to " + path);
}

}  // namespace mcevit
