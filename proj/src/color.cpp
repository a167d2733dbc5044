#include "mcevit/color.hpp"

#include <algorithm>
#include <cmath>

#include "mcevit/errors.hpp"

namespace mcevit {

PlanarYCbCr rgb_to_ycbcr(const ImageU8& img) {
  validate_dims(img.width, img.height);
  PlanarYCbCr out;
  out.width = img.width;
  out.height = img.height;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  out.y_plane.resize(n);
  out.cb_plane.resize(n);
  out.cr_plane.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float r = img.data[i * 3 + 0];
    const float g = img.data[i * 3 + 1];
    const float b = img.data[i * 3 + 2];
    const float y = 0.299f * r + 0.587f * g + 0.114f * b;
    const float cb = 128.0f - 0.168736f * r - 0.331264f * g + 0.5f * b;
    const float cr = 128.0f + 0.5f * r - 0.418688f * g - 0.081312f * b;
    out.y_plane[i] = std::clamp(y, 0.0f, 255.0f);
    out.cb_plane[i] = std::clamp(cb, 0.0f, 255.0f);
    out.cr_plane[i] = std::clamp(cr, 0.0f, 255.0f);
  }
  return out;
}

ImageU8 ycbcr_to_rgb(const PlanarYCbCr& planes) {
  ImageU8 out(planes.width, planes.height);
  const std::size_t n = static_cast<std::size_t>(planes.width) * planes.height;
  if (planes.y_plane.size() != n || planes.cb_plane.size() != n || planes.cr_plane.size() != n) {
    throw ShapeError("YCbCr plane sizes do not match " + std::to_string(planes.width) + "x" +
                     std::to_string(planes.height));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double y = planes.y_plane[i];
    const double cb = planes.cb_plane[i] - 128.0;
    const double cr = planes.cr_plane[i] - 128.0;
    out.data[i * 3 + 0] = to_u8(y + 1.402 * cr);
    out.data[i * 3 + 1] = to_u8(y - 0.344136 * cb - 0.714136 * cr);
    out.data[i * 3 + 2] = to_u8(y + 1.772 * cb);
  }
  return out;
}

double psnr(const PlanarYCbCr& a, const PlanarYCbCr& b) {
  if (a.width != b.width || a.height != b.height) {
    throw ShapeError("psnr dims mismatch " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                     " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
  }
  const std::size_t n = a.y_plane.size();
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dy = static_cast<double>(a.y_plane[i]) - b.y_plane[i];
    const double dcb = static_cast<double>(a.cb_plane[i]) - b.cb_plane[i];
    const double dcr = static_cast<double>(a.cr_plane[i]) - b.cr_plane[i];
    sse += dy * dy + dcb * dcb + dcr * dcr;
  }
  const double mse = sse / (3.0 * static_cast<double>(n));
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace mcevit
