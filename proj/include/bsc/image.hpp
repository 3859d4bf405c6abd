#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bsc/common.hpp"
#include "bsc/tensor.hpp"

namespace bsc {

// Interleaved 8-bit raster, ch = 1 (mask/gray) or 3 (RGB).
struct Image8 {
  int h = 0, w = 0, ch = 0;
  std::vector<std::uint8_t> v;

  Image8() = default;
  Image8(int h_, int w_, int ch_, std::uint8_t fill = 0)
      : h(h_), w(w_), ch(ch_), v(static_cast<std::size_t>(h_) * w_ * ch_, fill) {}

  std::uint8_t& at(int y, int x, int c = 0) {
    return v[(static_cast<std::size_t>(y) * w + x) * ch + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return v[(static_cast<std::size_t>(y) * w + x) * ch + c];
  }
  bool empty() const { return v.empty(); }
};

struct GeoBounds {
  double lat_min = 0, lat_max = 0, lon_min = 0, lon_max = 0;
};

// Zoom-19 imagery covers 0.3 m per pixel.
inline constexpr double kDefaultMetersPerPixel = 0.3;

// Georeferenced RGB tile with a ground-truth building count and optional
// built/non-built mask (0 = non-built, 255 = built).
struct ImageTile {
  std::string id;
  Image8 pixels;  // ch == 3
  int count = 0;
  std::optional<GeoBounds> geo;
  std::optional<Image8> mask;  // ch == 1, same h/w as pixels
  double meters_per_pixel = kDefaultMetersPerPixel;

  void validate() const {
    require_or<DomainError>(count >= 0, "tile " + id + ": count must be >= 0");
    require_or<DomainError>(meters_per_pixel > 0, "tile " + id + ": meters_per_pixel must be > 0");
    require_or<ShapeError>(pixels.ch == 3, "tile " + id + ": pixels must be RGB");
    if (mask) {
      require_or<ShapeError>(mask->h == pixels.h && mask->w == pixels.w && mask->ch == 1,
                             "tile " + id + ": mask dimensions must match pixels");
    }
  }
};

// Physical extent of a tile edge. (336, 0.3) -> 100.8 m.
inline double tile_extent_meters(int size_px, double meters_per_pixel) {
  require_or<DomainError>(size_px > 0, "tile_extent_meters: size_px must be positive");
  require_or<DomainError>(meters_per_pixel > 0, "tile_extent_meters: meters_per_pixel must be positive");
  return static_cast<double>(size_px) * meters_per_pixel;
}

// RGB bytes -> float volume scaled to [0,1]. No mean subtraction here;
// normalization policy is the caller's.
template <typename T>
Vol<T> to_vol(const Image8& img) {
  require_or<ShapeError>(img.ch == 3 || img.ch == 1, "to_vol: expected 1- or 3-channel image");
  Vol<T> out(img.ch, img.h, img.w);
  for (int c = 0; c < img.ch; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) out.at(c, y, x) = static_cast<T>(img.at(y, x, c)) / T(255);
  return out;
}

}  // namespace bsc
