#pragma once

#include <cmath>

#include "bsc/image.hpp"
#include "bsc/tensor.hpp"

namespace bsc {

inline Image8 flip_h(const Image8& in) {
  Image8 out(in.h, in.w, in.ch);
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x)
      for (int c = 0; c < in.ch; ++c) out.at(y, x, c) = in.at(y, in.w - 1 - x, c);
  return out;
}

inline Image8 flip_v(const Image8& in) {
  Image8 out(in.h, in.w, in.ch);
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x)
      for (int c = 0; c < in.ch; ++c) out.at(y, x, c) = in.at(in.h - 1 - y, x, c);
  return out;
}

// counterclockwise quarter turn
inline Image8 rot90(const Image8& in) {
  Image8 out(in.w, in.h, in.ch);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x)
      for (int c = 0; c < in.ch; ++c) out.at(y, x, c) = in.at(x, in.w - 1 - y, c);
  return out;
}

inline Image8 rot270(const Image8& in) {
  Image8 out(in.w, in.h, in.ch);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x)
      for (int c = 0; c < in.ch; ++c) out.at(y, x, c) = in.at(in.h - 1 - x, y, c);
  return out;
}

// reflect-101 index fold: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

// Rotation about the image center by `degrees`, bilinear sampling, exposed
// corners filled by edge reflection. Output keeps the input size.
inline Image8 rotate_bilinear(const Image8& in, double degrees) {
  Image8 out(in.h, in.w, in.ch);
  const double rad = degrees * 3.14159265358979323846 / 180.0;
  const double ca = std::cos(rad), sa = std::sin(rad);
  const double cy = (in.h - 1) / 2.0, cx = (in.w - 1) / 2.0;
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      // inverse map: rotate destination coords back into the source
      const double dy = y - cy, dx = x - cx;
      const double sx = cx + ca * dx + sa * dy;
      const double sy = cy - sa * dx + ca * dy;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      const int xs[2] = {reflect_index(x0, in.w), reflect_index(x0 + 1, in.w)};
      const int ys[2] = {reflect_index(y0, in.h), reflect_index(y0 + 1, in.h)};
      for (int c = 0; c < in.ch; ++c) {
        const double v00 = in.at(ys[0], xs[0], c), v01 = in.at(ys[0], xs[1], c);
        const double v10 = in.at(ys[1], xs[0], c), v11 = in.at(ys[1], xs[1], c);
        const double val = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::min(255.0, std::max(0.0, val))));
      }
    }
  }
  return out;
}

// Same rotation with nearest-neighbour sampling; keeps masks binary.
inline Image8 rotate_nearest(const Image8& in, double degrees) {
  Image8 out(in.h, in.w, in.ch);
  const double rad = degrees * 3.14159265358979323846 / 180.0;
  const double ca = std::cos(rad), sa = std::sin(rad);
  const double cy = (in.h - 1) / 2.0, cx = (in.w - 1) / 2.0;
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      const double dy = y - cy, dx = x - cx;
      const int sx = reflect_index(static_cast<int>(std::lround(cx + ca * dx + sa * dy)), in.w);
      const int sy = reflect_index(static_cast<int>(std::lround(cy - sa * dx + ca * dy)), in.h);
      for (int c = 0; c < in.ch; ++c) out.at(y, x, c) = in.at(sy, sx, c);
    }
  }
  return out;
}

inline Image8 crop(const Image8& in, int y0, int x0, int h, int w) {
  require_or<ShapeError>(y0 >= 0 && x0 >= 0 && y0 + h <= in.h && x0 + w <= in.w, "crop: window out of bounds");
  Image8 out(h, w, in.ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < in.ch; ++c) out.at(y, x, c) = in.at(y0 + y, x0 + x, c);
  return out;
}

// Bilinear resample with half-pixel centers.
template <typename T>
Mat<T> bilinear_resize(const Mat<T>& in, int oh, int ow) {
  require_or<ShapeError>(in.h > 0 && in.w > 0 && oh > 0 && ow > 0, "bilinear_resize: empty input or output");
  Mat<T> out(oh, ow);
  const double sy = static_cast<double>(in.h) / oh;
  const double sx = static_cast<double>(in.w) / ow;
  for (int y = 0; y < oh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(in.h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, in.h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < ow; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(in.w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, in.w - 1);
      const double wx = fx - x0;
      const double val = (1 - wy) * ((1 - wx) * in.at(y0, x0) + wx * in.at(y0, x1)) +
                         wy * ((1 - wx) * in.at(y1, x0) + wx * in.at(y1, x1));
      out.at(y, x) = static_cast<T>(val);
    }
  }
  return out;
}

inline Image8 resize_rgb(const Image8& in, int oh, int ow) {
  require_or<ShapeError>(!in.empty(), "resize_rgb: empty image");
  if (oh == in.h && ow == in.w) return in;
  Image8 out(oh, ow, in.ch);
  for (int c = 0; c < in.ch; ++c) {
    Mat<float> plane(in.h, in.w);
    for (int y = 0; y < in.h; ++y)
      for (int x = 0; x < in.w; ++x) plane.at(y, x) = in.at(y, x, c);
    const Mat<float> r = bilinear_resize(plane, oh, ow);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::min(255.f, std::max(0.f, r.at(y, x)))));
  }
  return out;
}

}  // namespace bsc
