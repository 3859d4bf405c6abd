#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bsc/common.hpp"

namespace bsc {

// C x H x W volume, channel planes contiguous.
template <typename T>
struct Vol {
  int c = 0, h = 0, w = 0;
  std::vector<T> v;

  Vol() = default;
  Vol(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, T(0)) {}

  std::size_t size() const { return v.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

  T& at(int ci, int y, int x) { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }
  const T& at(int ci, int y, int x) const { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }

  T* plane_ptr(int ci) { return v.data() + static_cast<std::size_t>(ci) * plane(); }
  const T* plane_ptr(int ci) const { return v.data() + static_cast<std::size_t>(ci) * plane(); }

  bool same_shape(const Vol& o) const { return c == o.c && h == o.h && w == o.w; }

  template <typename U>
  Vol<U> cast() const {
    Vol<U> out(c, h, w);
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

// H x W matrix, row-major.
template <typename T>
struct Mat {
  int h = 0, w = 0;
  std::vector<T> v;

  Mat() = default;
  Mat(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, T(0)) {}
  Mat(int h_, int w_, T fill) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill) {}

  std::size_t size() const { return v.size(); }
  T& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  const T& at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }

  template <typename U>
  Mat<U> cast() const {
    Mat<U> out(h, w);
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

}  // namespace bsc
