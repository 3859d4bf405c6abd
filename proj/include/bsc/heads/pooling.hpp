#pragma once

#include "bsc/image_ops.hpp"
#include "bsc/nn/layers.hpp"
#include "bsc/prob_map.hpp"
#include "bsc/tensor.hpp"

namespace bsc {

// Resamples a full-resolution probability map onto the feature-volume grid.
template <typename T>
Mat<T> prob_to_grid(const ProbabilityMap& pm, int h, int w) {
  return bilinear_resize(pm.values, h, w).template cast<T>();
}

// Channel-wise multiplication of a feature volume by the (resampled)
// probability map: zero probability annihilates a pixel across channels,
// probability one passes it through unchanged.
template <typename T>
Vol<T> weighted_volume(const Vol<T>& vol, const Mat<T>& prob) {
  require_or<ShapeError>(vol.h == prob.h && vol.w == prob.w, "weighted_volume: spatial shape mismatch");
  Vol<T> out(vol.c, vol.h, vol.w);
  for (int c = 0; c < vol.c; ++c) {
    const T* src = vol.plane_ptr(c);
    T* dst = out.plane_ptr(c);
    for (std::size_t i = 0; i < vol.plane(); ++i) dst[i] = src[i] * prob.v[i];
  }
  return out;
}

// Global weighted average pooling:
//   out[c] = (1/(h*w)) * sum_{y,x} vol[c,y,x] * prob[y,x]
// The normalizer is the plain pixel count, so prob == 1 reduces gwap to
// unweighted global average pooling exactly, and an all-zero map (an empty
// scene) stays well defined.
template <typename T>
nn::VecX<T> gwap(const Vol<T>& vol, const Mat<T>& prob) {
  require_or<ShapeError>(vol.h == prob.h && vol.w == prob.w, "gwap: spatial shape mismatch");
  for (const T p : prob.v)
    require_or<DomainError>(p >= T(0) && p <= T(1) + T(1e-6), "gwap: probability outside [0,1]");
  nn::VecX<T> out(vol.c);
  const T inv = T(1) / static_cast<T>(vol.plane());
  for (int c = 0; c < vol.c; ++c) {
    const T* src = vol.plane_ptr(c);
    T acc = 0;
    for (std::size_t i = 0; i < vol.plane(); ++i) acc += src[i] * prob.v[i];
    out[c] = acc * inv;
  }
  return out;
}

template <typename T>
void gwap_backward(const nn::VecX<T>& dout, const Vol<T>& vol, const Mat<T>& prob, Vol<T>* dvol,
                   Mat<T>* dprob) {
  const T inv = T(1) / static_cast<T>(vol.plane());
  if (dvol) {
    *dvol = Vol<T>(vol.c, vol.h, vol.w);
    for (int c = 0; c < vol.c; ++c) {
      T* dst = dvol->plane_ptr(c);
      for (std::size_t i = 0; i < vol.plane(); ++i) dst[i] = dout[c] * prob.v[i] * inv;
    }
  }
  if (dprob) {
    *dprob = Mat<T>(prob.h, prob.w);
    for (int c = 0; c < vol.c; ++c) {
      const T* src = vol.plane_ptr(c);
      for (std::size_t i = 0; i < vol.plane(); ++i) dprob->v[i] += dout[c] * src[i] * inv;
    }
  }
}

// Cross-channel parametric pooling: a learnable 1x1 convolution collapsing
// the weighted volume to one activation map,
//   out[y,x] = bias + sum_c w[c] * wvol[c,y,x]
template <typename T>
Mat<T> ccpp(const Vol<T>& wvol, const std::vector<T>& w, T bias) {
  require_or<ShapeError>(static_cast<int>(w.size()) == wvol.c, "ccpp: weight/channel mismatch");
  Mat<T> out(wvol.h, wvol.w, bias);
  for (int c = 0; c < wvol.c; ++c) {
    const T* src = wvol.plane_ptr(c);
    const T wc = w[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < wvol.plane(); ++i) out.v[i] += wc * src[i];
  }
  return out;
}

template <typename T>
void ccpp_backward(const Mat<T>& dmap, const Vol<T>& wvol, const std::vector<T>& w, Vol<T>* dwvol,
                   std::vector<T>* dw, T* dbias) {
  if (dwvol) {
    *dwvol = Vol<T>(wvol.c, wvol.h, wvol.w);
    for (int c = 0; c < wvol.c; ++c) {
      T* dst = dwvol->plane_ptr(c);
      const T wc = w[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < wvol.plane(); ++i) dst[i] = dmap.v[i] * wc;
    }
  }
  if (dw) {
    dw->assign(w.size(), T(0));
    for (int c = 0; c < wvol.c; ++c) {
      const T* src = wvol.plane_ptr(c);
      T acc = 0;
      for (std::size_t i = 0; i < wvol.plane(); ++i) acc += dmap.v[i] * src[i];
      (*dw)[static_cast<std::size_t>(c)] += acc;
    }
  }
  if (dbias) {
    T acc = 0;
    for (const T d : dmap.v) acc += d;
    *dbias = acc;
  }
}

}  // namespace bsc
