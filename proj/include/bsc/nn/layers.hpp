#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "bsc/common.hpp"
#include "bsc/rng.hpp"
#include "bsc/tensor.hpp"

namespace bsc::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// n_out = floor((n_in + 2P - K) / S) + 1
inline int output_size(int n_in, int pad, int kernel, int stride) {
  require_or<DomainError>(n_in > 0 && kernel > 0 && stride >= 1, "output_size: invalid arguments");
  require_or<DomainError>(pad >= 0, "output_size: negative padding");
  require_or<DomainError>(n_in + 2 * pad >= kernel, "output_size: kernel larger than padded input");
  return (n_in + 2 * pad - kernel) / stride + 1;
}

template <typename T>
struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  void resize(std::vector<int> s, const std::string& n) {
    name = n;
    shape = std::move(s);
    std::size_t total = 1;
    for (const int d : shape) total *= static_cast<std::size_t>(d);
    value.assign(total, T(0));
    grad.assign(total, T(0));
  }
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

namespace detail {

// im2col over output rows [r0, r1); cols is (in_ch*k*k) x ((r1-r0)*ow), row-major.
template <typename T>
void im2col(const Vol<T>& x, int k, int stride, int pad, int ow, int r0, int r1, RowMat<T>& cols) {
  const int ickk = x.c * k * k;
  const int n = (r1 - r0) * ow;
  cols.resize(ickk, n);
  for (int ci = 0; ci < x.c; ++ci) {
    const T* plane = x.plane_ptr(ci);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int row = (ci * k + ky) * k + kx;
        T* dst = cols.data() + static_cast<std::size_t>(row) * n;
        for (int oy = r0; oy < r1; ++oy) {
          const int iy = oy * stride - pad + ky;
          for (int ox = 0; ox < ow; ++ox, ++dst) {
            const int ix = ox * stride - pad + kx;
            *dst = (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w) ? plane[static_cast<std::size_t>(iy) * x.w + ix]
                                                                : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const RowMat<T>& cols, int k, int stride, int pad, int ow, int r0, int r1, Vol<T>& dx) {
  const int n = (r1 - r0) * ow;
  for (int ci = 0; ci < dx.c; ++ci) {
    T* plane = dx.plane_ptr(ci);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int row = (ci * k + ky) * k + kx;
        const T* src = cols.data() + static_cast<std::size_t>(row) * n;
        for (int oy = r0; oy < r1; ++oy) {
          const int iy = oy * stride - pad + ky;
          for (int ox = 0; ox < ow; ++ox, ++src) {
            const int ix = ox * stride - pad + kx;
            if (iy >= 0 && iy < dx.h && ix >= 0 && ix < dx.w) plane[static_cast<std::size_t>(iy) * dx.w + ix] += *src;
          }
        }
      }
    }
  }
}

inline int conv_stripe_rows(int ickk, int ow, int cap_elems = 1 << 22) {
  const int per_row = ickk * ow;
  return std::max(1, cap_elems / std::max(1, per_row));
}

}  // namespace detail

template <typename T>
struct ConvCtx {
  Vol<T> x;  // cached input
};

// 2-D convolution, im2col + GEMM. pad is symmetric; pad = (k-1)/2 gives
// size-preserving "same" behaviour for odd k at stride 1.
template <typename T>
struct Conv2D {
  int in_ch = 0, out_ch = 0, k = 1, stride = 1, pad = 0;
  ParamTensor<T> w;  // [out_ch, in_ch, k, k]
  ParamTensor<T> b;  // [out_ch]

  void init(int in_c, int out_c, int kernel, int stride_, int pad_, const std::string& name) {
    in_ch = in_c;
    out_ch = out_c;
    k = kernel;
    stride = stride_;
    pad = pad_;
    w.resize({out_c, in_c, kernel, kernel}, name + ".w");
    b.resize({out_c}, name + ".b");
  }

  void init_he(Rng& rng) {
    const double stddev = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
    for (auto& x : w.value) x = static_cast<T>(rng.gaussian(0.0, stddev));
    std::fill(b.value.begin(), b.value.end(), T(0));
  }

  std::pair<int, int> out_hw(int h, int w_) const {
    return {output_size(h, pad, k, stride), output_size(w_, pad, k, stride)};
  }

  Vol<T> forward(const Vol<T>& x) const {
    require_or<ShapeError>(x.c == in_ch, "Conv2D: channel mismatch");
    const auto [oh, ow] = out_hw(x.h, x.w);
    Vol<T> y(out_ch, oh, ow);
    Eigen::Map<const RowMat<T>> W(w.value.data(), out_ch, in_ch * k * k);
    RowMat<T> cols;
    const int stripe = detail::conv_stripe_rows(in_ch * k * k, ow);
    for (int r0 = 0; r0 < oh; r0 += stripe) {
      const int r1 = std::min(oh, r0 + stripe);
      detail::im2col(x, k, stride, pad, ow, r0, r1, cols);
      RowMat<T> yblk(out_ch, (r1 - r0) * ow);
      yblk.noalias() = W * cols;
      for (int c = 0; c < out_ch; ++c) {
        T* dst = y.plane_ptr(c) + static_cast<std::size_t>(r0) * ow;
        const T* src = yblk.data() + static_cast<std::size_t>(c) * yblk.cols();
        const T bias = b.value[c];
        for (int i = 0; i < yblk.cols(); ++i) dst[i] = src[i] + bias;
      }
    }
    return y;
  }

  Vol<T> forward_train(const Vol<T>& x, ConvCtx<T>& ctx) const {
    ctx.x = x;
    return forward(x);
  }

  // Accumulates parameter gradients; returns dL/dx.
  Vol<T> backward(const Vol<T>& dy, const ConvCtx<T>& ctx) {
    const Vol<T>& x = ctx.x;
    const auto [oh, ow] = out_hw(x.h, x.w);
    require_or<ShapeError>(dy.c == out_ch && dy.h == oh && dy.w == ow, "Conv2D backward: dy shape mismatch");
    Vol<T> dx(x.c, x.h, x.w);
    const int ickk = in_ch * k * k;
    Eigen::Map<const RowMat<T>> W(w.value.data(), out_ch, ickk);
    Eigen::Map<RowMat<T>> dW(w.grad.data(), out_ch, ickk);
    RowMat<T> cols, dcols;
    const int stripe = detail::conv_stripe_rows(ickk, ow);
    for (int r0 = 0; r0 < oh; r0 += stripe) {
      const int r1 = std::min(oh, r0 + stripe);
      const int n = (r1 - r0) * ow;
      RowMat<T> dyblk(out_ch, n);
      for (int c = 0; c < out_ch; ++c) {
        const T* src = dy.plane_ptr(c) + static_cast<std::size_t>(r0) * ow;
        std::copy(src, src + n, dyblk.data() + static_cast<std::size_t>(c) * n);
      }
      detail::im2col(x, k, stride, pad, ow, r0, r1, cols);
      dW.noalias() += dyblk * cols.transpose();
      dcols.noalias() = W.transpose() * dyblk;
      detail::col2im_add(dcols, k, stride, pad, ow, r0, r1, dx);
      for (int c = 0; c < out_ch; ++c) {
        T s = 0;
        const T* src = dyblk.data() + static_cast<std::size_t>(c) * n;
        for (int i = 0; i < n; ++i) s += src[i];
        b.grad[c] += s;
      }
    }
    return dx;
  }
};

template <typename T>
struct PoolCtx {
  std::vector<std::int32_t> argmax;  // per output element, flat input index within its plane
  int in_h = 0, in_w = 0;
};

// 2x2 stride-2 max pooling, no padding.
template <typename T>
struct MaxPool2 {
  static std::pair<int, int> out_hw(int h, int w) {
    return {output_size(h, 0, 2, 2), output_size(w, 0, 2, 2)};
  }

  static Vol<T> forward(const Vol<T>& x, PoolCtx<T>* ctx = nullptr) {
    const auto [oh, ow] = out_hw(x.h, x.w);
    Vol<T> y(x.c, oh, ow);
    if (ctx) {
      ctx->argmax.assign(y.size(), 0);
      ctx->in_h = x.h;
      ctx->in_w = x.w;
    }
    for (int c = 0; c < x.c; ++c) {
      const T* in = x.plane_ptr(c);
      T* out = y.plane_ptr(c);
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const int iy = oy * 2, ix = ox * 2;
          int best = iy * x.w + ix;
          T bv = in[best];
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int idx = (iy + dy) * x.w + (ix + dx);
              if (in[idx] > bv) {
                bv = in[idx];
                best = idx;
              }
            }
          out[oy * ow + ox] = bv;
          if (ctx) ctx->argmax[(static_cast<std::size_t>(c) * oh + oy) * ow + ox] = best;
        }
      }
    }
    return y;
  }

  static Vol<T> backward(const Vol<T>& dy, const PoolCtx<T>& ctx) {
    Vol<T> dx(dy.c, ctx.in_h, ctx.in_w);
    const std::size_t plane = dy.plane();
    for (int c = 0; c < dy.c; ++c) {
      const T* g = dy.plane_ptr(c);
      T* out = dx.plane_ptr(c);
      for (std::size_t i = 0; i < plane; ++i) out[ctx.argmax[static_cast<std::size_t>(c) * plane + i]] += g[i];
    }
    return dx;
  }
};

// 2x2 stride-2 average pooling (densenet transitions).
template <typename T>
inline Vol<T> avg_pool2(const Vol<T>& x) {
  const int oh = output_size(x.h, 0, 2, 2), ow = output_size(x.w, 0, 2, 2);
  Vol<T> y(x.c, oh, ow);
  for (int c = 0; c < x.c; ++c) {
    const T* in = x.plane_ptr(c);
    T* out = y.plane_ptr(c);
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const int iy = oy * 2, ix = ox * 2;
        out[oy * ow + ox] = (in[iy * x.w + ix] + in[iy * x.w + ix + 1] + in[(iy + 1) * x.w + ix] +
                             in[(iy + 1) * x.w + ix + 1]) /
                            T(4);
      }
  }
  return y;
}

// 3x3 stride-2 pad-1 max pooling (densenet stem).
template <typename T>
inline Vol<T> max_pool3s2p1(const Vol<T>& x) {
  const int oh = output_size(x.h, 1, 3, 2), ow = output_size(x.w, 1, 3, 2);
  Vol<T> y(x.c, oh, ow);
  for (int c = 0; c < x.c; ++c) {
    const T* in = x.plane_ptr(c);
    T* out = y.plane_ptr(c);
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        T best = std::numeric_limits<T>::lowest();
        for (int dy = -1; dy < 2; ++dy)
          for (int dx = -1; dx < 2; ++dx) {
            const int iy = oy * 2 + dy, ix = ox * 2 + dx;
            if (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w) best = std::max(best, in[iy * x.w + ix]);
          }
        out[oy * ow + ox] = best;
      }
  }
  return y;
}

template <typename T>
inline void relu_inplace(Vol<T>& x) {
  for (auto& v : x.v) v = v > T(0) ? v : T(0);
}

template <typename T>
inline Vol<T> relu_backward(const Vol<T>& dy, const Vol<T>& y) {
  Vol<T> dx = dy;
  for (std::size_t i = 0; i < dx.v.size(); ++i)
    if (y.v[i] <= T(0)) dx.v[i] = T(0);
  return dx;
}

// Fully connected layer on row-major batches: Y = X * W^T + b.
template <typename T>
struct Linear {
  int in = 0, out = 0;
  ParamTensor<T> w;  // [out, in]
  ParamTensor<T> b;  // [out]

  void init(int in_, int out_, const std::string& name) {
    in = in_;
    out = out_;
    w.resize({out_, in_}, name + ".w");
    b.resize({out_}, name + ".b");
  }

  void init_he(Rng& rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    for (auto& x : w.value) x = static_cast<T>(rng.gaussian(0.0, stddev));
    std::fill(b.value.begin(), b.value.end(), T(0));
  }

  RowMat<T> forward(const Eigen::Ref<const RowMat<T>>& x) const {
    require_or<ShapeError>(x.cols() == in, "Linear: input width mismatch (" + std::to_string(x.cols()) +
                                               " vs " + std::to_string(in) + ")");
    Eigen::Map<const RowMat<T>> W(w.value.data(), out, in);
    Eigen::Map<const VecX<T>> B(b.value.data(), out);
    RowMat<T> y(x.rows(), out);
    y.noalias() = x * W.transpose();
    y.rowwise() += B.transpose();
    return y;
  }

  // Accumulates parameter gradients; returns dL/dx.
  RowMat<T> backward(const Eigen::Ref<const RowMat<T>>& x, const Eigen::Ref<const RowMat<T>>& dy) {
    Eigen::Map<const RowMat<T>> W(w.value.data(), out, in);
    Eigen::Map<RowMat<T>> dW(w.grad.data(), out, in);
    Eigen::Map<VecX<T>> dB(b.grad.data(), out);
    dW.noalias() += dy.transpose() * x;
    dB.noalias() += dy.colwise().sum().transpose();
    RowMat<T> dx(x.rows(), in);
    dx.noalias() = dy * W;
    return dx;
  }
};

enum class Act { Relu, Leaky03 };

inline constexpr double kLeakySlope = 0.3;

template <typename T>
inline void act_inplace(RowMat<T>& a, Act kind) {
  if (kind == Act::Relu) {
    a = a.cwiseMax(T(0));
  } else {
    a = a.unaryExpr([](T v) { return v > T(0) ? v : static_cast<T>(kLeakySlope) * v; });
  }
}

// Gradient through the activation given its input `pre` (pre-activation).
template <typename T>
inline RowMat<T> act_backward(const RowMat<T>& dy, const RowMat<T>& pre, Act kind) {
  RowMat<T> dx = dy;
  const T slope = kind == Act::Relu ? T(0) : static_cast<T>(kLeakySlope);
  for (Eigen::Index i = 0; i < dx.size(); ++i)
    if (pre.data()[i] <= T(0)) dx.data()[i] *= slope;
  return dx;
}

// Inverted dropout: mask and scale at train time, identity at inference.
template <typename T>
struct DropoutMask {
  RowMat<T> scale;  // 0 or 1/(1-rate)

  void sample(Eigen::Index rows, Eigen::Index cols, T rate, Rng& rng) {
    scale.resize(rows, cols);
    const T keep = T(1) - rate;
    for (Eigen::Index i = 0; i < scale.size(); ++i)
      scale.data()[i] = rng.uniform() < static_cast<double>(rate) ? T(0) : T(1) / keep;
  }
  void apply(RowMat<T>& a) const { a.array() *= scale.array(); }
  RowMat<T> backward(const RowMat<T>& dy) const { return dy.cwiseProduct(scale); }
};

// Numerically stable per-location softmax over a 2-channel volume.
template <typename T>
inline Vol<T> softmax_pair(const Vol<T>& logits) {
  require_or<ShapeError>(logits.c == 2, "softmax_pair: expected 2 channels");
  Vol<T> p(2, logits.h, logits.w);
  const std::size_t plane = logits.plane();
  const T* a = logits.plane_ptr(0);
  const T* b = logits.plane_ptr(1);
  T* pa = p.plane_ptr(0);
  T* pb = p.plane_ptr(1);
  for (std::size_t i = 0; i < plane; ++i) {
    const T m = std::max(a[i], b[i]);
    const T ea = std::exp(a[i] - m), eb = std::exp(b[i] - m);
    pa[i] = ea / (ea + eb);
    pb[i] = eb / (ea + eb);
  }
  return p;
}

}  // namespace bsc::nn
