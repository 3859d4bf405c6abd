#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bsc/image.hpp"
#include "bsc/image_ops.hpp"
#include "bsc/io/checkpoint.hpp"
#include "bsc/nn/layers.hpp"
#include "bsc/prob_map.hpp"
#include "bsc/rng.hpp"

namespace bsc {

// Built-up-area segmenter: the first three convolutional stages of a
// 16-layer visual backbone (each stage = 3x3 convolutions + one 2x2
// stride-2 max pool, downsampling factor 8) followed by a fully
// convolutional head (one unpadded KxK convolution + one 1x1 convolution
// onto 2 channels). A 64x64 patch yields a single 1x1x2 decision; larger
// images yield a score grid at stride 8.
struct SsNetConfig {
  enum class Padding { Same, Valid };

  int patch = 64;
  std::array<int, 3> stage_convs{2, 2, 3};
  std::array<int, 3> stage_channels{64, 128, 256};
  double width_mult = 1.0;  // scales stage and head channels; 1.0 = full widths
  int head_mid = 256;
  int trunk_kernel = 3;
  // Same-padded trunk reproduces the published 224 -> 21x21x2 shape chain
  // (head kernel 8). A Valid trunk makes every op unpadded, which is the
  // regime where native-map entries equal per-crop forward passes exactly.
  Padding padding = Padding::Same;

  int channels(int stage) const {
    return std::max(1, static_cast<int>(std::lround(stage_channels[static_cast<std::size_t>(stage)] * width_mult)));
  }
  int head_mid_channels() const {
    return std::max(1, static_cast<int>(std::lround(head_mid * width_mult)));
  }
  int conv_pad() const { return padding == Padding::Same ? (trunk_kernel - 1) / 2 : 0; }

  // Trunk output edge for a given input edge; DomainError if too small.
  int trunk_out(int n) const {
    for (int s = 0; s < 3; ++s) {
      for (int i = 0; i < stage_convs[static_cast<std::size_t>(s)]; ++i)
        n = nn::output_size(n, conv_pad(), trunk_kernel, 1);
      n = nn::output_size(n, 0, 2, 2);
    }
    return n;
  }

  // Head kernel is pinned by the patch contract: one decision per patch.
  int head_kernel() const { return trunk_out(patch); }

  int native_out(int n) const {
    n = nn::output_size(trunk_out(n), 0, head_kernel(), 1);
    return nn::output_size(n, 0, 1, 1);
  }

  nlohmann::json to_json() const {
    return {{"patch", patch},
            {"stage_convs", stage_convs},
            {"stage_channels", stage_channels},
            {"width_mult", width_mult},
            {"head_mid", head_mid},
            {"trunk_kernel", trunk_kernel},
            {"padding", padding == Padding::Same ? "same" : "valid"}};
  }
  static SsNetConfig from_json(const nlohmann::json& j) {
    SsNetConfig c;
    c.patch = j.value("patch", 64);
    c.stage_convs = j.value("stage_convs", std::array<int, 3>{2, 2, 3});
    c.stage_channels = j.value("stage_channels", std::array<int, 3>{64, 128, 256});
    c.width_mult = j.value("width_mult", 1.0);
    c.head_mid = j.value("head_mid", 256);
    c.trunk_kernel = j.value("trunk_kernel", 3);
    c.padding = j.value("padding", "same") == std::string("valid") ? Padding::Valid : Padding::Same;
    return c;
  }
};

template <typename T>
struct SsNetTrainCtx {
  std::vector<nn::ConvCtx<T>> conv_ctx;
  std::vector<Vol<T>> conv_out;  // post-relu outputs per trunk conv
  std::vector<nn::PoolCtx<T>> pool_ctx;
  nn::ConvCtx<T> head1_ctx, head2_ctx;
  Vol<T> head1_out;
};

template <typename T>
class SsNet {
 public:
  SsNetConfig cfg;
  std::array<T, 3> train_mean{T(0), T(0), T(0)};  // in [0,1] pixel scale

  static SsNet random_init(const SsNetConfig& cfg, std::uint64_t seed) {
    SsNet net;
    net.cfg = cfg;
    net.build();
    Rng rng(derive_seed(seed, 0x55));
    for (auto& c : net.trunk_) c.init_he(rng);
    net.head1_.init_he(rng);
    net.head2_.init_he(rng);
    return net;
  }

  // Composes the size equation over every layer: parallel vectors of layer
  // names and expected output edges for a square input. The forward pass
  // asserts against this chain at runtime.
  std::vector<std::pair<std::string, int>> shape_chain(int n) const {
    std::vector<std::pair<std::string, int>> out;
    int conv_idx = 0;
    for (int s = 0; s < 3; ++s) {
      for (int i = 0; i < cfg.stage_convs[static_cast<std::size_t>(s)]; ++i, ++conv_idx) {
        n = nn::output_size(n, cfg.conv_pad(), cfg.trunk_kernel, 1);
        out.emplace_back("conv" + std::to_string(conv_idx), n);
      }
      n = nn::output_size(n, 0, 2, 2);
      out.emplace_back("pool" + std::to_string(s), n);
    }
    n = nn::output_size(n, 0, cfg.head_kernel(), 1);
    out.emplace_back("head1", n);
    n = nn::output_size(n, 0, 1, 1);
    out.emplace_back("head2", n);
    return out;
  }

  // Trunk features for an already-normalized input volume.
  Vol<T> trunk_forward(const Vol<T>& x, SsNetTrainCtx<T>* ctx = nullptr) const {
    Vol<T> cur = x;
    int conv_idx = 0;
    const auto chain = shape_chain(x.h);
    const bool square = x.h == x.w;
    std::size_t chain_idx = 0;
    auto check = [&](const Vol<T>& v) {
      // shape predictions from the size equation must match runtime shapes
      if (square) {
        require_or<ShapeError>(v.h == chain[chain_idx].second,
                               "ssnet: runtime shape diverged from size equation at " + chain[chain_idx].first);
      }
      ++chain_idx;
    };
    for (int s = 0; s < 3; ++s) {
      for (int i = 0; i < cfg.stage_convs[static_cast<std::size_t>(s)]; ++i, ++conv_idx) {
        if (ctx) {
          cur = trunk_[conv_idx].forward_train(cur, ctx->conv_ctx[conv_idx]);
        } else {
          cur = trunk_[conv_idx].forward(cur);
        }
        nn::relu_inplace(cur);
        if (ctx) ctx->conv_out[conv_idx] = cur;
        check(cur);
      }
      if (ctx) {
        cur = nn::MaxPool2<T>::forward(cur, &ctx->pool_ctx[s]);
      } else {
        cur = nn::MaxPool2<T>::forward(cur);
      }
      check(cur);
    }
    return cur;
  }

  // Raw 2-channel head logits at the stride-8 grid.
  Vol<T> native_logits(const Vol<T>& x, SsNetTrainCtx<T>* ctx = nullptr) const {
    require_or<ShapeError>(x.h >= cfg.patch && x.w >= cfg.patch,
                           "ssnet: input must be at least " + std::to_string(cfg.patch) + " px per side");
    Vol<T> t = trunk_forward(x, ctx);
    Vol<T> h1 = ctx ? head1_.forward_train(t, ctx->head1_ctx) : head1_.forward(t);
    nn::relu_inplace(h1);
    if (ctx) ctx->head1_out = h1;
    Vol<T> h2 = ctx ? head2_.forward_train(h1, ctx->head2_ctx) : head2_.forward(h1);
    return h2;
  }

  // Backward from d(logits); accumulates parameter gradients.
  void backward(const Vol<T>& dlogits, SsNetTrainCtx<T>& ctx) {
    Vol<T> d = head2_.backward(dlogits, ctx.head2_ctx);
    d = nn::relu_backward(d, ctx.head1_out);
    d = head1_.backward(d, ctx.head1_ctx);
    int conv_idx = static_cast<int>(trunk_.size()) - 1;
    for (int s = 2; s >= 0; --s) {
      d = nn::MaxPool2<T>::backward(d, ctx.pool_ctx[s]);
      for (int i = cfg.stage_convs[static_cast<std::size_t>(s)] - 1; i >= 0; --i, --conv_idx) {
        d = nn::relu_backward(d, ctx.conv_out[conv_idx]);
        d = trunk_[conv_idx].backward(d, ctx.conv_ctx[conv_idx]);
      }
    }
  }

  SsNetTrainCtx<T> make_ctx() const {
    SsNetTrainCtx<T> ctx;
    ctx.conv_ctx.resize(trunk_.size());
    ctx.conv_out.resize(trunk_.size());
    ctx.pool_ctx.resize(3);
    return ctx;
  }

  // [0,1] scaling followed by training-set mean subtraction.
  Vol<T> normalize(const Image8& img) const {
    Vol<T> x = to_vol<T>(img);
    for (int c = 0; c < 3; ++c) {
      T* p = x.plane_ptr(c);
      for (std::size_t i = 0; i < x.plane(); ++i) p[i] -= train_mean[static_cast<std::size_t>(c)];
    }
    return x;
  }

  // Fully convolutional segmentation of a whole image: native stride-8
  // probability grid plus a bilinear upsample of the built channel back to
  // the input size.
  ProbabilityMap segment(const Image8& img) const {
    require_or<ShapeError>(img.ch == 3, "ssnet::segment: RGB input required");
    require_or<ShapeError>(img.h >= cfg.patch && img.w >= cfg.patch,
                           "ssnet::segment: image smaller than " + std::to_string(cfg.patch) + " px");
    const Vol<T> logits = native_logits(normalize(img));
    const Vol<T> prob = nn::softmax_pair(logits);
    ProbabilityMap pm;
    pm.native = Vol<float>(2, prob.h, prob.w);
    for (std::size_t i = 0; i < prob.v.size(); ++i) pm.native.v[i] = static_cast<float>(prob.v[i]);
    Mat<float> built(prob.h, prob.w);
    for (int y = 0; y < prob.h; ++y)
      for (int x = 0; x < prob.w; ++x) built.at(y, x) = static_cast<float>(prob.at(1, y, x));
    pm.values = bilinear_resize(built, img.h, img.w);
    for (auto& v : pm.values.v) v = std::min(1.f, std::max(0.f, v));
    return pm;
  }

  ProbabilityMap segment(const ImageTile& tile) const { return segment(tile.pixels); }

  // Built probability of a single patch-or-larger crop: max over the grid.
  T built_prob_max(const Image8& img, int* best_y = nullptr, int* best_x = nullptr) const {
    const Vol<T> prob = nn::softmax_pair(native_logits(normalize(img)));
    T best = T(-1);
    for (int y = 0; y < prob.h; ++y)
      for (int x = 0; x < prob.w; ++x)
        if (prob.at(1, y, x) > best) {
          best = prob.at(1, y, x);
          if (best_y) *best_y = y;
          if (best_x) *best_x = x;
        }
    return best;
  }

  std::vector<nn::ParamTensor<T>*> params() {
    std::vector<nn::ParamTensor<T>*> out;
    for (auto& c : trunk_) {
      out.push_back(&c.w);
      out.push_back(&c.b);
    }
    out.push_back(&head1_.w);
    out.push_back(&head1_.b);
    out.push_back(&head2_.w);
    out.push_back(&head2_.b);
    return out;
  }

  std::vector<const nn::ParamTensor<T>*> params() const {
    std::vector<const nn::ParamTensor<T>*> out;
    for (const auto& c : trunk_) {
      out.push_back(&c.w);
      out.push_back(&c.b);
    }
    out.push_back(&head1_.w);
    out.push_back(&head1_.b);
    out.push_back(&head2_.w);
    out.push_back(&head2_.b);
    return out;
  }

  // Head-layer params only (the unpadded convolutions after the trunk).
  std::vector<nn::ParamTensor<T>*> head_params() {
    return {&head1_.w, &head1_.b, &head2_.w, &head2_.b};
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    ck.kind = "ssnet";
    ck.meta["config"] = cfg.to_json();
    ck.meta["train_mean"] = std::vector<double>{static_cast<double>(train_mean[0]),
                                                static_cast<double>(train_mean[1]),
                                                static_cast<double>(train_mean[2])};
    for (const auto* p : params()) ck.add_param(*p);
    return ck;
  }

  static SsNet from_checkpoint(const Checkpoint& ck) {
    require_or<ParseError>(ck.kind == "ssnet", "checkpoint kind is not ssnet");
    SsNet net;
    net.cfg = SsNetConfig::from_json(ck.meta.at("config"));
    net.build();
    const auto mean = ck.meta.at("train_mean").get<std::vector<double>>();
    for (int i = 0; i < 3; ++i) net.train_mean[static_cast<std::size_t>(i)] = static_cast<T>(mean[static_cast<std::size_t>(i)]);
    for (auto* p : net.params()) ck.load_param(*p);
    return net;
  }

 private:
  std::vector<nn::Conv2D<T>> trunk_;
  nn::Conv2D<T> head1_, head2_;

  void build() {
    // Build-time conformance: the size equation must map a training patch
    // to exactly one 2-channel decision.
    const int hk = cfg.head_kernel();
    require_or<ShapeError>(cfg.native_out(cfg.patch) == 1, "ssnet: patch does not reduce to a 1x1 decision");
    trunk_.clear();
    int idx = 0;
    int in_ch = 3;
    for (int s = 0; s < 3; ++s) {
      for (int i = 0; i < cfg.stage_convs[static_cast<std::size_t>(s)]; ++i, ++idx) {
        nn::Conv2D<T> c;
        c.init(in_ch, cfg.channels(s), cfg.trunk_kernel, 1, cfg.conv_pad(), "trunk" + std::to_string(idx));
        in_ch = cfg.channels(s);
        trunk_.push_back(std::move(c));
      }
    }
    head1_.init(in_ch, cfg.head_mid_channels(), hk, 1, 0, "head1");
    head2_.init(cfg.head_mid_channels(), 2, 1, 1, 0, "head2");
  }
};

// Pixel accuracy and built-class F1 of a thresholded probability map
// against a binary mask. When neither prediction nor truth contains any
// built pixel F1 is 1 by convention; if exactly one side is empty it is 0.
inline std::pair<double, double> segmentation_metrics(const ProbabilityMap& pred, const Image8& truth,
                                                      double threshold = 0.5) {
  require_or<ShapeError>(truth.ch == 1, "segmentation_metrics: mask must be single-channel");
  require_or<ShapeError>(pred.values.h == truth.h && pred.values.w == truth.w,
                         "segmentation_metrics: shape mismatch");
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  const std::size_t n = pred.values.v.size();
  for (int y = 0; y < truth.h; ++y)
    for (int x = 0; x < truth.w; ++x) {
      const bool p = pred.values.at(y, x) >= threshold;
      const bool t = truth.at(y, x) >= 128;
      if (p == t) ++correct;
      if (p && t) ++tp;
      if (p && !t) ++fp;
      if (!p && t) ++fn;
    }
  const double acc = static_cast<double>(correct) / static_cast<double>(n);
  double f1;
  if (tp == 0 && fp == 0 && fn == 0) {
    f1 = 1.0;
  } else if (tp == 0) {
    f1 = 0.0;
  } else {
    const double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double rec = static_cast<double>(tp) / static_cast<double>(tp + fn);
    f1 = 2.0 * prec * rec / (prec + rec);
  }
  return {acc, f1};
}

}  // namespace bsc
