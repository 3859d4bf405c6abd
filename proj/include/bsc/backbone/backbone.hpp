#pragma once

#include <memory>
#include <string>
#include <vector>

#include "bsc/image.hpp"
#include "bsc/io/checkpoint.hpp"
#include "bsc/nn/layers.hpp"
#include "bsc/rng.hpp"

namespace bsc {

// Frozen pretrained feature extractor. Inputs are scaled to [0,1] and are
// deliberately NOT mean-normalized: subtracting natural-image channel means
// disrupts overhead imagery and measurably hurt counting accuracy.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual std::string descriptor() const = 0;
  virtual int stride() const = 0;
  virtual int channels() const = 0;
  virtual int min_input() const = 0;

  // C x h x w output of the last convolutional stage.
  virtual Vol<float> extract_volume(const Image8& img) const = 0;

  Vol<float> extract_volume(const ImageTile& tile) const { return extract_volume(tile.pixels); }

  // Global average pooling of the last-stage volume: per-channel spatial mean.
  std::vector<float> extract_pooled(const Image8& img) const {
    return pool_volume(extract_volume(img));
  }
  std::vector<float> extract_pooled(const ImageTile& tile) const { return extract_pooled(tile.pixels); }

  static std::vector<float> pool_volume(const Vol<float>& v) {
    std::vector<float> out(static_cast<std::size_t>(v.c));
    const double inv = 1.0 / static_cast<double>(v.plane());
    for (int c = 0; c < v.c; ++c) {
      double s = 0;
      const float* p = v.plane_ptr(c);
      for (std::size_t i = 0; i < v.plane(); ++i) s += p[i];
      out[static_cast<std::size_t>(c)] = static_cast<float>(s * inv);
    }
    return out;
  }

  // Flattened copy of all weights; the freeze tests compare this before and
  // after head training.
  virtual std::vector<double> weight_signature() const = 0;

 protected:
  void check_size(const Image8& img) const {
    require_or<ShapeError>(img.ch == 3, descriptor() + ": RGB input required");
    require_or<ShapeError>(img.h >= min_input() && img.w >= min_input(),
                           descriptor() + ": input smaller than minimum " + std::to_string(min_input()));
  }
};

// Small randomly initialized CNN (stride 32, 64 channels) for offline runs:
// stem stride-2 conv followed by four conv+pool stages. Deterministic in
// its seed, so the descriptor alone reproduces the weights.
class TinyBackbone final : public Backbone {
 public:
  explicit TinyBackbone(std::uint64_t seed = 17) : seed_(seed) {
    const int chans[6] = {16, 32, 48, 64, 64, 64};
    Rng rng(derive_seed(seed, 0xb0));
    convs_.resize(6);
    convs_[0].init(3, chans[0], 3, 2, 1, "stem");
    for (int i = 1; i < 6; ++i) convs_[static_cast<std::size_t>(i)].init(chans[i - 1], chans[i], 3, 1, 1, "conv" + std::to_string(i));
    for (auto& c : convs_) c.init_he(rng);
  }

  std::string descriptor() const override { return "tiny64:seed=" + std::to_string(seed_); }
  int stride() const override { return 32; }
  int channels() const override { return 64; }
  int min_input() const override { return 32; }

  Vol<float> extract_volume(const Image8& img) const override {
    check_size(img);
    Vol<float> x = to_vol<float>(img);
    x = convs_[0].forward(x);
    nn::relu_inplace(x);
    for (int i = 1; i < 6; ++i) {
      x = convs_[static_cast<std::size_t>(i)].forward(x);
      nn::relu_inplace(x);
      if (i < 5) x = nn::MaxPool2<float>::forward(x);
    }
    return x;
  }

  std::vector<double> weight_signature() const override {
    std::vector<double> sig;
    for (const auto& c : convs_) {
      sig.insert(sig.end(), c.w.value.begin(), c.w.value.end());
      sig.insert(sig.end(), c.b.value.begin(), c.b.value.end());
    }
    return sig;
  }

 private:
  std::uint64_t seed_;
  std::vector<nn::Conv2D<float>> convs_;
};

namespace densenet {

struct BatchNorm {
  std::vector<float> gamma, beta, mean, var;

  void init_identity(int ch) {
    gamma.assign(static_cast<std::size_t>(ch), 1.f);
    beta.assign(static_cast<std::size_t>(ch), 0.f);
    mean.assign(static_cast<std::size_t>(ch), 0.f);
    var.assign(static_cast<std::size_t>(ch), 1.f);
  }

  void apply(Vol<float>& x) const {
    constexpr float eps = 1e-5f;
    for (int c = 0; c < x.c; ++c) {
      const std::size_t ci = static_cast<std::size_t>(c);
      const float scale = gamma[ci] / std::sqrt(var[ci] + eps);
      const float shift = beta[ci] - mean[ci] * scale;
      float* p = x.plane_ptr(c);
      for (std::size_t i = 0; i < x.plane(); ++i) p[i] = p[i] * scale + shift;
    }
  }
};

inline Vol<float> concat_channels(const Vol<float>& a, const Vol<float>& b) {
  Vol<float> out(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
  return out;
}

}  // namespace densenet

// DenseNet-121 feature extractor (blocks 6/12/24/16, growth 32): the
// counting models' default backbone when converted pretrained weights are
// available. Tensor names follow the torchvision state_dict so conversion
// is a straight dump (tools/export_densenet121.py).
class DenseNet121 final : public Backbone {
 public:
  // Random topology (documented fallback when pretrained weights are
  // unavailable; shape semantics are identical).
  explicit DenseNet121(std::uint64_t seed) : source_("random-seed=" + std::to_string(seed)) {
    build();
    Rng rng(derive_seed(seed, 0xd1));
    for (auto& c : convs_) c.init_he(rng);
  }

  explicit DenseNet121(const std::string& weights_path) : source_("weights=" + weights_path) {
    build();
    const Checkpoint ck = Checkpoint::load(weights_path);
    for (auto& c : convs_) {
      const auto& d = ck.data(c.w.name);
      require_or<ShapeError>(d.size() == c.w.value.size(), c.w.name + ": weight size mismatch");
      for (std::size_t i = 0; i < d.size(); ++i) c.w.value[i] = static_cast<float>(d[i]);
    }
    for (auto& [name, bn] : bns_) {
      auto load = [&](const char* suffix, std::vector<float>& dst) {
        const auto& d = ck.data(name + suffix);
        require_or<ShapeError>(d.size() == dst.size(), name + suffix + ": size mismatch");
        for (std::size_t i = 0; i < d.size(); ++i) dst[i] = static_cast<float>(d[i]);
      };
      load(".weight", bn.gamma);
      load(".bias", bn.beta);
      load(".running_mean", bn.mean);
      load(".running_var", bn.var);
    }
  }

  std::string descriptor() const override { return "densenet121:" + source_; }
  int stride() const override { return 32; }
  int channels() const override { return 1024; }
  int min_input() const override { return 32; }

  Vol<float> extract_volume(const Image8& img) const override {
    check_size(img);
    Vol<float> x = to_vol<float>(img);
    std::size_t ci = 0, bi = 0;
    x = convs_[ci++].forward(x);
    bns_[bi++].second.apply(x);
    nn::relu_inplace(x);
    x = nn::max_pool3s2p1(x);
    static constexpr int kBlocks[4] = {6, 12, 24, 16};
    for (int b = 0; b < 4; ++b) {
      for (int l = 0; l < kBlocks[b]; ++l) {
        Vol<float> y = x;
        bns_[bi++].second.apply(y);
        nn::relu_inplace(y);
        y = convs_[ci++].forward(y);  // 1x1 bottleneck
        bns_[bi++].second.apply(y);
        nn::relu_inplace(y);
        y = convs_[ci++].forward(y);  // 3x3 growth
        x = densenet::concat_channels(x, y);
      }
      if (b < 3) {
        bns_[bi++].second.apply(x);
        nn::relu_inplace(x);
        x = convs_[ci++].forward(x);  // 1x1 halving
        x = nn::avg_pool2(x);
      }
    }
    bns_[bi++].second.apply(x);
    nn::relu_inplace(x);
    return x;
  }

  std::vector<double> weight_signature() const override {
    std::vector<double> sig;
    for (const auto& c : convs_) sig.insert(sig.end(), c.w.value.begin(), c.w.value.end());
    for (const auto& [name, bn] : bns_) {
      sig.insert(sig.end(), bn.gamma.begin(), bn.gamma.end());
      sig.insert(sig.end(), bn.beta.begin(), bn.beta.end());
    }
    return sig;
  }

 private:
  std::string source_;
  std::vector<nn::Conv2D<float>> convs_;
  std::vector<std::pair<std::string, densenet::BatchNorm>> bns_;

  void add_conv(int in, int out, int k, int stride, int pad, const std::string& name) {
    nn::Conv2D<float> c;
    c.init(in, out, k, stride, pad, name);
    // densenet convolutions carry no bias
    std::fill(c.b.value.begin(), c.b.value.end(), 0.f);
    c.w.name = name + ".weight";
    convs_.push_back(std::move(c));
  }

  void add_bn(int ch, const std::string& name) {
    densenet::BatchNorm bn;
    bn.init_identity(ch);
    bns_.emplace_back(name, std::move(bn));
  }

  void build() {
    static constexpr int kBlocks[4] = {6, 12, 24, 16};
    constexpr int growth = 32, bn_size = 4;
    add_conv(3, 64, 7, 2, 3, "features.conv0");
    add_bn(64, "features.norm0");
    int ch = 64;
    for (int b = 0; b < 4; ++b) {
      const std::string block = "features.denseblock" + std::to_string(b + 1);
      for (int l = 0; l < kBlocks[b]; ++l) {
        const std::string layer = block + ".denselayer" + std::to_string(l + 1);
        add_bn(ch, layer + ".norm1");
        add_conv(ch, bn_size * growth, 1, 1, 0, layer + ".conv1");
        add_bn(bn_size * growth, layer + ".norm2");
        add_conv(bn_size * growth, growth, 3, 1, 1, layer + ".conv2");
        ch += growth;
      }
      if (b < 3) {
        const std::string trans = "features.transition" + std::to_string(b + 1);
        add_bn(ch, trans + ".norm");
        add_conv(ch, ch / 2, 1, 1, 0, trans + ".conv");
        ch /= 2;
      }
    }
    add_bn(ch, "features.norm5");
  }
};

// Factory from a descriptor string:
//   "tiny64[:seed=N]"
//   "densenet121:weights=<path>" | "densenet121[:random-seed=N]"
inline std::shared_ptr<Backbone> make_backbone(const std::string& descriptor) {
  auto after = [&](const std::string& key) -> std::optional<std::string> {
    const auto pos = descriptor.find(key);
    if (pos == std::string::npos) return std::nullopt;
    return descriptor.substr(pos + key.size());
  };
  if (descriptor.rfind("tiny64", 0) == 0) {
    std::uint64_t seed = 17;
    if (auto s = after("seed=")) seed = std::stoull(*s);
    return std::make_shared<TinyBackbone>(seed);
  }
  if (descriptor.rfind("densenet121", 0) == 0) {
    if (auto w = after("weights=")) return std::make_shared<DenseNet121>(*w);
    std::uint64_t seed = 17;
    if (auto s = after("random-seed=")) seed = std::stoull(*s);
    return std::make_shared<DenseNet121>(seed);
  }
  throw ConfigError("unknown backbone descriptor: " + descriptor);
}

}  // namespace bsc
