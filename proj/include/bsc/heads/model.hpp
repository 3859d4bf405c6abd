#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bsc/backbone/backbone.hpp"
#include "bsc/heads/pooling.hpp"
#include "bsc/image_ops.hpp"
#include "bsc/io/checkpoint.hpp"
#include "bsc/nn/layers.hpp"
#include "bsc/ssnet/ssnet.hpp"

namespace bsc {

enum class CountKind { Drc, Gwap, Ccpp, Fusion };

inline const char* kind_name(CountKind k) {
  switch (k) {
    case CountKind::Drc: return "drc";
    case CountKind::Gwap: return "gwap";
    case CountKind::Ccpp: return "ccpp";
    case CountKind::Fusion: return "fusion";
  }
  return "?";
}

inline CountKind parse_kind(const std::string& s) {
  if (s == "drc") return CountKind::Drc;
  if (s == "gwap") return CountKind::Gwap;
  if (s == "ccpp") return CountKind::Ccpp;
  if (s == "fusion") return CountKind::Fusion;
  throw ConfigError("unknown counting model kind: " + s);
}

// Three fully connected layers (in -> 512 -> 32 -> 1), dropout between
// them, no activation at the output. DRC uses ReLU; the attention heads use
// leaky-ReLU (slope 0.3) against the large activations a probability-
// weighted volume produces.
template <typename T>
struct PipelineCtx {
  nn::RowMat<T> x, pre1, a1, pre2, a2;
  nn::DropoutMask<T> m1, m2;
  bool train = false;
};

template <typename T>
struct Pipeline {
  nn::Linear<T> fc1, fc2, fc3;
  nn::Act act = nn::Act::Relu;
  T dropout = T(0.6);

  void init(int in, nn::Act act_, T dropout_, Rng& rng, const std::string& name) {
    act = act_;
    dropout = dropout_;
    fc1.init(in, 512, name + ".fc1");
    fc2.init(512, 32, name + ".fc2");
    fc3.init(32, 1, name + ".fc3");
    fc1.init_he(rng);
    fc2.init_he(rng);
    fc3.init_he(rng);
  }

  // Batch forward. Dropout fires only when ctx.train is set; inference is a
  // pure function of the parameters and input.
  nn::VecX<T> forward(const Eigen::Ref<const nn::RowMat<T>>& x, PipelineCtx<T>* ctx = nullptr,
                      Rng* drop_rng = nullptr) const {
    nn::RowMat<T> pre1 = fc1.forward(x);
    nn::RowMat<T> a1 = pre1;
    nn::act_inplace(a1, act);
    nn::DropoutMask<T> m1, m2;
    const bool train = ctx && ctx->train;
    if (train) {
      m1.sample(a1.rows(), a1.cols(), dropout, *drop_rng);
      m1.apply(a1);
    }
    nn::RowMat<T> pre2 = fc2.forward(a1);
    nn::RowMat<T> a2 = pre2;
    nn::act_inplace(a2, act);
    if (train) {
      m2.sample(a2.rows(), a2.cols(), dropout, *drop_rng);
      m2.apply(a2);
    }
    nn::RowMat<T> y = fc3.forward(a2);
    if (ctx) {
      ctx->x = x;
      ctx->pre1 = std::move(pre1);
      ctx->a1 = std::move(a1);
      ctx->pre2 = std::move(pre2);
      ctx->a2 = std::move(a2);
      ctx->m1 = std::move(m1);
      ctx->m2 = std::move(m2);
    }
    return y.col(0);
  }

  // Returns dL/dx for upstream layers.
  nn::RowMat<T> backward(const nn::VecX<T>& dpred, PipelineCtx<T>& ctx) {
    nn::RowMat<T> dy(dpred.size(), 1);
    dy.col(0) = dpred;
    nn::RowMat<T> da2 = fc3.backward(ctx.a2, dy);
    if (ctx.train) da2 = ctx.m2.backward(da2);
    nn::RowMat<T> dpre2 = nn::act_backward(da2, ctx.pre2, act);
    nn::RowMat<T> da1 = fc2.backward(ctx.a1, dpre2);
    if (ctx.train) da1 = ctx.m1.backward(da1);
    nn::RowMat<T> dpre1 = nn::act_backward(da1, ctx.pre1, act);
    return fc1.backward(ctx.x, dpre1);
  }

  std::vector<nn::ParamTensor<T>*> params() {
    return {&fc1.w, &fc1.b, &fc2.w, &fc2.b, &fc3.w, &fc3.b};
  }
};

// Per-image inputs to the counting heads, derived once from the frozen
// backbone and segmenter: the pooled vector, the gwap vector and the
// probability-weighted feature volume.
template <typename T>
struct HeadInputs {
  nn::VecX<T> pooled;
  nn::VecX<T> gwapv;  // empty for DRC
  Vol<T> wvol;        // empty for DRC/GWAP
};

template <typename T>
struct CountForwardCtx {
  bool train = false;
  PipelineCtx<T> pipe_ctx;
  // fusion stream caches
  nn::RowMat<T> xp, xg, xc;
  nn::RowMat<T> pre_d, pre_g, pre_c;
  nn::RowMat<T> a_d, a_g, a_c;
  PipelineCtx<T> fusion_ctx;
  std::vector<const HeadInputs<T>*> batch;  // wvol access for the C1 backward
};

// One of the four counting models. The backbone is always frozen; attention
// kinds additionally hold a frozen segmenter producing the attention map.
template <typename T>
class CountModel {
 public:
  CountKind kind = CountKind::Drc;
  std::shared_ptr<const Backbone> backbone;
  std::optional<SsNet<float>> ssnet;
  std::string ssnet_source;  // provenance of the embedded segmenter
  int image_size = 336;
  T dropout = T(0.6);
  nlohmann::json train_log;  // config snapshot + loss history, set by the trainer

  // heads
  Pipeline<T> pipe;                    // DRC / GWAP / CCPP
  nn::ParamTensor<T> c1_w, c1_b;       // 1x1 cross-channel projection (CCPP, FUSION)
  nn::Linear<T> stream_drc, stream_gwap, stream_ccpp;  // FUSION 512-unit streams
  Pipeline<T> fusion_pipe;

  static CountModel create(CountKind kind, std::shared_ptr<const Backbone> backbone,
                           std::optional<SsNet<float>> ssnet, std::uint64_t seed, int image_size = 336,
                           double dropout = 0.6) {
    require_or<ConfigError>(backbone != nullptr, "count model requires a backbone");
    if (kind == CountKind::Drc) {
      require_or<ConfigError>(!ssnet.has_value(), "drc does not take a segmenter");
    } else {
      require_or<ConfigError>(ssnet.has_value(), std::string(kind_name(kind)) + " requires a segmenter");
    }
    CountModel m;
    m.kind = kind;
    m.backbone = std::move(backbone);
    m.ssnet = std::move(ssnet);
    m.image_size = image_size;
    m.dropout = static_cast<T>(dropout);
    m.build(seed);
    return m;
  }

  int grid_edge() const { return image_size / backbone->stride(); }
  int grid_cells() const { return grid_edge() * grid_edge(); }
  bool needs_ssnet() const { return kind != CountKind::Drc; }
  nn::Act act() const { return kind == CountKind::Drc ? nn::Act::Relu : nn::Act::Leaky03; }

  // Backbone + segmenter pass for one (already resized) image.
  HeadInputs<T> head_inputs(const Image8& px) const {
    require_or<ShapeError>(px.h == image_size && px.w == image_size,
                           "count model expects " + std::to_string(image_size) + "px inputs");
    HeadInputs<T> hi;
    const Vol<float> volf = backbone->extract_volume(px);
    require_or<ShapeError>(volf.h == grid_edge() && volf.w == grid_edge(),
                           "backbone grid diverged from stride ladder");
    const auto pooled = Backbone::pool_volume(volf);
    hi.pooled = nn::VecX<T>(volf.c);
    for (int c = 0; c < volf.c; ++c) hi.pooled[c] = static_cast<T>(pooled[static_cast<std::size_t>(c)]);
    if (needs_ssnet()) {
      const ProbabilityMap pm = ssnet->segment(px);
      const Mat<T> pgrid = prob_to_grid<T>(pm, volf.h, volf.w);
      const Vol<T> vol = volf.template cast<T>();
      hi.wvol = weighted_volume(vol, pgrid);
      hi.gwapv = gwap(vol, pgrid);
    }
    return hi;
  }

  // Raw (unclamped) prediction for a batch of head inputs.
  nn::VecX<T> forward_batch(const std::vector<const HeadInputs<T>*>& batch, CountForwardCtx<T>* ctx = nullptr,
                            Rng* drop_rng = nullptr) const {
    const auto B = static_cast<Eigen::Index>(batch.size());
    if (ctx) {
      ctx->batch = batch;
      ctx->pipe_ctx.train = ctx->train;
      ctx->fusion_ctx.train = ctx->train;
    }
    switch (kind) {
      case CountKind::Drc:
      case CountKind::Gwap: {
        nn::RowMat<T> x(B, backbone->channels());
        for (Eigen::Index i = 0; i < B; ++i)
          x.row(i) = (kind == CountKind::Drc ? batch[static_cast<std::size_t>(i)]->pooled
                                             : batch[static_cast<std::size_t>(i)]->gwapv)
                         .transpose();
        return pipe.forward(x, ctx ? &ctx->pipe_ctx : nullptr, drop_rng);
      }
      case CountKind::Ccpp: {
        const nn::RowMat<T> maps = c1_maps(batch);
        return pipe.forward(maps, ctx ? &ctx->pipe_ctx : nullptr, drop_rng);
      }
      case CountKind::Fusion: {
        nn::RowMat<T> xp(B, backbone->channels()), xg(B, backbone->channels());
        for (Eigen::Index i = 0; i < B; ++i) {
          xp.row(i) = batch[static_cast<std::size_t>(i)]->pooled.transpose();
          xg.row(i) = batch[static_cast<std::size_t>(i)]->gwapv.transpose();
        }
        const nn::RowMat<T> xc = c1_maps(batch);
        nn::RowMat<T> pre_d = stream_drc.forward(xp);
        nn::RowMat<T> pre_g = stream_gwap.forward(xg);
        nn::RowMat<T> pre_c = stream_ccpp.forward(xc);
        nn::RowMat<T> a_d = pre_d, a_g = pre_g, a_c = pre_c;
        nn::act_inplace(a_d, act());
        nn::act_inplace(a_g, act());
        nn::act_inplace(a_c, act());
        // the concatenated 1536-wide fused layer feeds the regression
        // pipeline, which applies the usual dropout between its FCs
        nn::RowMat<T> concat(B, 1536);  // 3 x 512 streams
        concat.block(0, 0, B, 512) = a_d;
        concat.block(0, 512, B, 512) = a_g;
        concat.block(0, 1024, B, 512) = a_c;
        if (ctx) {
          ctx->xp = std::move(xp);
          ctx->xg = std::move(xg);
          ctx->xc = xc;
          ctx->pre_d = std::move(pre_d);
          ctx->pre_g = std::move(pre_g);
          ctx->pre_c = std::move(pre_c);
          ctx->a_d = std::move(a_d);
          ctx->a_g = std::move(a_g);
          ctx->a_c = std::move(a_c);
        }
        return fusion_pipe.forward(concat, ctx ? &ctx->fusion_ctx : nullptr, drop_rng);
      }
    }
    throw Error("unreachable");
  }

  void backward_batch(const nn::VecX<T>& dpred, CountForwardCtx<T>& ctx) {
    switch (kind) {
      case CountKind::Drc:
      case CountKind::Gwap:
        pipe.backward(dpred, ctx.pipe_ctx);
        return;
      case CountKind::Ccpp: {
        const nn::RowMat<T> dmaps = pipe.backward(dpred, ctx.pipe_ctx);
        c1_backward(dmaps, ctx.batch);
        return;
      }
      case CountKind::Fusion: {
        const nn::RowMat<T> dconcat = fusion_pipe.backward(dpred, ctx.fusion_ctx);
        const auto B = dconcat.rows();
        nn::RowMat<T> dd = dconcat.block(0, 0, B, 512);
        nn::RowMat<T> dg = dconcat.block(0, 512, B, 512);
        nn::RowMat<T> dc = dconcat.block(0, 1024, B, 512);
        dd = nn::act_backward(dd, ctx.pre_d, act());
        dg = nn::act_backward(dg, ctx.pre_g, act());
        dc = nn::act_backward(dc, ctx.pre_c, act());
        stream_drc.backward(ctx.xp, dd);
        stream_gwap.backward(ctx.xg, dg);
        const nn::RowMat<T> dmaps = stream_ccpp.backward(ctx.xc, dc);
        c1_backward(dmaps, ctx.batch);
        return;
      }
    }
  }

  // Inference on a tile: resize, extract, head forward. Deterministic.
  double forward(const ImageTile& tile, bool train_mode = false) const {
    require_or<ConfigError>(!train_mode, "use train_counter for training-mode passes");
    const Image8 px = resize_rgb(tile.pixels, image_size, image_size);
    const HeadInputs<T> hi = head_inputs(px);
    const std::vector<const HeadInputs<T>*> one{&hi};
    return static_cast<double>(forward_batch(one)[0]);
  }

  struct Prediction {
    double raw;
    long rounded;  // max(0, round(raw))
  };

  Prediction predict(const ImageTile& tile) const {
    const double raw = forward(tile);
    return {raw, std::max(0L, std::lround(raw))};
  }

  std::vector<nn::ParamTensor<T>*> params() {
    std::vector<nn::ParamTensor<T>*> out;
    switch (kind) {
      case CountKind::Drc:
      case CountKind::Gwap:
        return pipe.params();
      case CountKind::Ccpp: {
        out = pipe.params();
        out.push_back(&c1_w);
        out.push_back(&c1_b);
        return out;
      }
      case CountKind::Fusion: {
        out = fusion_pipe.params();
        for (auto* l : {&stream_drc, &stream_gwap, &stream_ccpp}) {
          out.push_back(&l->w);
          out.push_back(&l->b);
        }
        out.push_back(&c1_w);
        out.push_back(&c1_b);
        return out;
      }
    }
    return out;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    ck.kind = "counter";
    ck.meta["model_kind"] = kind_name(kind);
    ck.meta["backbone"] = backbone->descriptor();
    ck.meta["image_size"] = image_size;
    ck.meta["dropout"] = static_cast<double>(dropout);
    ck.meta["train_log"] = train_log;
    for (const auto* p : const_cast<CountModel*>(this)->params()) ck.add_param(*p);
    if (ssnet) {
      ck.meta["ssnet"] = ssnet->to_checkpoint().meta;
      ck.meta["ssnet_source"] = ssnet_source.empty() ? "embedded" : ssnet_source;
      for (const auto* p : ssnet->params()) ck.add_param(*p, "ssnet/");
    }
    return ck;
  }

  static CountModel from_checkpoint(const Checkpoint& ck,
                                    std::shared_ptr<const Backbone> backbone_override = nullptr) {
    require_or<ParseError>(ck.kind == "counter", "checkpoint kind is not counter");
    const CountKind kind = parse_kind(ck.meta.at("model_kind"));
    auto backbone = backbone_override ? std::move(backbone_override)
                                      : std::shared_ptr<const Backbone>(make_backbone(ck.meta.at("backbone")));
    std::optional<SsNet<float>> ssnet;
    if (ck.meta.contains("ssnet")) {
      SsNet<float> net;
      net.cfg = SsNetConfig::from_json(ck.meta.at("ssnet").at("config"));
      // rebuild then overwrite with stored tensors
      net = SsNet<float>::random_init(net.cfg, 0);
      const auto mean = ck.meta.at("ssnet").at("train_mean").get<std::vector<double>>();
      for (int i = 0; i < 3; ++i) net.train_mean[static_cast<std::size_t>(i)] = static_cast<float>(mean[static_cast<std::size_t>(i)]);
      for (auto* p : net.params()) ck.load_param(*p, "ssnet/");
      ssnet = std::move(net);
    }
    CountModel m = create(kind, std::move(backbone), std::move(ssnet), 0,
                          ck.meta.value("image_size", 336), ck.meta.value("dropout", 0.6));
    m.train_log = ck.meta.value("train_log", nlohmann::json::object());
    m.ssnet_source = ck.meta.value("ssnet_source", "");
    for (auto* p : m.params()) ck.load_param(*p);
    return m;
  }

 private:
  void build(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0xc0));
    const int C = backbone->channels();
    const int hw = grid_cells();
    switch (kind) {
      case CountKind::Drc:
        pipe.init(C, nn::Act::Relu, dropout, rng, "pipe");
        break;
      case CountKind::Gwap:
        pipe.init(C, nn::Act::Leaky03, dropout, rng, "pipe");
        break;
      case CountKind::Ccpp:
        init_c1(C, rng);
        pipe.init(hw, nn::Act::Leaky03, dropout, rng, "pipe");
        break;
      case CountKind::Fusion: {
        init_c1(C, rng);
        stream_drc.init(C, 512, "stream_drc");
        stream_gwap.init(C, 512, "stream_gwap");
        stream_ccpp.init(hw, 512, "stream_ccpp");
        stream_drc.init_he(rng);
        stream_gwap.init_he(rng);
        stream_ccpp.init_he(rng);
        fusion_pipe.init(1536, nn::Act::Leaky03, dropout, rng, "fusion");
        break;
      }
    }
  }

  void init_c1(int C, Rng& rng) {
    c1_w.resize({C}, "c1.w");
    c1_b.resize({1}, "c1.b");
    const double stddev = std::sqrt(2.0 / C);
    for (auto& v : c1_w.value) v = static_cast<T>(rng.gaussian(0.0, stddev));
  }

  // Row-major flattened C1 activation maps for a batch.
  nn::RowMat<T> c1_maps(const std::vector<const HeadInputs<T>*>& batch) const {
    const auto B = static_cast<Eigen::Index>(batch.size());
    nn::RowMat<T> maps(B, grid_cells());
    for (Eigen::Index i = 0; i < B; ++i) {
      const Vol<T>& wv = batch[static_cast<std::size_t>(i)]->wvol;
      require_or<ShapeError>(static_cast<int>(wv.plane()) == grid_cells(), "ccpp: unexpected grid size");
      const Mat<T> m = ccpp(wv, c1_w.value, c1_b.value[0]);
      for (int j = 0; j < static_cast<int>(m.size()); ++j) maps(i, j) = m.v[static_cast<std::size_t>(j)];
    }
    return maps;
  }

  void c1_backward(const nn::RowMat<T>& dmaps, const std::vector<const HeadInputs<T>*>& batch) {
    for (Eigen::Index i = 0; i < dmaps.rows(); ++i) {
      const Vol<T>& wv = batch[static_cast<std::size_t>(i)]->wvol;
      Mat<T> dm(wv.h, wv.w);
      for (std::size_t j = 0; j < dm.size(); ++j) dm.v[j] = dmaps(i, static_cast<Eigen::Index>(j));
      std::vector<T> dw;
      T dbias = 0;
      ccpp_backward(dm, wv, c1_w.value, static_cast<Vol<T>*>(nullptr), &dw, &dbias);
      for (std::size_t j = 0; j < dw.size(); ++j) c1_w.grad[j] += dw[j];
      c1_b.grad[0] += dbias;
    }
  }
};

}  // namespace bsc
