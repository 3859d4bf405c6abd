#pragma once

#include <atomic>
#include <mutex>
#include <cmath>
#include <thread>
#include <vector>

#include "bsc/dataset/augment.hpp"
#include "bsc/dataset/manifest.hpp"
#include "bsc/heads/model.hpp"
#include "bsc/nn/optim.hpp"

namespace bsc {

struct CounterTrainConfig {
  int epochs = 60;
  int batch = 16;
  double lr = 1e-4;  // adaptive moment estimation
  int patience = 10;  // early stopping on validation MAE; <= 0 disables
  std::uint64_t seed = 0;
  int workers = 2;
  bool augment = true;

  nlohmann::json to_json() const {
    return {{"epochs", epochs},   {"batch", batch},     {"lr", lr},
            {"patience", patience}, {"seed", seed},     {"workers", workers},
            {"augment", augment}};
  }
};

template <typename T>
struct CounterTrainResult {
  std::vector<double> train_loss, val_loss, val_mae;
  int best_epoch = -1;  // 1-based; -1 when no validation set was given
  nn::Adam<T> optimizer;
};

// Precomputed (input, truth) pairs; the backbone and segmenter are frozen,
// so every epoch reuses these. A dataset computed by an attention model
// carries every field and can be shared across all four head kinds.
template <typename T>
struct HeadDataset {
  std::vector<HeadInputs<T>> inputs;
  std::vector<T> truths;
};

template <typename T>
HeadDataset<T> precompute_head_inputs(const CountModel<T>& model, const Manifest& m, bool augment,
                                      int workers) {
  // parallel over tiles; each worker loads a tile once and extracts its
  // (possibly augmented) variants, so pixel data never accumulates
  const int per_tile = augment ? 5 : 1;
  HeadDataset<T> ds;
  ds.inputs.resize(m.entries.size() * static_cast<std::size_t>(per_tile));
  ds.truths.resize(ds.inputs.size());
  std::atomic<std::size_t> cursor{0};
  std::atomic<bool> failed{false};
  std::string error_msg;
  std::mutex error_mu;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= m.entries.size() || failed.load()) return;
      try {
        ImageTile tile = load_tile(m, m.entries[i]);
        tile.mask.reset();  // masks are segmenter training data, not needed here
        if (tile.pixels.h != model.image_size || tile.pixels.w != model.image_size)
          tile.pixels = resize_rgb(tile.pixels, model.image_size, model.image_size);
        if (augment) {
          const auto variants = augment_counting(tile);
          for (std::size_t a = 0; a < variants.size(); ++a) {
            ds.inputs[i * 5 + a] = model.head_inputs(variants[a].pixels);
            ds.truths[i * 5 + a] = static_cast<T>(tile.count);
          }
        } else {
          ds.inputs[i] = model.head_inputs(tile.pixels);
          ds.truths[i] = static_cast<T>(tile.count);
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mu);
        failed = true;
        error_msg = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  require_or<Error>(!failed.load(), "feature extraction failed: " + error_msg);
  return ds;
}

namespace detail {

// Loss over a batch of raw predictions. DRC trains on mean squared error;
// the attention heads train on the batch root mean squared error.
template <typename T>
double count_loss(CountKind kind, const nn::VecX<T>& pred, const nn::VecX<T>& truth, nn::VecX<T>* dpred) {
  const auto B = pred.size();
  const nn::VecX<T> err = pred - truth;
  const double mse = static_cast<double>(err.squaredNorm()) / static_cast<double>(B);
  if (kind == CountKind::Drc) {
    if (dpred) *dpred = err * (T(2) / static_cast<T>(B));
    return mse;
  }
  const double rmse = std::sqrt(mse);
  if (dpred) {
    if (rmse > 0) {
      *dpred = err / (static_cast<T>(B) * static_cast<T>(rmse));
    } else {
      dpred->setZero(B);
    }
  }
  return rmse;
}

template <typename T>
nn::VecX<T> predict_all(const CountModel<T>& model, const HeadDataset<T>& ds, int batch) {
  nn::VecX<T> out(static_cast<Eigen::Index>(ds.inputs.size()));
  for (std::size_t start = 0; start < ds.inputs.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(ds.inputs.size(), start + static_cast<std::size_t>(batch));
    std::vector<const HeadInputs<T>*> ptrs;
    ptrs.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&ds.inputs[i]);
    const nn::VecX<T> pred = model.forward_batch(ptrs);
    for (std::size_t i = start; i < end; ++i) out[static_cast<Eigen::Index>(i)] = pred[static_cast<Eigen::Index>(i - start)];
  }
  return out;
}

}  // namespace detail

// Core training loop over already-extracted features. The heads never see
// pixels; the backbone and segmenter stay frozen by construction.
template <typename T>
CounterTrainResult<T> train_counter_on(CountModel<T>& model, const HeadDataset<T>& train_ds,
                                       const HeadDataset<T>& val_ds, const CounterTrainConfig& cfg) {
  require_or<Error>(!train_ds.inputs.empty(), "train_counter: empty training set");
  CounterTrainResult<T> res;
  res.optimizer.lr = cfg.lr;
  auto params = model.params();

  Rng shuffle_rng(derive_seed(cfg.seed, 0x5f1));
  Rng drop_rng(derive_seed(cfg.seed, 0x5f2));

  std::vector<std::size_t> order(train_ds.inputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_mae = std::numeric_limits<double>::infinity();
  std::vector<std::vector<T>> best_params;
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      std::vector<const HeadInputs<T>*> ptrs;
      nn::VecX<T> truth(static_cast<Eigen::Index>(end - start));
      ptrs.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        ptrs.push_back(&train_ds.inputs[order[i]]);
        truth[static_cast<Eigen::Index>(i - start)] = train_ds.truths[order[i]];
      }
      CountForwardCtx<T> ctx;
      ctx.train = true;
      nn::zero_grads(params);
      const nn::VecX<T> pred = model.forward_batch(ptrs, &ctx, &drop_rng);
      nn::VecX<T> dpred;
      const double loss = detail::count_loss(model.kind, pred, truth, &dpred);
      require_or<Error>(std::isfinite(loss),
                        "train_counter: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches) + " (pred[0]=" + std::to_string(static_cast<double>(pred[0])) +
                            ")");
      model.backward_batch(dpred, ctx);
      res.optimizer.step(params);
      epoch_loss += loss;
      ++batches;
    }
    res.train_loss.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(1, batches)));

    if (!val_ds.inputs.empty()) {
      const nn::VecX<T> vp = detail::predict_all(model, val_ds, cfg.batch);
      nn::VecX<T> vt(static_cast<Eigen::Index>(val_ds.truths.size()));
      for (std::size_t i = 0; i < val_ds.truths.size(); ++i) vt[static_cast<Eigen::Index>(i)] = val_ds.truths[i];
      res.val_loss.push_back(detail::count_loss(model.kind, vp, vt, static_cast<nn::VecX<T>*>(nullptr)));
      const double mae = static_cast<double>((vp - vt).cwiseAbs().mean());
      res.val_mae.push_back(mae);
      if (mae < best_mae - 1e-12) {
        best_mae = mae;
        res.best_epoch = epoch;
        since_best = 0;
        best_params.clear();
        for (const auto* p : params) best_params.push_back(p->value);
      } else {
        ++since_best;
        if (cfg.patience > 0 && since_best >= cfg.patience) break;
      }
    }
  }

  if (!best_params.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
  }

  model.train_log = {{"config", cfg.to_json()},
                     {"train_loss", res.train_loss},
                     {"val_loss", res.val_loss},
                     {"val_mae", res.val_mae},
                     {"best_epoch", res.best_epoch},
                     {"train_samples", train_ds.inputs.size()},
                     {"val_samples", val_ds.inputs.size()}};
  return res;
}

// Trains a counting head from manifests. Counting inputs are NOT
// mean-normalized; the training set is grown five-fold by augment_counting.
// Returns per-epoch train/val loss; restores the best-validation-MAE
// weights when a validation set and patience are given.
template <typename T>
CounterTrainResult<T> train_counter(CountModel<T>& model, const Manifest& train, const Manifest& val,
                                    const CounterTrainConfig& cfg) {
  require_or<Error>(!train.entries.empty(), "train_counter: empty training manifest");
  const auto train_ds = precompute_head_inputs(model, train, cfg.augment, cfg.workers);
  const auto val_ds = precompute_head_inputs(model, val, false, cfg.workers);
  return train_counter_on(model, train_ds, val_ds, cfg);
}

// Initializes a fusion model's streams from separately trained standalone
// heads: each stream takes the donor pipeline's first (512-unit) layer, and
// the ccpp donor also contributes its 1x1 projection.
template <typename T>
void warm_start_fusion(CountModel<T>& fusion, const CountModel<T>* drc, const CountModel<T>* gwap,
                       const CountModel<T>* ccpp) {
  require_or<ConfigError>(fusion.kind == CountKind::Fusion, "warm_start_fusion: model is not fusion");
  auto copy_stream = [](const CountModel<T>& donor, nn::Linear<T>& stream) {
    require_or<ConfigError>(donor.pipe.fc1.in == stream.in, "warm_start_fusion: stream width mismatch");
    stream.w.value = donor.pipe.fc1.w.value;
    stream.b.value = donor.pipe.fc1.b.value;
  };
  if (drc) copy_stream(*drc, fusion.stream_drc);
  if (gwap) copy_stream(*gwap, fusion.stream_gwap);
  if (ccpp) {
    copy_stream(*ccpp, fusion.stream_ccpp);
    fusion.c1_w.value = ccpp->c1_w.value;
    fusion.c1_b.value = ccpp->c1_b.value;
  }
}

// Raw-prediction MAE of a model over a precomputed dataset.
template <typename T>
double dataset_mae(const CountModel<T>& model, const HeadDataset<T>& ds, int batch = 64) {
  require_or<Error>(!ds.inputs.empty(), "dataset_mae: empty dataset");
  const nn::VecX<T> pred = detail::predict_all(model, ds, batch);
  double mae = 0;
  for (std::size_t i = 0; i < ds.truths.size(); ++i)
    mae += std::abs(static_cast<double>(pred[static_cast<Eigen::Index>(i)]) - static_cast<double>(ds.truths[i]));
  return mae / static_cast<double>(ds.truths.size());
}

// Records the optimizer state alongside a saved model so a run can be
// inspected or resumed from its container.
template <typename T>
inline void append_optimizer_state(Checkpoint& ck, const nn::Adam<T>& opt) {
  ck.meta["optimizer"] = {{"type", "adam"}, {"lr", opt.lr}, {"beta1", opt.beta1},
                          {"beta2", opt.beta2}, {"eps", opt.eps}, {"t", opt.t}};
  for (const auto& [name, mv] : opt.moments) {
    ck.add("opt/" + name + ".m", {static_cast<int>(mv.first.size())},
           std::vector<double>(mv.first.begin(), mv.first.end()));
    ck.add("opt/" + name + ".v", {static_cast<int>(mv.second.size())},
           std::vector<double>(mv.second.begin(), mv.second.end()));
  }
}

}  // namespace bsc
