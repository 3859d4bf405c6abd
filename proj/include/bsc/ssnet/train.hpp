#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "bsc/dataset/augment.hpp"
#include "bsc/nn/optim.hpp"
#include "bsc/ssnet/patches.hpp"
#include "bsc/ssnet/ssnet.hpp"

namespace bsc {

// Bootstrap hard-negative mining bookkeeping. The pool only grows; entries
// are crops whose true label is non-built but which the model scored as
// built at mining time.
struct MiningState {
  int epoch_counter = 0;
  int mining_interval = 15;
  std::vector<Image8> negative_pool;
  std::vector<int> round_epochs;  // epochs at which a round fired
  std::vector<std::string> notes;
};

struct SsNetTrainConfig {
  SsNetConfig arch;
  int epochs = 30;
  int batch = 16;
  double lr = 1e-5;  // SGD; the published operating point
  std::uint64_t seed = 0;
  int mining_interval = 15;
  bool augment = true;
  std::optional<std::string> init_from;  // checkpoint with pretrained trunk weights
};

template <typename T>
struct SsNetTrainHooks {
  // epoch number (1-based) and mean training loss
  std::function<void(int, double)> on_epoch;
  // called just before and just after each mining round
  std::function<void(const SsNet<T>&, const MiningState&, int epoch, bool before)> on_mining;
};

struct SsNetTrainResult {
  std::vector<double> epoch_loss;
  std::vector<std::string> warnings;
  MiningState mining;
};

// Scores unlabeled-negative candidates and appends every false positive
// (max built probability > 0.5 anywhere on the candidate's grid) to the
// negative pool as a patch-sized crop anchored at the offending location.
// Returns the number of crops added.
template <typename T>
std::size_t mine_hard_negatives(const SsNet<T>& net, const std::vector<Image8>& candidates,
                                MiningState& state) {
  if (candidates.empty()) {
    state.notes.push_back("mining round skipped: empty candidate pool");
    return 0;
  }
  const int patch = net.cfg.patch;
  std::size_t added = 0;
  for (const auto& cand : candidates) {
    require_or<ShapeError>(cand.h >= patch && cand.w >= patch, "mining candidate smaller than a patch");
    int by = 0, bx = 0;
    const T p = net.built_prob_max(cand, &by, &bx);
    if (p > T(0.5)) {
      // stride-8 anchor of the worst grid cell, clamped to fit
      const int y0 = std::min(by * 8, cand.h - patch);
      const int x0 = std::min(bx * 8, cand.w - patch);
      state.negative_pool.push_back(crop(cand, std::max(0, y0), std::max(0, x0), patch, patch));
      ++added;
    }
  }
  return added;
}

// Fraction of candidates the net currently scores as built.
template <typename T>
double false_positive_rate(const SsNet<T>& net, const std::vector<Image8>& negatives) {
  if (negatives.empty()) return 0.0;
  std::size_t fp = 0;
  for (const auto& img : negatives)
    if (net.built_prob_max(img) > T(0.5)) ++fp;
  return static_cast<double>(fp) / static_cast<double>(negatives.size());
}

namespace detail {

template <typename T>
std::vector<PatchSample> expand_patch(const PatchSample& p, bool augment) {
  if (!augment) return {p};
  ImageTile t;
  t.pixels = p.rgb;
  std::vector<PatchSample> out;
  for (const auto& a : augment_patch(t)) out.push_back({a.pixels, p.label});
  return out;
}

}  // namespace detail

// Patch-based segmenter training: per-location 2-class cross-entropy,
// SGD, each training patch expanded by augment_patch. When a mining
// candidate pool is supplied, a bootstrap round fires after every
// `mining_interval` epochs and the mined crops join every later epoch.
// Optional 128px context crops train the same head at interior grid
// locations, which keeps patch-mode and fully convolutional inference
// consistent.
template <typename T>
SsNetTrainResult train_ssnet(SsNet<T>& net, const std::vector<PatchSample>& base_patches,
                             const SsNetTrainConfig& cfg,
                             const std::vector<Image8>& mining_candidates = {},
                             const SsNetTrainHooks<T>& hooks = {},
                             const std::vector<ContextSample>& context_crops = {}) {
  require_or<Error>(!base_patches.empty(), "train_ssnet: empty patch stream");
  SsNetTrainResult res;
  res.mining.mining_interval = cfg.mining_interval;

  bool has_pos = false, has_neg = false;
  for (const auto& p : base_patches) {
    require_or<ShapeError>(p.rgb.h == cfg.arch.patch && p.rgb.w == cfg.arch.patch,
                           "train_ssnet: patch is not " + std::to_string(cfg.arch.patch) + "x" +
                               std::to_string(cfg.arch.patch));
    (p.label ? has_pos : has_neg) = true;
  }
  if (!(has_pos && has_neg))
    res.warnings.push_back("degenerate training: patch stream contains a single class only");

  // training-set mean, in [0,1] scale
  double mean[3] = {0, 0, 0};
  std::size_t npx = 0;
  for (const auto& p : base_patches) {
    for (int y = 0; y < p.rgb.h; ++y)
      for (int x = 0; x < p.rgb.w; ++x)
        for (int c = 0; c < 3; ++c) mean[c] += p.rgb.at(y, x, c) / 255.0;
    npx += static_cast<std::size_t>(p.rgb.h) * p.rgb.w;
  }
  for (int c = 0; c < 3; ++c) net.train_mean[static_cast<std::size_t>(c)] = static_cast<T>(mean[c] / static_cast<double>(npx));

  if (cfg.init_from) {
    const Checkpoint ck = Checkpoint::load(*cfg.init_from);
    for (auto* p : net.params())
      if (ck.has(p->name)) ck.load_param(*p);
  }

  std::vector<PatchSample> train_set;
  for (const auto& p : base_patches) {
    auto e = detail::expand_patch<T>(p, cfg.augment);
    train_set.insert(train_set.end(), std::make_move_iterator(e.begin()), std::make_move_iterator(e.end()));
  }
  std::size_t mined_expanded = 0;  // how many pool entries are already in train_set

  // items index both the 64px patch set and the context crops
  struct Item {
    bool is_context;
    std::size_t idx;
  };
  std::vector<Item> items;
  for (std::size_t i = 0; i < context_crops.size(); ++i) items.push_back({true, i});

  nn::Sgd<T> opt;
  opt.lr = cfg.lr;
  auto params = net.params();
  auto ctx = net.make_ctx();
  Rng shuffle_rng(derive_seed(cfg.seed, 0x7a1));

  std::vector<std::size_t> order;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    res.mining.epoch_counter = epoch;
    // merge crops mined in earlier rounds
    for (; mined_expanded < res.mining.negative_pool.size(); ++mined_expanded) {
      auto e = detail::expand_patch<T>({res.mining.negative_pool[mined_expanded], 0}, cfg.augment);
      train_set.insert(train_set.end(), std::make_move_iterator(e.begin()), std::make_move_iterator(e.end()));
    }
    while (items.size() < context_crops.size() + train_set.size())
      items.push_back({false, items.size() - context_crops.size()});
    if (order.size() != items.size()) {
      order.resize(items.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    }
    shuffle_rng.shuffle(order);

    double epoch_loss = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const T inv = T(1) / static_cast<T>(end - start);
      nn::zero_grads(params);
      double batch_loss = 0;
      for (std::size_t i = start; i < end; ++i) {
        const Item item = items[order[i]];
        const Image8& rgb = item.is_context ? context_crops[item.idx].rgb : train_set[item.idx].rgb;
        const Vol<T> x = net.normalize(rgb);
        const Vol<T> logits = net.native_logits(x, &ctx);
        const Vol<T> prob = nn::softmax_pair(logits);
        // cross-entropy at each supervised head location
        Vol<T> dlogits(2, logits.h, logits.w);
        const std::size_t plane = logits.plane();
        std::size_t supervised = 0;
        auto label_at = [&](std::size_t j) -> int {
          if (!item.is_context) return train_set[item.idx].label;
          return context_crops[item.idx].labels.v[j];
        };
        if (item.is_context)
          require_or<ShapeError>(context_crops[item.idx].labels.size() == plane,
                                 "train_ssnet: context label grid does not match the head grid");
        for (std::size_t j = 0; j < plane; ++j)
          if (label_at(j) >= 0) ++supervised;
        if (supervised == 0) continue;
        const T loc_inv = inv / static_cast<T>(supervised);
        for (std::size_t j = 0; j < plane; ++j) {
          const int label = label_at(j);
          if (label < 0) {
            dlogits.plane_ptr(0)[j] = 0;
            dlogits.plane_ptr(1)[j] = 0;
            continue;
          }
          const T p1 = prob.plane_ptr(1)[j];
          const T p_true = label ? p1 : (T(1) - p1);
          batch_loss -= std::log(std::max(p_true, T(1e-12))) / static_cast<double>(supervised);
          dlogits.plane_ptr(0)[j] = (prob.plane_ptr(0)[j] - (label ? T(0) : T(1))) * loc_inv;
          dlogits.plane_ptr(1)[j] = (p1 - (label ? T(1) : T(0))) * loc_inv;
        }
        net.backward(dlogits, ctx);
      }
      opt.step(params);
      epoch_loss += batch_loss / static_cast<double>(end - start);
      ++batches;
    }
    epoch_loss /= static_cast<double>(std::max<std::size_t>(1, batches));
    require_or<Error>(std::isfinite(epoch_loss), "train_ssnet: non-finite loss at epoch " + std::to_string(epoch));
    res.epoch_loss.push_back(epoch_loss);
    if (hooks.on_epoch) hooks.on_epoch(epoch, epoch_loss);

    if (!mining_candidates.empty() && cfg.mining_interval > 0 && epoch % cfg.mining_interval == 0) {
      if (hooks.on_mining) hooks.on_mining(net, res.mining, epoch, true);
      mine_hard_negatives(net, mining_candidates, res.mining);
      res.mining.round_epochs.push_back(epoch);
      if (hooks.on_mining) hooks.on_mining(net, res.mining, epoch, false);
    }
  }
  return res;
}

}  // namespace bsc
