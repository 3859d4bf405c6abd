#pragma once

#include <vector>

#include "bsc/dataset/manifest.hpp"
#include "bsc/image.hpp"
#include "bsc/image_ops.hpp"
#include "bsc/rng.hpp"

namespace bsc {

// 64x64 training patch with a binary built/non-built label.
struct PatchSample {
  Image8 rgb;
  int label = 0;  // 1 = built
};

namespace detail {
inline double mask_fraction(const Image8& mask, int y0, int x0, int size) {
  std::size_t built = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if (mask.at(y0 + y, x0 + x) >= 128) ++built;
  return static_cast<double>(built) / (static_cast<double>(size) * size);
}
}  // namespace detail

// Random labeled crops from a mask-carrying tile. Positives must contain at
// least `pos_min_frac` built pixels; negatives must contain none. Ambiguous
// crops are skipped so the labels stay clean.
inline std::vector<PatchSample> sample_labeled_patches(const ImageTile& tile, int n_pos, int n_neg, int size,
                                                       Rng& rng, double pos_min_frac = 0.10) {
  require_or<DomainError>(tile.mask.has_value(), "sample_labeled_patches: tile has no mask");
  require_or<ShapeError>(tile.pixels.h >= size && tile.pixels.w >= size,
                         "sample_labeled_patches: tile smaller than patch");
  std::vector<PatchSample> out;
  int got_pos = 0, got_neg = 0;
  const int max_attempts = 200 * (n_pos + n_neg + 1);
  for (int attempt = 0; attempt < max_attempts && (got_pos < n_pos || got_neg < n_neg); ++attempt) {
    const int y0 = static_cast<int>(rng.uniform_int(0, tile.pixels.h - size));
    const int x0 = static_cast<int>(rng.uniform_int(0, tile.pixels.w - size));
    const double frac = detail::mask_fraction(*tile.mask, y0, x0, size);
    if (frac >= pos_min_frac && got_pos < n_pos) {
      out.push_back({crop(tile.pixels, y0, x0, size, size), 1});
      ++got_pos;
    } else if (frac == 0.0 && got_neg < n_neg) {
      out.push_back({crop(tile.pixels, y0, x0, size, size), 0});
      ++got_neg;
    }
  }
  return out;
}

// Larger crop with one label per stride-8 head location: 1 built,
// 0 non-built, -1 ambiguous (ignored by the loss). Training on these
// alongside 64x64 patches shows the head real surrounding context instead
// of patch-boundary padding only.
struct ContextSample {
  Image8 rgb;
  Mat<std::int8_t> labels;
};

inline Mat<std::int8_t> context_labels(const Image8& mask, int y0, int x0, int size, int patch,
                                       double pos_min_frac) {
  const int grid = (size - patch) / 8 + 1;
  Mat<std::int8_t> labels(grid, grid);
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      const double frac = detail::mask_fraction(mask, y0 + i * 8, x0 + j * 8, patch);
      labels.at(i, j) = frac >= pos_min_frac ? 1 : (frac == 0.0 ? 0 : -1);
    }
  return labels;
}

inline std::vector<ContextSample> sample_context_crops(const ImageTile& tile, int n, int size, Rng& rng,
                                                       double pos_min_frac = 0.10, int patch = 64) {
  require_or<DomainError>(tile.mask.has_value(), "sample_context_crops: tile has no mask");
  std::vector<ContextSample> out;
  if (tile.pixels.h < size || tile.pixels.w < size) return out;
  for (int k = 0; k < n; ++k) {
    const int y0 = static_cast<int>(rng.uniform_int(0, tile.pixels.h - size));
    const int x0 = static_cast<int>(rng.uniform_int(0, tile.pixels.w - size));
    ContextSample cs;
    cs.rgb = crop(tile.pixels, y0, x0, size, size);
    cs.labels = context_labels(*tile.mask, y0, x0, size, patch, pos_min_frac);
    bool usable = false;
    for (const auto l : cs.labels.v) usable = usable || l >= 0;
    if (usable) out.push_back(std::move(cs));
  }
  return out;
}

// Crops that are non-built by construction (zero mask overlap); used as
// mining candidates and held-out negative pools.
inline std::vector<Image8> sample_negative_crops(const ImageTile& tile, int n, int size, Rng& rng) {
  require_or<DomainError>(tile.mask.has_value(), "sample_negative_crops: tile has no mask");
  std::vector<Image8> out;
  const int max_attempts = 400 * (n + 1);
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(out.size()) < n; ++attempt) {
    if (tile.pixels.h < size || tile.pixels.w < size) break;
    const int y0 = static_cast<int>(rng.uniform_int(0, tile.pixels.h - size));
    const int x0 = static_cast<int>(rng.uniform_int(0, tile.pixels.w - size));
    if (detail::mask_fraction(*tile.mask, y0, x0, size) == 0.0) out.push_back(crop(tile.pixels, y0, x0, size, size));
  }
  return out;
}

inline std::vector<ContextSample> build_context_set(const Manifest& m, int per_tile, int size,
                                                    std::uint64_t seed) {
  std::vector<ContextSample> out;
  std::uint64_t idx = 0;
  for (const auto& e : m.entries) {
    if (!e.mask_path) {
      ++idx;
      continue;
    }
    const ImageTile tile = load_tile(m, e);
    Rng rng(derive_seed(seed, 0xcc00 + idx++));
    auto crops = sample_context_crops(tile, per_tile, size, rng);
    out.insert(out.end(), std::make_move_iterator(crops.begin()), std::make_move_iterator(crops.end()));
  }
  return out;
}

// Patch set assembly over every mask-carrying entry of a manifest (callers
// pre-filter by split).
inline std::vector<PatchSample> build_patch_set(const Manifest& m, int pos_per_tile, int neg_per_tile,
                                                int size, std::uint64_t seed) {
  std::vector<PatchSample> out;
  std::uint64_t idx = 0;
  for (const auto& e : m.entries) {
    if (!e.mask_path) {
      ++idx;
      continue;
    }
    const ImageTile tile = load_tile(m, e);
    Rng rng(derive_seed(seed, idx++));
    auto batch = sample_labeled_patches(tile, pos_per_tile, neg_per_tile, size, rng);
    out.insert(out.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
  }
  return out;
}

}  // namespace bsc
