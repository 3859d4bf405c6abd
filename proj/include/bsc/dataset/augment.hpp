#pragma once

#include <vector>

#include "bsc/image.hpp"
#include "bsc/image_ops.hpp"

namespace bsc {

namespace detail {
inline ImageTile transformed(const ImageTile& t, Image8 (*op)(const Image8&), const char* suffix) {
  ImageTile out = t;
  out.id = t.id + suffix;
  out.pixels = op(t.pixels);
  if (t.mask) out.mask = op(*t.mask);
  return out;
}
}  // namespace detail

// Counting-set augmentation: original, horizontal flip, vertical flip, and
// the two square rotations. Count labels are invariant under all four
// isometries; masks receive the identical transform.
inline std::vector<ImageTile> augment_counting(const ImageTile& tile) {
  require_or<ShapeError>(!tile.pixels.empty(), "augment_counting: tile has no pixels");
  std::vector<ImageTile> out;
  out.reserve(5);
  out.push_back(tile);
  out.push_back(detail::transformed(tile, &flip_h, "_fh"));
  out.push_back(detail::transformed(tile, &flip_v, "_fv"));
  out.push_back(detail::transformed(tile, &rot90, "_r90"));
  out.push_back(detail::transformed(tile, &rot270, "_r270"));
  return out;
}

// Segmenter patch augmentation: original, both flips, and +/-45 degree
// rotations. The diagonal rotations keep the patch size and fill exposed
// corners by edge reflection so the segmenter never sees a synthetic black
// wedge. Patch-level built/non-built labels are preserved.
inline std::vector<ImageTile> augment_patch(const ImageTile& patch) {
  require_or<DomainError>(patch.pixels.h == patch.pixels.w, "augment_patch: square patch required");
  std::vector<ImageTile> out;
  out.reserve(5);
  out.push_back(patch);
  out.push_back(detail::transformed(patch, &flip_h, "_fh"));
  out.push_back(detail::transformed(patch, &flip_v, "_fv"));
  for (const double deg : {45.0, 315.0}) {
    ImageTile r = patch;
    r.id = patch.id + (deg == 45.0 ? "_r45" : "_r315");
    r.pixels = rotate_bilinear(patch.pixels, deg);
    if (patch.mask) r.mask = rotate_nearest(*patch.mask, deg);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace bsc
