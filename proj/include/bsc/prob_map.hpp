#pragma once

#include "bsc/common.hpp"
#include "bsc/tensor.hpp"

namespace bsc {

// Per-pixel built-structure probability produced by the segmenter.
// `values` is upsampled to the query image size; `native` keeps the raw
// two-channel head output (channel 1 = built) at the stride-8 grid.
struct ProbabilityMap {
  Mat<float> values;
  Vol<float> native;

  void validate() const {
    for (const float p : values.v)
      require_or<DomainError>(p >= 0.f && p <= 1.f, "probability map value outside [0,1]");
    if (native.c == 2) {
      for (int y = 0; y < native.h; ++y)
        for (int x = 0; x < native.w; ++x) {
          const float s = native.at(0, y, x) + native.at(1, y, x);
          require_or<DomainError>(s > 1.f - 1e-5f && s < 1.f + 1e-5f,
                                  "native probability pair does not sum to 1");
        }
    }
  }
};

// Fraction of pixels with built probability >= threshold.
inline double built_up_ratio(const ProbabilityMap& pm, double threshold = 0.5) {
  require_or<DomainError>(threshold >= 0.0 && threshold <= 1.0, "built_up_ratio: threshold outside [0,1]");
  require_or<ShapeError>(!pm.values.v.empty(), "built_up_ratio: empty probability map");
  std::size_t n = 0;
  for (const float p : pm.values.v)
    if (p >= threshold) ++n;
  return static_cast<double>(n) / static_cast<double>(pm.values.v.size());
}

}  // namespace bsc
