#pragma once

#include <array>
#include <limits>
#include <string>

#include "bsc/common.hpp"

namespace bsc {

// Ground-truth count bands used for per-band error reporting:
// LOW [0,30], MEDIUM [31,60], HIGH [61, inf).
enum class BandName { Low, Medium, High };

struct CountBand {
  BandName name;
  int lower;  // inclusive
  int upper;  // inclusive; INT_MAX means unbounded
};

inline constexpr std::array<CountBand, 3> kCountBands{{
    {BandName::Low, 0, 30},
    {BandName::Medium, 31, 60},
    {BandName::High, 61, std::numeric_limits<int>::max()},
}};

inline const char* band_name(BandName b) {
  switch (b) {
    case BandName::Low: return "LOW";
    case BandName::Medium: return "MEDIUM";
    case BandName::High: return "HIGH";
  }
  return "?";
}

inline CountBand band_of(int count) {
  require_or<DomainError>(count >= 0, "band_of: count must be non-negative");
  for (const auto& b : kCountBands)
    if (count >= b.lower && count <= b.upper) return b;
  throw DomainError("band_of: unreachable");  // bands partition the non-negative integers
}

}  // namespace bsc
