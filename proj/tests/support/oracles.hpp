#pragma once

// Test-side oracles, kept independent of the library implementations they
// check: a naive metrics recomputation, connected-component labeling, and
// central finite differences for gradient checks.

#include <cmath>
#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

#include "bsc/image.hpp"

namespace oracle {

struct NaiveReport {
  double tae_low = 0, tae_medium = 0, tae_high = 0, tae_total = 0, mae = 0;
  bool has_r2 = false;
  double r2 = 0;
};

// Straight-line recomputation of the evaluation metrics from first
// principles; deliberately structured differently from the library.
inline NaiveReport naive_evaluate(const std::vector<std::pair<int, double>>& preds) {
  NaiveReport r;
  double mean = 0;
  for (const auto& [t, p] : preds) mean += t;
  mean /= static_cast<double>(preds.size());
  double ss_res = 0, ss_tot = 0;
  for (const auto& [t, p] : preds) {
    const double e = std::fabs(static_cast<double>(t) - p);
    if (t <= 30) {
      r.tae_low += e;
    } else if (t <= 60) {
      r.tae_medium += e;
    } else {
      r.tae_high += e;
    }
    r.tae_total += e;
    ss_res += (t - p) * (t - p);
    ss_tot += (t - mean) * (t - mean);
  }
  r.mae = r.tae_total / static_cast<double>(preds.size());
  if (ss_tot > 0) {
    r.has_r2 = true;
    r.r2 = 1.0 - ss_res / ss_tot;
  }
  return r;
}

// 4-connected component count of a binary mask.
inline int connected_components(const bsc::Image8& mask) {
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(mask.h) * mask.w, 0);
  int comps = 0;
  for (int sy = 0; sy < mask.h; ++sy)
    for (int sx = 0; sx < mask.w; ++sx) {
      const std::size_t si = static_cast<std::size_t>(sy) * mask.w + sx;
      if (mask.at(sy, sx) < 128 || seen[si]) continue;
      ++comps;
      std::queue<std::pair<int, int>> q;
      q.push({sy, sx});
      seen[si] = 1;
      while (!q.empty()) {
        const auto [y, x] = q.front();
        q.pop();
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ny = y + dy[k], nx = x + dx[k];
          if (ny < 0 || nx < 0 || ny >= mask.h || nx >= mask.w) continue;
          const std::size_t ni = static_cast<std::size_t>(ny) * mask.w + nx;
          if (mask.at(ny, nx) >= 128 && !seen[ni]) {
            seen[ni] = 1;
            q.push({ny, nx});
          }
        }
      }
    }
  return comps;
}

// Central finite differences: df/dx_i via (f(x+h e_i) - f(x-h e_i)) / 2h.
// `get`/`set` expose the parameter vector; `f` re-evaluates the scalar loss.
inline std::vector<double> central_diff(std::function<double()> f, std::function<double(std::size_t)> get,
                                        std::function<void(std::size_t, double)> set, std::size_t n,
                                        double h = 1e-5) {
  std::vector<double> grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = get(i);
    set(i, x0 + h);
    const double fp = f();
    set(i, x0 - h);
    const double fm = f();
    set(i, x0);
    grad[i] = (fp - fm) / (2 * h);
  }
  return grad;
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), 1e-8});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace oracle
