#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bsc/common.hpp"
#include "bsc/dataset/bands.hpp"

namespace bsc {

struct Residual {
  std::string id;
  int truth = 0;
  double pred = 0;
  double abs_err = 0;
  BandName band = BandName::Low;
};

// Counting evaluation report. Band membership is decided by ground-truth
// count; the band errors partition the total exactly and
// MAE = TAE / n_images by construction.
struct EvalReport {
  std::size_t n_images = 0;
  std::size_t n_low = 0, n_medium = 0, n_high = 0;
  double tae_low = 0, tae_medium = 0, tae_high = 0, tae_total = 0;
  double mae = 0;
  std::optional<double> r2;  // empty when all truths are identical
  std::string r2_note;
  std::vector<Residual> residuals;
};

struct LabeledPrediction {
  std::string id;
  int truth = 0;
  double pred = 0;
};

inline EvalReport evaluate(const std::vector<LabeledPrediction>& predictions) {
  require_or<Error>(!predictions.empty(), "evaluate: empty prediction list");
  EvalReport r;
  r.n_images = predictions.size();
  double truth_sum = 0;
  for (const auto& p : predictions) {
    require_or<DomainError>(p.truth >= 0, "evaluate: negative truth count for " + p.id);
    truth_sum += p.truth;
  }
  const double truth_mean = truth_sum / static_cast<double>(r.n_images);

  double ss_res = 0, ss_tot = 0;
  for (const auto& p : predictions) {
    const double err = std::abs(p.truth - p.pred);
    const BandName band = band_of(p.truth).name;
    switch (band) {
      case BandName::Low:
        r.tae_low += err;
        ++r.n_low;
        break;
      case BandName::Medium:
        r.tae_medium += err;
        ++r.n_medium;
        break;
      case BandName::High:
        r.tae_high += err;
        ++r.n_high;
        break;
    }
    ss_res += (p.truth - p.pred) * (p.truth - p.pred);
    ss_tot += (p.truth - truth_mean) * (p.truth - truth_mean);
    r.residuals.push_back({p.id, p.truth, p.pred, err, band});
  }
  r.tae_total = r.tae_low + r.tae_medium + r.tae_high;
  r.mae = r.tae_total / static_cast<double>(r.n_images);
  if (ss_tot > 0) {
    r.r2 = 1.0 - ss_res / ss_tot;
  } else {
    r.r2_note = "R2 undefined: all ground-truth counts identical";
  }
  return r;
}

// Renders the per-band table in the published layout and appends MAE / R2.
inline std::string band_report(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  auto row = [&](const char* label, double tae, std::size_t n) {
    os << std::left << std::setw(44) << label << "  " << std::setw(10) << tae << "  over " << n
       << " images\n";
  };
  row("Total Absolute Error (Low-Count : 0 to 30)", r.tae_low, r.n_low);
  row("Total Absolute Error (Medium-Count : 31 to 60)", r.tae_medium, r.n_medium);
  row("Total Absolute Error (High-Count : > 60)", r.tae_high, r.n_high);
  row("Total Absolute Error (TAE : Total)", r.tae_total, r.n_images);
  os << std::left << std::setw(44) << "Mean Absolute Error (TAE / images)" << "  " << r.mae << "\n";
  if (r.r2) {
    os << std::left << std::setw(44) << "R2 (coefficient of determination)" << "  " << std::setprecision(4)
       << *r.r2 << "\n";
  } else {
    os << std::left << std::setw(44) << "R2 (coefficient of determination)" << "  n/a (" << r.r2_note
       << ")\n";
  }
  return os.str();
}

// Machine-readable exports: residual table (one row per image) and a
// band summary, both tab-separated.
inline void write_residuals_tsv(const EvalReport& r, const std::string& path) {
  std::ofstream f(path);
  require_or<IoError>(f.good(), "cannot open for writing: " + path);
  f << "# id\ttruth\tpred\tabs_err\tband\n";
  f << std::setprecision(17);
  for (const auto& e : r.residuals)
    f << e.id << "\t" << e.truth << "\t" << e.pred << "\t" << e.abs_err << "\t" << band_name(e.band) << "\n";
  require_or<IoError>(f.good(), "short write: " + path);
}

inline void write_band_summary_tsv(const EvalReport& r, const std::string& path) {
  std::ofstream f(path);
  require_or<IoError>(f.good(), "cannot open for writing: " + path);
  f << "# band\tn_images\ttae\n";
  f << std::setprecision(17);
  f << "LOW\t" << r.n_low << "\t" << r.tae_low << "\n";
  f << "MEDIUM\t" << r.n_medium << "\t" << r.tae_medium << "\n";
  f << "HIGH\t" << r.n_high << "\t" << r.tae_high << "\n";
  f << "TOTAL\t" << r.n_images << "\t" << r.tae_total << "\n";
  f << "MAE\t" << r.n_images << "\t" << r.mae << "\n";
  if (r.r2) f << "R2\t" << r.n_images << "\t" << *r.r2 << "\n";
  require_or<IoError>(f.good(), "short write: " + path);
}

}  // namespace bsc
