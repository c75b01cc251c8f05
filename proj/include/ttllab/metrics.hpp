#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ttllab {

/// RMSE after discarding entries whose magnitude exceeds the empirical
/// (nearest-rank) `percentile` of |error|.
inline double truncated_rmse(std::span<const double> errors, double percentile = 0.99) {
  if (errors.empty()) throw std::invalid_argument("truncated_rmse: no errors");
  if (!(percentile > 0.0 && percentile <= 1.0)) throw std::invalid_argument("truncated_rmse: percentile outside (0,1]");
  std::vector<double> mags(errors.size());
  std::transform(errors.begin(), errors.end(), mags.begin(), [](double e) { return std::abs(e); });
  std::sort(mags.begin(), mags.end());
  const auto rank = static_cast<std::size_t>(std::ceil(percentile * static_cast<double>(mags.size())));
  const double cutoff = mags[std::clamp<std::size_t>(rank, 1, mags.size()) - 1];
  double sum = 0.0;
  std::size_t kept = 0;
  for (double m : mags) {
    if (m > cutoff) break;
    sum += m * m;
    ++kept;
  }
  return std::sqrt(sum / static_cast<double>(kept));
}

struct CdfPoint {
  double value = 0.0;
  double fraction = 0.0;
};

/// Empirical CDF; repeated values collapse to their final cumulative fraction.
inline std::vector<CdfPoint> empirical_cdf(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::vector<CdfPoint> out;
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
    out.push_back({values[i], static_cast<double>(i + 1) / n});
  }
  return out;
}

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

/// Arithmetic mean and sample standard deviation (0 for a single value).
inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd r;
  if (xs.empty()) return {std::nan(""), std::nan("")};
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

}  // namespace ttllab
