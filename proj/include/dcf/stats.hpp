#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace dcf::stats {

/// Quantile by linear interpolation between order statistics
/// (position (n-1)*phi, zero based).
inline double quantile_linear(const std::vector<double>& sorted, double phi) {
  if (sorted.empty()) throw std::invalid_argument("quantile_linear: empty sample");
  if (sorted.size() == 1) return sorted[0];
  const double pos = phi * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

struct Summary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  std::vector<double> removed;  // outliers, in input order
  std::size_t kept = 0;
};

/// Quartile summary with a 10 x IQR outlier filter. A value is an outlier
/// when it falls outside [Q1 - 10 IQR, Q3 + 10 IQR] computed on the rest of
/// the sample (jackknifed fences, so a single extreme value cannot mask
/// itself). The reported quartiles are recomputed on the filtered list.
inline Summary timing_summary(const std::vector<double>& values, double k = 10.0) {
  if (values.empty()) throw std::invalid_argument("timing_summary: empty sample");

  std::vector<double> kept_vals;
  Summary out;
  if (values.size() < 3) {
    kept_vals = values;  // too few points to call anything an outlier
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::vector<double> rest;
      rest.reserve(values.size() - 1);
      for (std::size_t j = 0; j < values.size(); ++j)
        if (j != i) rest.push_back(values[j]);
      std::sort(rest.begin(), rest.end());
      const double q1 = quantile_linear(rest, 0.25);
      const double q3 = quantile_linear(rest, 0.75);
      const double iqr = q3 - q1;
      if (values[i] < q1 - k * iqr || values[i] > q3 + k * iqr)
        out.removed.push_back(values[i]);
      else
        kept_vals.push_back(values[i]);
    }
    if (kept_vals.empty()) kept_vals = values;  // degenerate, keep everything
  }

  std::sort(kept_vals.begin(), kept_vals.end());
  out.median = quantile_linear(kept_vals, 0.5);
  out.q1 = quantile_linear(kept_vals, 0.25);
  out.q3 = quantile_linear(kept_vals, 0.75);
  out.iqr = out.q3 - out.q1;
  out.kept = kept_vals.size();
  return out;
}

}  // namespace dcf::stats
