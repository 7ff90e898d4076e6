#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace habitforge {

/// Point of an empirical CDF: P(X <= value) = cumulative.
struct CdfPoint {
  double value = 0.0;
  double cumulative = 0.0;

  friend bool operator==(const CdfPoint&, const CdfPoint&) = default;
};

/// Empirical CDF with one point per distinct value, ascending; the last
/// point has cumulative 1. Empty input gives an empty CDF.
inline std::vector<CdfPoint> empirical_cdf(std::vector<double> values) {
  std::vector<CdfPoint> out;
  if (values.empty()) return out;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
    out.push_back({values[i], static_cast<double>(i + 1) / n});
  }
  return out;
}

/// Evaluates a step CDF at x.
inline double cdf_at(std::span<const CdfPoint> cdf, double x) {
  double result = 0.0;
  for (const auto& p : cdf) {
    if (p.value > x) break;
    result = p.cumulative;
  }
  return result;
}

}  // namespace habitforge
