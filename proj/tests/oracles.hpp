#pragma once

// Brute-force reference implementations used to check the library.

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace hf_test {

// Longest prefix 1..L ending on an attended week that contains no two
// consecutive absent weeks.
inline int streak_oracle(const std::array<bool, 52>& attended) {
  for (int len = 52; len >= 1; --len) {
    if (!attended[static_cast<std::size_t>(len - 1)]) continue;
    bool ok = true;
    for (int w = 1; w < len && ok; ++w) {
      ok = attended[static_cast<std::size_t>(w - 1)] || attended[static_cast<std::size_t>(w)];
    }
    if (ok) return len;
  }
  return 0;
}

struct CriticalOracle {
  int x = 0;
  double diff = 0.0;
};

// Scans every integer between the smallest and largest count.
inline CriticalOracle critical_oracle(std::span<const int> counts, std::span<const int> streaks, int week) {
  const int lo = *std::min_element(counts.begin(), counts.end());
  const int hi = *std::max_element(counts.begin(), counts.end());
  std::int64_t ns = 0, nl = 0;
  for (int s : streaks) (s <= week ? ns : nl) += 1;
  CriticalOracle best{lo, -2.0};
  std::int64_t best_num = 0;
  bool first = true;
  for (int x = lo; x <= hi; ++x) {
    std::int64_t a = 0, b = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (counts[i] > x) continue;
      (streaks[i] <= week ? a : b) += 1;
    }
    const std::int64_t num = a * nl - b * ns;
    if (first || num > best_num) {
      best_num = num;
      best = {x, static_cast<double>(num) / static_cast<double>(ns * nl)};
      first = false;
    }
  }
  return best;
}

// Closed-form simple regression.
inline std::pair<double, double> ols_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

}  // namespace hf_test
