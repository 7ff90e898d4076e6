#pragma once

// Critical visit counts: the within-window visit count that best separates
// members whose streak ends by week w from those who outlast it, the weekly
// milestone table and its linear trend.

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "habitforge/core.hpp"
#include "habitforge/error.hpp"
#include "habitforge/survival.hpp"

namespace habitforge {

/// cumulative[w] = visits with week_index <= w, for w = 0..52.
using CumulativeVisits = std::array<int, kContractWeeks + 1>;

CumulativeVisits cumulative_visits(std::span<const VisitEvent> visits, Date contract_start);
std::vector<CumulativeVisits> cohort_cumulative_visits(const CohortDataset& cohort);

/// Number of visits with week_index <= week. Throws DomainError for week < 1.
int visit_count_in_window(std::span<const VisitEvent> visits, Date contract_start, int week);

struct CriticalEstimate {
  int week = 0;
  int critical_visits = 0;
  double max_diff = 0.0;
  std::size_t n_short = 0;  // streak <= week
  std::size_t n_long = 0;   // streak > week
};

/// Maximizes CDF_short(x) - CDF_long(x) over the observed counts; ties go to
/// the smallest x. Throws EstimationError naming the week when either group
/// is empty.
CriticalEstimate critical_visits(std::span<const int> window_counts, std::span<const int> streaks,
                                 int week);

CriticalEstimate critical_visits(std::span<const CumulativeVisits> visits,
                                 std::span<const SurvivalRecord> records, int week);

struct CriticalVisitTable {
  std::vector<CriticalEstimate> entries;
  std::vector<int> flagged_weeks;  // weeks where a survivor group was empty

  std::optional<int> critical_for(int week) const;
};

CriticalVisitTable critical_visit_table(std::span<const CumulativeVisits> visits,
                                        std::span<const SurvivalRecord> records, int first_week = 6,
                                        int last_week = kContractWeeks);

struct MilestoneFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares line through (x, y).
template <typename Scalar>
MilestoneFit ols_line(std::span<const Scalar> x, std::span<const Scalar> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw EstimationError("critical", "line fit needs at least two points");
  }
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 2> design(n, 2);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> target(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = Scalar(1);
    design(i, 1) = x[static_cast<std::size_t>(i)];
    target(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::Matrix<Scalar, 2, 1> beta = design.colPivHouseholderQr().solve(target);
  const Scalar ss_res = (target - design * beta).squaredNorm();
  const Scalar ss_tot = (target.array() - target.mean()).matrix().squaredNorm();
  MilestoneFit fit;
  fit.intercept = static_cast<double>(beta(0));
  fit.slope = static_cast<double>(beta(1));
  fit.r_squared = ss_tot > 0 ? static_cast<double>(1 - ss_res / ss_tot) : 1.0;
  return fit;
}

/// Throws EstimationError with fewer than two table entries.
MilestoneFit fit_milestone_line(const CriticalVisitTable& table);

/// Milestone w is reached iff visits within the first w weeks >= c_w.
inline bool reaches_milestone(const CumulativeVisits& visits, int week, int critical) {
  return visits[static_cast<std::size_t>(week)] >= critical;
}

void write_critical_table(std::ostream& out, const CriticalVisitTable& table);

}  // namespace habitforge
