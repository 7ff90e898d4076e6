#pragma once

// Survival streaks over the 52 membership weeks with single-week gap
// tolerance, gap-usage statistics, grouped survival CDFs and the CDF of
// intermediate absence runs.

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "habitforge/core.hpp"
#include "habitforge/stats.hpp"

namespace habitforge {

inline constexpr int kContractWeeks = 52;

struct WeeklyAttendance {
  std::string member_id;
  std::array<bool, kContractWeeks> attended{};

  /// 1-based week accessor.
  bool at(int week) const { return attended[static_cast<std::size_t>(week - 1)]; }
};

/// attended[w] is true iff at least one visit falls in membership week w.
/// Visits after week 52 are ignored.
WeeklyAttendance weekly_attendance(std::string member_id, std::span<const VisitEvent> visits,
                                   Date contract_start);

/// Builds an attendance series from the leading weeks given; later weeks are absent.
WeeklyAttendance make_attendance(std::span<const bool> leading_weeks, std::string member_id = {});

struct SurvivalRecord {
  std::string member_id;
  int streak_weeks = 0;
  int gaps_used = 0;
  std::vector<int> gap_week_indices;
};

/// Scans from week 1. The streak breaks at the first run of more than
/// `gap_tolerance` absent weeks and ends at the last attended week before that
/// run. Absent weeks inside the streak are gap weeks.
SurvivalRecord survival_streak(const WeeklyAttendance& attendance, int gap_tolerance = 1);

std::vector<WeeklyAttendance> cohort_attendance(const CohortDataset& cohort);
std::vector<SurvivalRecord> cohort_survival(std::span<const WeeklyAttendance> attendance,
                                            int gap_tolerance = 1);

enum class SurvivalGrouping { all, gender, cluster, age_band };

/// Throws ValidationError for names other than all, gender, cluster, age_band.
SurvivalGrouping parse_grouping(std::string_view name);

/// Per-member group key for `grouping`. `labels`/`cluster_names` are only
/// consulted for the cluster grouping.
std::vector<std::string> grouping_keys(SurvivalGrouping grouping, const CohortDataset& cohort,
                                       std::span<const int> labels,
                                       std::span<const std::string> cluster_names,
                                       const AgeBands& bands = {});

struct SurvivalCurve {
  std::string group;
  std::size_t members = 0;
  std::array<double, kContractWeeks + 1> cdf{};  // cdf[s] = P(streak <= s)
  double reach_6 = 0.0;                          // P(streak >= 6)
  double reach_17 = 0.0;                         // P(streak >= 17)
};

/// One curve per distinct key. Groups follow `order` when given, otherwise
/// ascending key order.
std::vector<SurvivalCurve> survival_cdf(std::span<const SurvivalRecord> records,
                                        std::span<const std::string> keys,
                                        std::span<const std::string> order = {});

struct SurvivalBin {
  int lo = 1;
  int hi = kContractWeeks;
  std::string label() const;
};

/// Parses "1-5,6-16,17-29,30-52".
std::vector<SurvivalBin> parse_survival_bins(std::string_view text);
std::vector<SurvivalBin> default_survival_bins();

struct GapUsageStats {
  std::array<int, kContractWeeks + 1> gaps_per_week{};  // index = membership week

  struct BinRates {
    SurvivalBin bin;
    std::size_t members = 0;
    /// rate_by_week[w] = gap weeks at w / members of the bin with streak >= w.
    std::vector<double> rate_by_week;
    /// rate_by_weeks_to_end[d] = gap weeks at (streak - d) / members with streak > d.
    std::vector<double> rate_by_weeks_to_end;
  };
  std::vector<BinRates> bins;

  /// joint(s, g): members with streak s using g gap weeks.
  Eigen::MatrixXi joint;
};

GapUsageStats gap_usage_stats(std::span<const SurvivalRecord> records,
                              std::span<const SurvivalBin> bins);

/// Lengths of maximal absent runs flanked by attended weeks on both sides.
std::vector<int> intermediate_gaps(const WeeklyAttendance& attendance);
std::vector<CdfPoint> intermediate_gap_cdf(std::span<const WeeklyAttendance> attendance);

void write_survival_records(std::ostream& out, std::span<const SurvivalRecord> records);

}  // namespace habitforge
