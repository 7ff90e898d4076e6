#pragma once

// Day-of-week x hour-of-day visit vectors and the member x feature matrix
// that feeds the factorization.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "habitforge/core.hpp"

namespace habitforge {

inline constexpr int kDays = 7;
inline constexpr int kFirstHour = 6;      // first bin covers 6:00-7:00
inline constexpr int kHourBins = 18;      // 6:00 .. 24:00
inline constexpr int kFeatureCount = kDays * kHourBins;
inline constexpr int kWeekdayCloseHour = 23;
inline constexpr int kWeekendCloseHour = 20;

using VisitBins = Eigen::Matrix<int, kDays, kHourBins, Eigen::RowMajor>;

struct VisitVector {
  std::string member_id;
  int window_weeks = 0;
  VisitBins bins = VisitBins::Zero();

  /// Row-major flattening: feature index = day * 18 + (hour - 6).
  Eigen::RowVectorXd flattened() const;
};

inline int feature_index(int day, int hour) { return day * kHourBins + (hour - kFirstHour); }

/// Column name `d{day}_h{hour:02}`.
std::string feature_name(int feature);

/// Accumulates the hourly bins touched by each visit within the first
/// `window_weeks` membership weeks. A visit increments hours
/// [max(entry, 6), min(exit + 1, close)) where close is 20 on weekends and
/// 23 on weekdays. Throws DomainError for entry > exit or window_weeks < 1.
VisitVector build_visit_vector(std::span<const VisitEvent> visits, Date contract_start,
                               int window_weeks);

struct VisitMatrix {
  Eigen::MatrixXd rows;  // members x 126
  std::vector<std::string> row_ids;
  std::vector<bool> zero_row;
  int window_weeks = 0;

  Eigen::Index size() const { return rows.rows(); }
};

/// One row per cohort member in member-id order. With `normalize`, nonzero
/// rows are scaled to sum to one.
VisitMatrix build_matrix(const CohortDataset& cohort, int window_weeks, bool normalize = false);

void write_matrix_csv(std::ostream& out, const VisitMatrix& matrix);

}  // namespace habitforge
