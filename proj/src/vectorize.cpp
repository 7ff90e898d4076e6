#include "habitforge/vectorize.hpp"

#include <algorithm>
#include <ostream>

#include <fmt/format.h>

#include "habitforge/error.hpp"

namespace habitforge {

Eigen::RowVectorXd VisitVector::flattened() const {
  Eigen::RowVectorXd out(kFeatureCount);
  for (int d = 0; d < kDays; ++d) {
    for (int h = 0; h < kHourBins; ++h) out(d * kHourBins + h) = bins(d, h);
  }
  return out;
}

std::string feature_name(int feature) {
  return fmt::format("d{}_h{:02d}", feature / kHourBins, kFirstHour + feature % kHourBins);
}

VisitVector build_visit_vector(std::span<const VisitEvent> visits, Date contract_start,
                               int window_weeks) {
  if (window_weeks < 1) throw DomainError("vectorize", "window_weeks must be positive");
  VisitVector out;
  out.window_weeks = window_weeks;
  if (!visits.empty()) out.member_id = visits.front().member_id;
  for (const auto& v : visits) {
    if (v.entry_hour > v.exit_hour) {
      throw DomainError("vectorize", fmt::format("visit of '{}' on {}: entry {} after exit {}",
                                                 v.member_id, format_date(v.date), v.entry_hour,
                                                 v.exit_hour));
    }
    if (week_index(v.date, contract_start) > window_weeks) continue;
    const int day = day_of_week(v.date);
    const int close = is_weekend(day) ? kWeekendCloseHour : kWeekdayCloseHour;
    const int end = std::min(v.exit_hour + 1, close);
    for (int hour = std::max(v.entry_hour, kFirstHour); hour < end; ++hour) {
      out.bins(day, hour - kFirstHour) += 1;
    }
  }
  return out;
}

VisitMatrix build_matrix(const CohortDataset& cohort, int window_weeks, bool normalize) {
  if (window_weeks < 1) throw DomainError("vectorize", "window_weeks must be positive");
  VisitMatrix out;
  out.window_weeks = window_weeks;
  const auto n = static_cast<Eigen::Index>(cohort.size());
  out.rows = Eigen::MatrixXd::Zero(n, kFeatureCount);
  out.row_ids.reserve(cohort.size());
  out.zero_row.reserve(cohort.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& m = cohort.member(static_cast<std::size_t>(i));
    auto vec = build_visit_vector(cohort.visits(static_cast<std::size_t>(i)), m.contract_start,
                                  window_weeks);
    out.rows.row(i) = vec.flattened();
    const double total = out.rows.row(i).sum();
    out.zero_row.push_back(total == 0.0);
    if (normalize && total > 0.0) out.rows.row(i) /= total;
    out.row_ids.push_back(m.member_id);
  }
  return out;
}

void write_matrix_csv(std::ostream& out, const VisitMatrix& matrix) {
  out << "member_id";
  for (int f = 0; f < kFeatureCount; ++f) out << ',' << feature_name(f);
  out << '\n';
  for (Eigen::Index i = 0; i < matrix.rows.rows(); ++i) {
    out << matrix.row_ids[static_cast<std::size_t>(i)];
    for (int f = 0; f < kFeatureCount; ++f) out << ',' << fmt::format("{}", matrix.rows(i, f));
    out << '\n';
  }
}

}  // namespace habitforge
