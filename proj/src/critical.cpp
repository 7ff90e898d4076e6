#include "habitforge/critical.hpp"

#include <algorithm>
#include <cstdint>
#include <ostream>

#include <fmt/format.h>

namespace habitforge {

CumulativeVisits cumulative_visits(std::span<const VisitEvent> visits, Date contract_start) {
  CumulativeVisits out{};
  for (const auto& v : visits) {
    const int w = week_index(v.date, contract_start);
    if (w <= kContractWeeks) out[static_cast<std::size_t>(w)] += 1;
  }
  for (std::size_t w = 1; w < out.size(); ++w) out[w] += out[w - 1];
  return out;
}

std::vector<CumulativeVisits> cohort_cumulative_visits(const CohortDataset& cohort) {
  std::vector<CumulativeVisits> out;
  out.reserve(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    out.push_back(cumulative_visits(cohort.visits(i), cohort.member(i).contract_start));
  }
  return out;
}

int visit_count_in_window(std::span<const VisitEvent> visits, Date contract_start, int week) {
  if (week < 1) throw DomainError("critical", "window week must be >= 1");
  return static_cast<int>(std::count_if(visits.begin(), visits.end(), [&](const VisitEvent& v) {
    return week_index(v.date, contract_start) <= week;
  }));
}

CriticalEstimate critical_visits(std::span<const int> window_counts, std::span<const int> streaks,
                                 int week) {
  if (window_counts.size() != streaks.size()) {
    throw EstimationError("critical", "visit counts and streaks differ in length");
  }
  std::vector<int> short_counts;
  std::vector<int> long_counts;
  for (std::size_t i = 0; i < streaks.size(); ++i) {
    (streaks[i] <= week ? short_counts : long_counts).push_back(window_counts[i]);
  }
  if (short_counts.empty() || long_counts.empty()) {
    throw EstimationError("critical",
                          fmt::format("week {}: {} survivor group is empty", week,
                                      short_counts.empty() ? "short-streak" : "long-streak"));
  }
  std::sort(short_counts.begin(), short_counts.end());
  std::sort(long_counts.begin(), long_counts.end());
  std::vector<int> support(short_counts);
  support.insert(support.end(), long_counts.begin(), long_counts.end());
  std::sort(support.begin(), support.end());
  support.erase(std::unique(support.begin(), support.end()), support.end());

  // diff(x) = a/ns - b/nl, compared exactly via a*nl - b*ns.
  const auto ns = static_cast<std::int64_t>(short_counts.size());
  const auto nl = static_cast<std::int64_t>(long_counts.size());
  std::int64_t best_num = 0;
  int best_x = support.front();
  bool first = true;
  std::size_t ia = 0, ib = 0;
  for (int x : support) {
    while (ia < short_counts.size() && short_counts[ia] <= x) ++ia;
    while (ib < long_counts.size() && long_counts[ib] <= x) ++ib;
    const std::int64_t num = static_cast<std::int64_t>(ia) * nl - static_cast<std::int64_t>(ib) * ns;
    if (first || num > best_num) {
      best_num = num;
      best_x = x;
      first = false;
    }
  }
  CriticalEstimate out;
  out.week = week;
  out.critical_visits = best_x;
  out.max_diff = static_cast<double>(best_num) / static_cast<double>(ns * nl);
  out.n_short = short_counts.size();
  out.n_long = long_counts.size();
  return out;
}

CriticalEstimate critical_visits(std::span<const CumulativeVisits> visits,
                                 std::span<const SurvivalRecord> records, int week) {
  if (week < 1 || week > kContractWeeks) {
    throw DomainError("critical", fmt::format("week {} outside 1..{}", week, kContractWeeks));
  }
  if (visits.size() != records.size()) {
    throw EstimationError("critical", "visit counts and survival records differ in length");
  }
  std::vector<int> counts(visits.size());
  std::vector<int> streaks(visits.size());
  for (std::size_t i = 0; i < visits.size(); ++i) {
    counts[i] = visits[i][static_cast<std::size_t>(week)];
    streaks[i] = records[i].streak_weeks;
  }
  return critical_visits(counts, streaks, week);
}

std::optional<int> CriticalVisitTable::critical_for(int week) const {
  for (const auto& e : entries) {
    if (e.week == week) return e.critical_visits;
  }
  return std::nullopt;
}

CriticalVisitTable critical_visit_table(std::span<const CumulativeVisits> visits,
                                        std::span<const SurvivalRecord> records, int first_week,
                                        int last_week) {
  CriticalVisitTable table;
  for (int w = first_week; w <= last_week; ++w) {
    try {
      table.entries.push_back(critical_visits(visits, records, w));
    } catch (const EstimationError&) {
      table.flagged_weeks.push_back(w);
    }
  }
  return table;
}

MilestoneFit fit_milestone_line(const CriticalVisitTable& table) {
  if (table.entries.size() < 2) {
    throw EstimationError("critical", "milestone fit needs at least two table entries");
  }
  std::vector<double> x, y;
  for (const auto& e : table.entries) {
    x.push_back(e.week);
    y.push_back(e.critical_visits);
  }
  return ols_line<double>(x, y);
}

void write_critical_table(std::ostream& out, const CriticalVisitTable& table) {
  // Flagged weeks keep their row with empty estimates.
  std::vector<std::pair<int, const CriticalEstimate*>> rows;
  for (const auto& e : table.entries) rows.emplace_back(e.week, &e);
  for (int w : table.flagged_weeks) rows.emplace_back(w, nullptr);
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  out << "week,critical_visits,max_cdf_diff,n_short,n_long\n";
  for (const auto& [week, e] : rows) {
    if (e) {
      out << fmt::format("{},{},{},{},{}\n", week, e->critical_visits, e->max_diff, e->n_short, e->n_long);
    } else {
      out << fmt::format("{},,,,\n", week);
    }
  }
}

}  // namespace habitforge
