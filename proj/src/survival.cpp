#include "habitforge/survival.hpp"

#include <algorithm>
#include <map>
#include <ostream>

#include <fmt/format.h>

#include "habitforge/csv.hpp"
#include "habitforge/error.hpp"

namespace habitforge {

WeeklyAttendance weekly_attendance(std::string member_id, std::span<const VisitEvent> visits,
                                   Date contract_start) {
  WeeklyAttendance out;
  out.member_id = std::move(member_id);
  for (const auto& v : visits) {
    const int w = week_index(v.date, contract_start);
    if (w <= kContractWeeks) out.attended[static_cast<std::size_t>(w - 1)] = true;
  }
  return out;
}

WeeklyAttendance make_attendance(std::span<const bool> leading_weeks, std::string member_id) {
  WeeklyAttendance out;
  out.member_id = std::move(member_id);
  const auto n = std::min<std::size_t>(leading_weeks.size(), kContractWeeks);
  std::copy_n(leading_weeks.begin(), n, out.attended.begin());
  return out;
}

SurvivalRecord survival_streak(const WeeklyAttendance& attendance, int gap_tolerance) {
  SurvivalRecord out;
  out.member_id = attendance.member_id;
  int absent_run = 0;
  for (int w = 1; w <= kContractWeeks; ++w) {
    if (attendance.at(w)) {
      out.streak_weeks = w;
      absent_run = 0;
    } else if (++absent_run > gap_tolerance) {
      break;
    }
  }
  for (int w = 1; w <= out.streak_weeks; ++w) {
    if (!attendance.at(w)) out.gap_week_indices.push_back(w);
  }
  out.gaps_used = static_cast<int>(out.gap_week_indices.size());
  return out;
}

std::vector<WeeklyAttendance> cohort_attendance(const CohortDataset& cohort) {
  std::vector<WeeklyAttendance> out;
  out.reserve(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& m = cohort.member(i);
    out.push_back(weekly_attendance(m.member_id, cohort.visits(i), m.contract_start));
  }
  return out;
}

std::vector<SurvivalRecord> cohort_survival(std::span<const WeeklyAttendance> attendance,
                                            int gap_tolerance) {
  std::vector<SurvivalRecord> out;
  out.reserve(attendance.size());
  for (const auto& a : attendance) out.push_back(survival_streak(a, gap_tolerance));
  return out;
}

SurvivalGrouping parse_grouping(std::string_view name) {
  if (name == "all") return SurvivalGrouping::all;
  if (name == "gender") return SurvivalGrouping::gender;
  if (name == "cluster") return SurvivalGrouping::cluster;
  if (name == "age_band") return SurvivalGrouping::age_band;
  throw ValidationError("survival", fmt::format("unknown grouping key '{}'", name));
}

std::vector<std::string> grouping_keys(SurvivalGrouping grouping, const CohortDataset& cohort,
                                       std::span<const int> labels,
                                       std::span<const std::string> cluster_names,
                                       const AgeBands& bands) {
  std::vector<std::string> keys;
  keys.reserve(cohort.size());
  if (grouping == SurvivalGrouping::cluster && labels.size() != cohort.size()) {
    throw ValidationError("survival", "cluster labels do not cover the cohort");
  }
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& m = cohort.member(i);
    switch (grouping) {
      case SurvivalGrouping::all: keys.emplace_back("all"); break;
      case SurvivalGrouping::gender: keys.emplace_back(to_string(m.gender)); break;
      case SurvivalGrouping::cluster: {
        const auto label = static_cast<std::size_t>(labels[i]);
        keys.push_back(label < cluster_names.size() ? cluster_names[label]
                                                    : fmt::format("cluster{}", label));
        break;
      }
      case SurvivalGrouping::age_band: {
        const int band = bands.index(m.age);
        if (band < 0) throw ValidationError("survival", fmt::format("age {} below all bands", m.age));
        keys.push_back(bands.label(static_cast<std::size_t>(band)));
        break;
      }
    }
  }
  return keys;
}

std::vector<SurvivalCurve> survival_cdf(std::span<const SurvivalRecord> records,
                                        std::span<const std::string> keys,
                                        std::span<const std::string> order) {
  if (records.size() != keys.size()) {
    throw ValidationError("survival", "grouping keys do not cover all records");
  }
  std::map<std::string, std::array<std::size_t, kContractWeeks + 1>> histograms;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& h = histograms[keys[i]];
    h[static_cast<std::size_t>(std::clamp(records[i].streak_weeks, 0, kContractWeeks))] += 1;
  }
  std::vector<std::string> groups;
  if (!order.empty()) {
    for (const auto& g : order) {
      if (histograms.contains(g)) groups.push_back(g);
    }
  }
  for (const auto& [g, _] : histograms) {
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }

  std::vector<SurvivalCurve> out;
  for (const auto& g : groups) {
    const auto& h = histograms.at(g);
    SurvivalCurve curve;
    curve.group = g;
    for (auto c : h) curve.members += c;
    const double n = static_cast<double>(curve.members);
    std::size_t running = 0;
    for (std::size_t s = 0; s <= kContractWeeks; ++s) {
      running += h[s];
      curve.cdf[s] = static_cast<double>(running) / n;
    }
    curve.reach_6 = 1.0 - curve.cdf[5];
    curve.reach_17 = 1.0 - curve.cdf[16];
    out.push_back(std::move(curve));
  }
  return out;
}

std::string SurvivalBin::label() const { return fmt::format("{}-{}", lo, hi); }

std::vector<SurvivalBin> default_survival_bins() { return {{1, 5}, {6, 16}, {17, 29}, {30, 52}}; }

std::vector<SurvivalBin> parse_survival_bins(std::string_view text) {
  std::vector<SurvivalBin> out;
  for (auto part : split_fields(text)) {
    const auto dash = part.find('-');
    if (dash == std::string_view::npos) {
      throw ValidationError("survival", fmt::format("bad survival bin '{}'", part));
    }
    SurvivalBin bin;
    try {
      bin.lo = std::stoi(std::string(part.substr(0, dash)));
      bin.hi = std::stoi(std::string(part.substr(dash + 1)));
    } catch (const std::exception&) {
      throw ValidationError("survival", fmt::format("bad survival bin '{}'", part));
    }
    if (bin.lo < 1 || bin.hi > kContractWeeks || bin.lo > bin.hi) {
      throw ValidationError("survival", fmt::format("survival bin '{}' outside 1..52", part));
    }
    out.push_back(bin);
  }
  return out;
}

GapUsageStats gap_usage_stats(std::span<const SurvivalRecord> records,
                              std::span<const SurvivalBin> bins) {
  GapUsageStats out;
  out.joint = Eigen::MatrixXi::Zero(kContractWeeks + 1, kContractWeeks / 2 + 1);
  for (const auto& r : records) {
    for (int w : r.gap_week_indices) out.gaps_per_week[static_cast<std::size_t>(w)] += 1;
    const int gaps = std::min<int>(r.gaps_used, static_cast<int>(out.joint.cols()) - 1);
    out.joint(r.streak_weeks, gaps) += 1;
  }
  for (const auto& bin : bins) {
    GapUsageStats::BinRates rates;
    rates.bin = bin;
    std::vector<int> gaps_at(static_cast<std::size_t>(bin.hi) + 1, 0);
    std::vector<int> at_risk(static_cast<std::size_t>(bin.hi) + 1, 0);
    std::vector<int> gaps_to_end(static_cast<std::size_t>(bin.hi) + 1, 0);
    std::vector<int> at_risk_to_end(static_cast<std::size_t>(bin.hi) + 1, 0);
    for (const auto& r : records) {
      if (r.streak_weeks < bin.lo || r.streak_weeks > bin.hi) continue;
      ++rates.members;
      for (int w = 1; w <= r.streak_weeks; ++w) at_risk[static_cast<std::size_t>(w)] += 1;
      for (int d = 0; d < r.streak_weeks; ++d) at_risk_to_end[static_cast<std::size_t>(d)] += 1;
      for (int w : r.gap_week_indices) {
        gaps_at[static_cast<std::size_t>(w)] += 1;
        gaps_to_end[static_cast<std::size_t>(r.streak_weeks - w)] += 1;
      }
    }
    rates.rate_by_week.assign(gaps_at.size(), 0.0);
    rates.rate_by_weeks_to_end.assign(gaps_at.size(), 0.0);
    for (std::size_t w = 0; w < gaps_at.size(); ++w) {
      if (at_risk[w] > 0) rates.rate_by_week[w] = static_cast<double>(gaps_at[w]) / at_risk[w];
      if (at_risk_to_end[w] > 0) {
        rates.rate_by_weeks_to_end[w] = static_cast<double>(gaps_to_end[w]) / at_risk_to_end[w];
      }
    }
    out.bins.push_back(std::move(rates));
  }
  return out;
}

std::vector<int> intermediate_gaps(const WeeklyAttendance& attendance) {
  std::vector<int> out;
  int last_attended = 0;
  for (int w = 1; w <= kContractWeeks; ++w) {
    if (!attendance.at(w)) continue;
    if (last_attended > 0 && w - last_attended > 1) out.push_back(w - last_attended - 1);
    last_attended = w;
  }
  return out;
}

std::vector<CdfPoint> intermediate_gap_cdf(std::span<const WeeklyAttendance> attendance) {
  std::vector<double> lengths;
  for (const auto& a : attendance) {
    for (int g : intermediate_gaps(a)) lengths.push_back(g);
  }
  return empirical_cdf(std::move(lengths));
}

void write_survival_records(std::ostream& out, std::span<const SurvivalRecord> records) {
  out << "member_id,streak_weeks,gaps_used,gap_week_indices\n";
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{}\n", r.member_id, r.streak_weeks, r.gaps_used,
                       fmt::join(r.gap_week_indices, ";"));
  }
}

}  // namespace habitforge
