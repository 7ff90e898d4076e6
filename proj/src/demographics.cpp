#include "habitforge/demographics.hpp"

#include <algorithm>
#include <ostream>

#include <fmt/format.h>

#include "habitforge/error.hpp"

namespace habitforge {

DeviationReport deviation(std::span<const std::string> group_of, std::span<const int> labels,
                          int k, std::vector<std::string> groups) {
  if (group_of.size() != labels.size()) {
    throw ValidationError("demographics", "labels do not cover all members");
  }
  const std::size_t g = groups.size();
  std::vector<std::size_t> joint(static_cast<std::size_t>(k) * g, 0);
  std::vector<std::size_t> per_cluster(static_cast<std::size_t>(k), 0);
  std::vector<std::size_t> per_group(g, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto it = std::find(groups.begin(), groups.end(), group_of[i]);
    if (it == groups.end()) {
      throw ValidationError("demographics",
                            fmt::format("group '{}' is not part of the partition", group_of[i]));
    }
    if (labels[i] < 0 || labels[i] >= k) throw ValidationError("demographics", "label outside 0..k-1");
    const auto gi = static_cast<std::size_t>(it - groups.begin());
    const auto ci = static_cast<std::size_t>(labels[i]);
    joint[ci * g + gi] += 1;
    per_cluster[ci] += 1;
    per_group[gi] += 1;
  }

  const double n = static_cast<double>(labels.size());
  DeviationReport report;
  report.k = k;
  report.groups = std::move(groups);
  for (std::size_t c = 0; c < per_cluster.size(); ++c) {
    report.cluster_share.push_back(n > 0 ? per_cluster[c] / n : 0.0);
  }
  for (int c = 0; c < k; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    for (std::size_t gi = 0; gi < g; ++gi) {
      DeviationCell cell;
      cell.cluster = c;
      cell.group = report.groups[gi];
      cell.p_marginal = n > 0 ? per_group[gi] / n : 0.0;
      if (per_cluster[ci] > 0) {
        cell.p_conditional = static_cast<double>(joint[ci * g + gi]) / per_cluster[ci];
        if (cell.p_marginal > 0) cell.deviation = cell.p_conditional / cell.p_marginal - 1.0;
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

std::vector<std::string> gender_groups(const CohortDataset& cohort) {
  std::vector<std::string> out;
  for (const auto& m : cohort.members()) out.emplace_back(to_string(m.gender));
  return out;
}

std::vector<std::string> age_band_groups(const CohortDataset& cohort, const AgeBands& bands) {
  std::vector<std::string> out;
  for (const auto& m : cohort.members()) {
    const int b = bands.index(m.age);
    if (b < 0) throw ValidationError("demographics", fmt::format("age {} below all bands", m.age));
    out.push_back(bands.label(static_cast<std::size_t>(b)));
  }
  return out;
}

void write_deviation_csv(std::ostream& out, const DeviationReport& report,
                         std::span<const std::string> cluster_names) {
  out << "cluster,group,p_conditional,p_marginal,deviation\n";
  for (const auto& cell : report.cells) {
    const auto c = static_cast<std::size_t>(cell.cluster);
    const std::string name = c < cluster_names.size() ? cluster_names[c] : fmt::format("{}", c);
    out << fmt::format("{},{},{},{},{}\n", name, cell.group, cell.p_conditional, cell.p_marginal,
                       cell.deviation ? fmt::format("{}", *cell.deviation) : "undefined");
  }
}

}  // namespace habitforge
