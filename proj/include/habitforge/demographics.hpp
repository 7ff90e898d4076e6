#pragma once

// Over/under-representation of demographic groups within clusters:
// P(D_i | C_j) / P(D_i) - 1.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "habitforge/core.hpp"

namespace habitforge {

struct DeviationCell {
  int cluster = 0;
  std::string group;
  double p_conditional = 0.0;  // P(D_i | C_j)
  double p_marginal = 0.0;     // P(D_i)
  /// Absent when P(D_i) = 0 or cluster j is empty.
  std::optional<double> deviation;
};

struct DeviationReport {
  int k = 0;
  std::vector<std::string> groups;
  std::vector<double> cluster_share;  // P(C_j)
  std::vector<DeviationCell> cells;   // cluster-major, groups in `groups` order

  const DeviationCell& at(int cluster, std::size_t group) const {
    return cells[static_cast<std::size_t>(cluster) * groups.size() + group];
  }
};

/// `group_of[i]` is member i's demographic group, `labels[i]` its hard
/// cluster. Groups are reported in `groups` order (all must be listed).
DeviationReport deviation(std::span<const std::string> group_of, std::span<const int> labels,
                          int k, std::vector<std::string> groups);

std::vector<std::string> gender_groups(const CohortDataset& cohort);
std::vector<std::string> age_band_groups(const CohortDataset& cohort, const AgeBands& bands = {});

void write_deviation_csv(std::ostream& out, const DeviationReport& report,
                         std::span<const std::string> cluster_names);

}  // namespace habitforge
