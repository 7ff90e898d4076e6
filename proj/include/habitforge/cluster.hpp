#pragma once

// Behavioral clusters from the visit matrix: factorization, soft membership,
// hard labels, membership-probability CDFs and the cross-window transition
// matrix.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "habitforge/nmf.hpp"
#include "habitforge/stats.hpp"
#include "habitforge/vectorize.hpp"

namespace habitforge {

struct ClusterModel {
  int k = 0;
  int window_weeks = 0;
  std::uint64_t seed = 0;
  std::string init = "nndsvda";
  int iterations = 0;
  bool converged = false;
  double final_error = 0.0;  // ||A - WH||_F / ||A||_F over factorized rows
  Eigen::MatrixXd H;         // k x 126, components ordered by peak hour
  Eigen::MatrixXd W;         // members x k; zero rows stay zero
  Eigen::MatrixXd probabilities;
  std::vector<int> labels;
  std::vector<std::string> member_ids;
  std::vector<bool> zero_row;
  std::vector<std::string> names;
  std::vector<double> objective;

  std::size_t size() const { return labels.size(); }
};

/// Softmax of each W row.
Eigen::MatrixXd cluster_probabilities(const Eigen::MatrixXd& W);

/// Index of each row maximum (first on ties).
std::vector<int> hard_labels(const Eigen::MatrixXd& probabilities);

/// Hour (6..23) with the largest component mass summed over days.
int peak_hour(const Eigen::RowVectorXd& component);

/// morning/noon/afternoon/evening/night for k = 5, cluster0.. otherwise.
std::vector<std::string> cluster_names(int k);

/// Factorizes the nonzero rows of `matrix`. Zero rows are left out of the fit
/// and receive a uniform probability row. Components are reordered by peak hour.
ClusterModel fit_cluster_model(const VisitMatrix& matrix, const NmfOptions& options);

/// Projects `matrix` onto the fixed components of `base`.
ClusterModel project_cluster_model(const VisitMatrix& matrix, const ClusterModel& base,
                                   const NmfOptions& options);

struct TransitionMatrix {
  int k = 0;
  Eigen::MatrixXi counts;
  Eigen::MatrixXd percent;      // of all members; sums to 100
  Eigen::MatrixXd row_percent;  // per origin cluster

  int total() const { return counts.sum(); }
  double diagonal_share() const;
};

/// Throws ValidationError unless both label sets cover the same member ids.
TransitionMatrix transition_matrix(std::span<const std::string> ids_from,
                                   std::span<const int> labels_from,
                                   std::span<const std::string> ids_to,
                                   std::span<const int> labels_to, int k);

/// Empirical CDF of column `cluster` over members hard-assigned to it.
/// Rows flagged in `zero_row` (when given) are skipped.
std::vector<CdfPoint> membership_prob_cdf(const Eigen::MatrixXd& probabilities,
                                          std::span<const int> labels, int cluster,
                                          const std::vector<bool>& zero_row = {});

nlohmann::json to_json(const ClusterModel& model);
ClusterModel cluster_model_from_json(const nlohmann::json& j);

void write_transition_csv(std::ostream& out, const TransitionMatrix& t,
                          std::span<const std::string> names);

}  // namespace habitforge
