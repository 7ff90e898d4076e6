#include "habitforge/cluster.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include <fmt/format.h>

#include "habitforge/error.hpp"

namespace habitforge {

Eigen::MatrixXd cluster_probabilities(const Eigen::MatrixXd& W) { return softmax_rows(W); }

std::vector<int> hard_labels(const Eigen::MatrixXd& probabilities) {
  std::vector<int> out(static_cast<std::size_t>(probabilities.rows()));
  for (Eigen::Index i = 0; i < probabilities.rows(); ++i) {
    Eigen::Index best = 0;
    probabilities.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

int peak_hour(const Eigen::RowVectorXd& component) {
  Eigen::RowVectorXd by_hour = Eigen::RowVectorXd::Zero(kHourBins);
  for (int d = 0; d < kDays; ++d) by_hour += component.segment(d * kHourBins, kHourBins);
  Eigen::Index best = 0;
  by_hour.maxCoeff(&best);
  return kFirstHour + static_cast<int>(best);
}

std::vector<std::string> cluster_names(int k) {
  if (k == 5) return {"morning", "noon", "afternoon", "evening", "night"};
  std::vector<std::string> out;
  for (int j = 0; j < k; ++j) out.push_back(fmt::format("cluster{}", j));
  return out;
}

namespace {

std::vector<Eigen::Index> nonzero_rows(const VisitMatrix& matrix) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < matrix.size(); ++i) {
    if (!matrix.zero_row[static_cast<std::size_t>(i)]) rows.push_back(i);
  }
  return rows;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& source, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), source.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = source.row(rows[r]);
  return out;
}

// Scatters the factorized rows back and fills soft/hard memberships.
void finish_model(ClusterModel& model, const VisitMatrix& matrix,
                  const std::vector<Eigen::Index>& rows, const Eigen::MatrixXd& w_fit) {
  const auto n = matrix.size();
  model.window_weeks = matrix.window_weeks;
  model.member_ids = matrix.row_ids;
  model.zero_row = matrix.zero_row;
  model.W = Eigen::MatrixXd::Zero(n, model.k);
  model.probabilities = Eigen::MatrixXd::Constant(n, model.k, 1.0 / model.k);
  const Eigen::MatrixXd fitted_probs = cluster_probabilities(w_fit);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    model.W.row(rows[r]) = w_fit.row(static_cast<Eigen::Index>(r));
    model.probabilities.row(rows[r]) = fitted_probs.row(static_cast<Eigen::Index>(r));
  }
  model.labels = hard_labels(model.probabilities);
  model.names = cluster_names(model.k);
  const Eigen::MatrixXd data = gather_rows(matrix.rows, rows);
  const double norm = data.norm();
  model.final_error = norm > 0 ? (data - w_fit * model.H).norm() / norm : 0.0;
}

}  // namespace

ClusterModel fit_cluster_model(const VisitMatrix& matrix, const NmfOptions& options) {
  const auto rows = nonzero_rows(matrix);
  if (options.k < 1 || static_cast<Eigen::Index>(rows.size()) < options.k) {
    throw DomainError("nmf", fmt::format("k = {} exceeds the {} members with in-window visits",
                                         options.k, rows.size()));
  }
  const Eigen::MatrixXd data = gather_rows(matrix.rows, rows);
  auto fit = nmf_factorize(data, options);

  std::vector<int> order(static_cast<std::size_t>(options.k));
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> peaks(order.size());
  for (int j = 0; j < options.k; ++j) peaks[static_cast<std::size_t>(j)] = peak_hour(fit.H.row(j));
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return peaks[static_cast<std::size_t>(a)] < peaks[static_cast<std::size_t>(b)];
  });

  ClusterModel model;
  model.k = options.k;
  model.seed = options.seed;
  model.init = to_string(options.init);
  model.iterations = fit.iterations;
  model.converged = fit.converged;
  model.objective = fit.objective;
  model.H.resize(options.k, kFeatureCount);
  Eigen::MatrixXd w_fit(fit.W.rows(), options.k);
  for (int j = 0; j < options.k; ++j) {
    model.H.row(j) = fit.H.row(order[static_cast<std::size_t>(j)]);
    w_fit.col(j) = fit.W.col(order[static_cast<std::size_t>(j)]);
  }
  finish_model(model, matrix, rows, w_fit);
  return model;
}

ClusterModel project_cluster_model(const VisitMatrix& matrix, const ClusterModel& base,
                                   const NmfOptions& options) {
  const auto rows = nonzero_rows(matrix);
  ClusterModel model;
  model.k = base.k;
  model.seed = options.seed;
  model.H = base.H;
  Eigen::MatrixXd w_fit(0, base.k);
  if (!rows.empty()) {
    w_fit = project_onto_basis(gather_rows(matrix.rows, rows), base.H, options);
  }
  finish_model(model, matrix, rows, w_fit);
  return model;
}

double TransitionMatrix::diagonal_share() const {
  const int n = total();
  return n > 0 ? static_cast<double>(counts.diagonal().sum()) / n : 0.0;
}

TransitionMatrix transition_matrix(std::span<const std::string> ids_from,
                                   std::span<const int> labels_from,
                                   std::span<const std::string> ids_to,
                                   std::span<const int> labels_to, int k) {
  if (ids_from.size() != labels_from.size() || ids_to.size() != labels_to.size()) {
    throw ValidationError("nmf", "label and id vectors differ in length");
  }
  if (ids_from.size() != ids_to.size()) {
    throw ValidationError("nmf", "transition label sets cover different member counts");
  }
  std::unordered_map<std::string_view, int> later;
  for (std::size_t i = 0; i < ids_to.size(); ++i) later.emplace(ids_to[i], labels_to[i]);

  TransitionMatrix out;
  out.k = k;
  out.counts = Eigen::MatrixXi::Zero(k, k);
  for (std::size_t i = 0; i < ids_from.size(); ++i) {
    const auto it = later.find(ids_from[i]);
    if (it == later.end()) {
      throw ValidationError("nmf", fmt::format("member '{}' missing from later labels", ids_from[i]));
    }
    const int a = labels_from[i];
    const int b = it->second;
    if (a < 0 || a >= k || b < 0 || b >= k) throw ValidationError("nmf", "label outside 0..k-1");
    out.counts(a, b) += 1;
  }
  const double n = std::max(1, out.total());
  out.percent = out.counts.cast<double>() * (100.0 / n);
  out.row_percent = Eigen::MatrixXd::Zero(k, k);
  for (int a = 0; a < k; ++a) {
    const double row = out.counts.row(a).sum();
    if (row > 0) out.row_percent.row(a) = out.counts.row(a).cast<double>() * (100.0 / row);
  }
  return out;
}

std::vector<CdfPoint> membership_prob_cdf(const Eigen::MatrixXd& probabilities,
                                          std::span<const int> labels, int cluster,
                                          const std::vector<bool>& zero_row) {
  std::vector<double> values;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != cluster) continue;
    if (!zero_row.empty() && zero_row[i]) continue;
    values.push_back(probabilities(static_cast<Eigen::Index>(i), cluster));
  }
  return empirical_cdf(std::move(values));
}

nlohmann::json to_json(const ClusterModel& model) {
  nlohmann::json j;
  j["k"] = model.k;
  j["seed"] = model.seed;
  j["init"] = model.init;
  j["window_weeks"] = model.window_weeks;
  j["iterations"] = model.iterations;
  j["converged"] = model.converged;
  j["final_error"] = model.final_error;
  j["names"] = model.names;
  auto components = nlohmann::json::array();
  for (Eigen::Index r = 0; r < model.H.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(model.H.cols()));
    for (Eigen::Index c = 0; c < model.H.cols(); ++c) row[static_cast<std::size_t>(c)] = model.H(r, c);
    components.push_back(row);
  }
  j["H"] = std::move(components);
  auto members = nlohmann::json::array();
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    std::vector<double> probs(static_cast<std::size_t>(model.k)), weights(static_cast<std::size_t>(model.k));
    for (int c = 0; c < model.k; ++c) {
      probs[static_cast<std::size_t>(c)] = model.probabilities(row, c);
      weights[static_cast<std::size_t>(c)] = model.W(row, c);
    }
    members.push_back({{"member_id", model.member_ids[i]},
                       {"label", model.labels[i]},
                       {"zero_row", static_cast<bool>(model.zero_row[i])},
                       {"weights", weights},
                       {"probabilities", probs}});
  }
  j["members"] = std::move(members);
  return j;
}

ClusterModel cluster_model_from_json(const nlohmann::json& j) {
  try {
    ClusterModel model;
    model.k = j.at("k").get<int>();
    model.seed = j.at("seed").get<std::uint64_t>();
    model.init = j.value("init", std::string("nndsvda"));
    model.window_weeks = j.at("window_weeks").get<int>();
    model.iterations = j.at("iterations").get<int>();
    model.converged = j.at("converged").get<bool>();
    model.final_error = j.at("final_error").get<double>();
    model.names = j.at("names").get<std::vector<std::string>>();
    const auto& comps = j.at("H");
    model.H.resize(model.k, kFeatureCount);
    for (int r = 0; r < model.k; ++r) {
      const auto row = comps.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
      if (row.size() != static_cast<std::size_t>(kFeatureCount)) throw ParseError("nmf", "bad component length");
      for (int c = 0; c < kFeatureCount; ++c) model.H(r, c) = row[static_cast<std::size_t>(c)];
    }
    const auto& members = j.at("members");
    const auto n = static_cast<Eigen::Index>(members.size());
    model.probabilities.resize(n, model.k);
    model.W.resize(n, model.k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& m = members.at(static_cast<std::size_t>(i));
      model.member_ids.push_back(m.at("member_id").get<std::string>());
      model.labels.push_back(m.at("label").get<int>());
      model.zero_row.push_back(m.at("zero_row").get<bool>());
      const auto probs = m.at("probabilities").get<std::vector<double>>();
      const auto weights = m.at("weights").get<std::vector<double>>();
      if (probs.size() != static_cast<std::size_t>(model.k) || weights.size() != probs.size()) {
        throw ParseError("nmf", fmt::format("member {}: expected {} weights and probabilities", i, model.k));
      }
      for (int c = 0; c < model.k; ++c) {
        model.probabilities(i, c) = probs[static_cast<std::size_t>(c)];
        model.W(i, c) = weights[static_cast<std::size_t>(c)];
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("nmf", fmt::format("malformed cluster model: {}", e.what()));
  }
}

void write_transition_csv(std::ostream& out, const TransitionMatrix& t,
                          std::span<const std::string> names) {
  out << "from,to,count,percent,row_percent\n";
  for (int a = 0; a < t.k; ++a) {
    for (int b = 0; b < t.k; ++b) {
      out << fmt::format("{},{},{},{},{}\n", names[static_cast<std::size_t>(a)],
                         names[static_cast<std::size_t>(b)], t.counts(a, b), t.percent(a, b),
                         t.row_percent(a, b));
    }
  }
}

}  // namespace habitforge
