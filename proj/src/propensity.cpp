#include "habitforge/propensity.hpp"

#include <map>
#include <numeric>
#include <set>

#include <fmt/format.h>

namespace habitforge {

std::string_view to_string(Covariate covariate) {
  switch (covariate) {
    case Covariate::age: return "age";
    case Covariate::gender: return "gender";
    case Covariate::bmi: return "bmi";
    case Covariate::contract_start: return "contract_start";
    case Covariate::main_club: return "main_club";
    case Covariate::membership_category: return "membership_category";
    case Covariate::experience_level: return "experience_level";
    case Covariate::cluster: return "cluster";
  }
  return "?";
}

namespace {

void append_standardized(EncodedCovariates& out, std::vector<std::vector<double>>& columns,
                         std::vector<double> values, std::string name) {
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / std::max(1.0, n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  // A constant column carries no information and would only duplicate the intercept.
  if (!(sd > 0)) return;
  for (double& v : values) v = (v - mean) / sd;
  columns.push_back(std::move(values));
  out.columns.push_back(std::move(name));
}

void append_one_hot(EncodedCovariates& out, std::vector<std::vector<double>>& columns,
                    const std::vector<std::string>& values, std::string_view name) {
  const std::set<std::string> levels(values.begin(), values.end());
  auto it = levels.begin();
  if (it == levels.end()) return;
  for (++it; it != levels.end(); ++it) {
    std::vector<double> col(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) col[i] = values[i] == *it ? 1.0 : 0.0;
    columns.push_back(std::move(col));
    out.columns.push_back(fmt::format("{}={}", name, *it));
  }
}

}  // namespace

EncodedCovariates encode_covariates(const CohortDataset& cohort, std::span<const std::size_t> rows,
                                    std::span<const int> cluster_labels,
                                    std::span<const Covariate> covariates) {
  EncodedCovariates out;
  std::vector<std::vector<double>> columns;
  const auto member = [&](std::size_t r) -> const MemberProfile& { return cohort.member(rows[r]); };
  for (const Covariate cov : covariates) {
    std::vector<double> numeric(rows.size());
    std::vector<std::string> labels(rows.size());
    switch (cov) {
      case Covariate::age:
        for (std::size_t r = 0; r < rows.size(); ++r) numeric[r] = member(r).age;
        append_standardized(out, columns, std::move(numeric), "age");
        break;
      case Covariate::bmi:
        for (std::size_t r = 0; r < rows.size(); ++r) numeric[r] = member(r).bmi;
        append_standardized(out, columns, std::move(numeric), "bmi");
        break;
      case Covariate::contract_start: {
        Date epoch = Date::max();
        for (std::size_t r = 0; r < rows.size(); ++r) epoch = std::min(epoch, member(r).contract_start);
        for (std::size_t r = 0; r < rows.size(); ++r) {
          numeric[r] = static_cast<double>((member(r).contract_start - epoch).count());
        }
        append_standardized(out, columns, std::move(numeric), "contract_start");
        break;
      }
      case Covariate::gender:
        for (std::size_t r = 0; r < rows.size(); ++r) labels[r] = std::string(to_string(member(r).gender));
        append_one_hot(out, columns, labels, "gender");
        break;
      case Covariate::main_club:
        for (std::size_t r = 0; r < rows.size(); ++r) labels[r] = member(r).main_club;
        append_one_hot(out, columns, labels, "main_club");
        break;
      case Covariate::membership_category:
        for (std::size_t r = 0; r < rows.size(); ++r) labels[r] = member(r).membership_category;
        append_one_hot(out, columns, labels, "membership_category");
        break;
      case Covariate::experience_level:
        for (std::size_t r = 0; r < rows.size(); ++r) {
          const auto& e = member(r).experience_level;
          labels[r] = e ? std::to_string(*e) : std::string("absent");
        }
        append_one_hot(out, columns, labels, "experience_level");
        break;
      case Covariate::cluster:
        if (cluster_labels.size() != cohort.size()) {
          throw ValidationError("causal", "cluster labels do not cover the cohort");
        }
        for (std::size_t r = 0; r < rows.size(); ++r) labels[r] = std::to_string(cluster_labels[rows[r]]);
        append_one_hot(out, columns, labels, "cluster");
        break;
    }
  }
  out.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = columns[c][r];
    }
  }
  return out;
}

namespace {

bool separates(const Eigen::VectorXd& eta, std::span<const std::uint8_t> treated) {
  double min_t = std::numeric_limits<double>::infinity(), max_t = -min_t;
  double min_c = min_t, max_c = -min_t;
  for (std::size_t i = 0; i < treated.size(); ++i) {
    const double v = eta(static_cast<Eigen::Index>(i));
    if (treated[i]) {
      min_t = std::min(min_t, v);
      max_t = std::max(max_t, v);
    } else {
      min_c = std::min(min_c, v);
      max_c = std::max(max_c, v);
    }
  }
  return max_c < min_t || max_t < min_c;
}

}  // namespace

PropensityModel fit_propensity(const Eigen::MatrixXd& X, std::span<const std::uint8_t> treated,
                               const LogisticOptions& options, std::vector<std::string> columns) {
  const auto n_treated = std::count_if(treated.begin(), treated.end(), [](auto t) { return t != 0; });
  if (n_treated == 0 || static_cast<std::size_t>(n_treated) == treated.size()) {
    throw EstimationError("causal", "propensity model needs both treated and control members");
  }
  LogisticOptions opts = options;
  auto fit = fit_ridge_logistic(X, treated, opts);
  PropensityModel model;
  if (!fit.converged) {
    opts.lambda = options.lambda * 1000.0;
    fit = fit_ridge_logistic(X, treated, opts);
    model.ridge_increased = true;
    if (!fit.converged) {
      throw EstimationError("causal", fmt::format("propensity fit did not converge in {} iterations "
                                                  "even with ridge penalty {}",
                                                  opts.max_iters, opts.lambda));
    }
  }
  model.coefficients = fit.coefficients;
  model.columns = std::move(columns);
  model.lambda = opts.lambda;
  model.log_likelihood = fit.log_likelihood;
  model.iterations = fit.iterations;
  model.converged = fit.converged;
  const Eigen::VectorXd eta =
      (X * fit.coefficients.tail(X.cols())).array() + fit.coefficients(0);
  model.near_separation = separates(eta, treated);
  model.scores.resize(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    model.scores(i) = detail::sigmoid(std::clamp(eta(i), -35.0, 35.0));
  }
  return model;
}

MatchResult match_nearest(std::span<const double> scores, std::span<const std::uint8_t> treated,
                          std::optional<double> caliper) {
  if (scores.size() != treated.size()) {
    throw MatchingError("causal", "scores and treatment flags differ in length");
  }
  std::vector<std::size_t> treated_idx;
  std::set<std::pair<double, std::size_t>> controls;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (treated[i]) {
      treated_idx.push_back(i);
    } else {
      controls.emplace(scores[i], i);
    }
  }
  if (treated_idx.empty()) throw MatchingError("causal", "no treated members to match");
  if (controls.empty()) throw MatchingError("causal", "no control members to match against");
  std::stable_sort(treated_idx.begin(), treated_idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  MatchResult out;
  for (const std::size_t t : treated_idx) {
    if (controls.empty()) {
      out.unmatched_treated.push_back(t);
      continue;
    }
    const double s = scores[t];
    auto above = controls.lower_bound({s, 0});
    auto best = controls.end();
    if (above != controls.begin()) {
      // search the run of equal scores below for the lowest index
      auto below = std::prev(above);
      auto first = controls.lower_bound({below->first, 0});
      best = first;
    }
    if (above != controls.end()) {
      if (best == controls.end() || above->first - s < s - best->first) best = above;
    }
    const double distance = std::abs(best->first - s);
    if (caliper && distance > *caliper) {
      out.unmatched_treated.push_back(t);
      continue;
    }
    out.pairs.push_back({t, best->second, distance});
    controls.erase(best);
  }
  return out;
}

}  // namespace habitforge
