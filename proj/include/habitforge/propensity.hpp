#pragma once

// Propensity scores: covariate encoding, ridge-penalized logistic regression
// fit by damped Newton iterations, and greedy nearest-neighbor matching
// without replacement.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "habitforge/core.hpp"
#include "habitforge/error.hpp"

namespace habitforge {

struct LogisticOptions {
  double lambda = 1e-3;  // ridge penalty on all coefficients but the intercept
  int max_iters = 100;
  double grad_tol = 1e-8;  // max-norm of the penalized gradient
};

template <typename Scalar>
struct LogisticFit {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> coefficients;  // [intercept, features...]
  Scalar log_likelihood = 0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

template <typename Scalar>
Scalar log1p_exp(Scalar eta) {
  return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

template <typename Scalar>
Scalar sigmoid(Scalar eta) {
  if (eta >= 0) return Scalar(1) / (Scalar(1) + std::exp(-eta));
  const Scalar e = std::exp(eta);
  return e / (Scalar(1) + e);
}

}  // namespace detail

/// Maximizes sum_i [y_i eta_i - log(1 + e^eta_i)] - lambda/2 |beta_features|^2
/// with eta = b0 + X beta. Newton steps are halved until the objective
/// improves. `converged` is false when the iteration cap is hit.
template <typename Derived>
LogisticFit<typename Derived::Scalar> fit_ridge_logistic(const Eigen::MatrixBase<Derived>& X,
                                                         std::span<const std::uint8_t> y,
                                                         const LogisticOptions& options) {
  using Scalar = typename Derived::Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols() + 1;
  if (static_cast<std::size_t>(n) != y.size()) {
    throw EstimationError("causal", "design rows and labels differ in length");
  }
  Matrix design(n, p);
  design.col(0).setOnes();
  design.rightCols(p - 1) = X;
  Vector target(n);
  for (Eigen::Index i = 0; i < n; ++i) target(i) = y[static_cast<std::size_t>(i)] ? 1 : 0;
  Vector penalty = Vector::Constant(p, static_cast<Scalar>(options.lambda));
  penalty(0) = 0;

  const auto objective = [&](const Vector& beta) {
    const Vector eta = design * beta;
    Scalar ll = 0;
    for (Eigen::Index i = 0; i < n; ++i) ll += target(i) * eta(i) - detail::log1p_exp(eta(i));
    return -ll + Scalar(0.5) * (penalty.array() * beta.array().square()).sum();
  };

  LogisticFit<Scalar> fit;
  Vector beta = Vector::Zero(p);
  Scalar current = objective(beta);
  for (int it = 0; it < options.max_iters; ++it) {
    const Vector eta = design * beta;
    Vector mu(n), weight(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = detail::sigmoid(eta(i));
      weight(i) = mu(i) * (1 - mu(i));
    }
    const Vector gradient = design.transpose() * (mu - target) + penalty.cwiseProduct(beta);
    if (gradient.template lpNorm<Eigen::Infinity>() < static_cast<Scalar>(options.grad_tol)) {
      fit.converged = true;
      break;
    }
    Matrix hessian = design.transpose() * weight.asDiagonal() * design;
    hessian.diagonal() += penalty;
    hessian.diagonal().array() += std::numeric_limits<Scalar>::epsilon();
    const Vector step = hessian.ldlt().solve(gradient);
    Scalar scale = 1;
    Vector candidate = beta - step;
    Scalar value = objective(candidate);
    // Inside the quadratic region the predicted decrease is below the
    // objective's rounding noise; comparing values there would stall.
    const Scalar decrement = gradient.dot(step);
    const bool tiny = decrement < Scalar(1e-9) * (Scalar(1) + std::abs(current));
    if (tiny && std::isfinite(static_cast<double>(value))) value = std::min(value, current);
    for (int halving = 0; halving < 40 && !(value <= current); ++halving) {
      scale /= 2;
      candidate = beta - scale * step;
      value = objective(candidate);
    }
    fit.iterations = it + 1;
    if (!std::isfinite(static_cast<double>(value)) || !(value <= current)) break;
    beta = candidate;
    current = value;
  }
  fit.coefficients = beta;
  fit.log_likelihood = -(current - Scalar(0.5) * (penalty.array() * beta.array().square()).sum());
  return fit;
}

enum class Covariate {
  age,
  gender,
  bmi,
  contract_start,
  main_club,
  membership_category,
  experience_level,
  cluster,
};

std::string_view to_string(Covariate covariate);

/// Numeric covariates are z-scored over the encoded rows (contract_start as
/// days since the earliest start); categoricals are one-hot with the first
/// level (ascending) dropped. A missing experience_level is its own level.
struct EncodedCovariates {
  Eigen::MatrixXd X;
  std::vector<std::string> columns;
};

EncodedCovariates encode_covariates(const CohortDataset& cohort, std::span<const std::size_t> rows,
                                    std::span<const int> cluster_labels,
                                    std::span<const Covariate> covariates);

struct PropensityModel {
  Eigen::VectorXd coefficients;
  std::vector<std::string> columns;  // excludes the intercept
  Eigen::VectorXd scores;            // in (0, 1)
  double lambda = 0.0;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  bool near_separation = false;  // a linear-predictor threshold splits treated from controls
  bool ridge_increased = false;
};

/// Fits the propensity model. If the first fit diverges the ridge penalty is
/// raised once (x1000); a second failure throws EstimationError.
PropensityModel fit_propensity(const Eigen::MatrixXd& X, std::span<const std::uint8_t> treated,
                               const LogisticOptions& options = {},
                               std::vector<std::string> columns = {});

struct MatchedPair {
  std::size_t treated = 0;
  std::size_t control = 0;
  double distance = 0.0;
};

struct MatchResult {
  std::vector<MatchedPair> pairs;
  std::vector<std::size_t> unmatched_treated;
};

/// Treated units in descending score order each take the unused control with
/// the smallest |score difference| (ties: lower control score, then index).
/// With a caliper, treated units without a control inside it stay unmatched.
/// Throws MatchingError without treated or control units.
MatchResult match_nearest(std::span<const double> scores, std::span<const std::uint8_t> treated,
                          std::optional<double> caliper = std::nullopt);

}  // namespace habitforge
