#pragma once

// Non-negative matrix factorization A ~= W H by Lee-Seung multiplicative
// updates on the Frobenius loss, plus the fixed-basis projection and the
// row-wise softmax used for soft cluster membership.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "habitforge/error.hpp"
#include "habitforge/random.hpp"

namespace habitforge {

enum class NmfInit {
  nndsvda,  // SVD-based, deterministic; zeros filled with mean(A)
  random,   // seeded uniform on (0, 1] scaled by mean(A) / k
};

inline std::string_view to_string(NmfInit init) {
  return init == NmfInit::nndsvda ? "nndsvda" : "random";
}

struct NmfOptions {
  NmfInit init = NmfInit::nndsvda;
  int k = 5;
  int max_iters = 1000;
  double tol = 1e-7;  // stop when relative objective improvement falls below
  std::uint64_t seed = 0;  // used by random init only
};

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct NmfResult {
  MatrixX<Scalar> W;  // rows x k
  MatrixX<Scalar> H;  // k x cols
  /// objective[0] is the initial loss, objective[t] the loss after update t.
  std::vector<Scalar> objective;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline constexpr double kDenominatorFloor = 1e-12;

template <typename Scalar>
MatrixX<Scalar> random_factor(Eigen::Index rows, Eigen::Index cols, Scalar scale, Rng& rng) {
  MatrixX<Scalar> out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      out(i, j) = scale * static_cast<Scalar>(rng.uniform_positive());
    }
  }
  return out;
}

template <typename Derived>
void check_nonnegative(const Eigen::MatrixBase<Derived>& A) {
  if (A.size() == 0) return;
  if (!A.allFinite() || A.minCoeff() < 0) {
    throw DomainError("nmf", "input matrix must be finite and entrywise nonnegative");
  }
}

template <typename Scalar>
Scalar init_scale(Scalar mean, int k) {
  return mean > 0 ? mean / static_cast<Scalar>(k) : Scalar(1);
}

/// Nonnegative double SVD of the top-k singular triplets, computed from the
/// eigendecomposition of A^T A. Entries that come out zero are set to mean(A).
template <typename Scalar>
void nndsvda(const MatrixX<Scalar>& A, int k, MatrixX<Scalar>& W, MatrixX<Scalar>& H) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index cols = A.cols();
  W.setZero(A.rows(), k);
  H.setZero(k, cols);
  const MatrixX<Scalar> gram = A.transpose() * A;
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(gram);
  for (int j = 0; j < k; ++j) {
    const Eigen::Index c = cols - 1 - j;
    const Scalar sigma = std::sqrt(std::max(eig.eigenvalues()(c), Scalar(0)));
    if (sigma <= std::numeric_limits<Scalar>::min()) break;
    Vector v = eig.eigenvectors().col(c);
    // Fix the sign so the larger positive part comes first.
    if (v.cwiseMax(Scalar(0)).norm() < (-v).cwiseMax(Scalar(0)).norm()) v = -v;
    const Vector u = A * v / sigma;
    if (j == 0) {
      W.col(0) = std::sqrt(sigma) * u.cwiseAbs();
      H.row(0) = std::sqrt(sigma) * v.cwiseAbs().transpose();
      continue;
    }
    const Vector up = u.cwiseMax(Scalar(0)), un = (-u).cwiseMax(Scalar(0));
    const Vector vp = v.cwiseMax(Scalar(0)), vn = (-v).cwiseMax(Scalar(0));
    const Scalar mp = up.norm() * vp.norm();
    const Scalar mn = un.norm() * vn.norm();
    const bool positive = mp >= mn;
    const Scalar m = positive ? mp : mn;
    if (m <= std::numeric_limits<Scalar>::min()) continue;
    const Scalar lambda = std::sqrt(sigma * m);
    const Vector& x = positive ? up : un;
    const Vector& y = positive ? vp : vn;
    W.col(j) = lambda * x / x.norm();
    H.row(j) = (lambda * y / y.norm()).transpose();
  }
  const Scalar mean = A.mean() > 0 ? A.mean() : Scalar(1);
  const Scalar zero = mean * Scalar(1e-9);
  W = W.unaryExpr([&](Scalar x) { return x < zero ? mean : x; });
  H = H.unaryExpr([&](Scalar x) { return x < zero ? mean : x; });
}

template <typename Scalar>
bool improvement_below(Scalar previous, Scalar current, double tol) {
  if (previous <= std::numeric_limits<Scalar>::min()) return true;
  return (previous - current) / previous < static_cast<Scalar>(tol);
}

}  // namespace detail

/// Squared Frobenius reconstruction error ||A - W H||^2.
template <typename DA, typename DW, typename DH>
typename DA::Scalar nmf_objective(const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DW>& W,
                                  const Eigen::MatrixBase<DH>& H) {
  return (A - W * H).squaredNorm();
}

/// Factorizes a nonnegative matrix into nonnegative W (rows x k) and H (k x cols).
/// Throws DomainError for negative entries or k outside [1, min(rows, cols)].
template <typename Derived>
NmfResult<typename Derived::Scalar> nmf_factorize(const Eigen::MatrixBase<Derived>& A,
                                                  const NmfOptions& options) {
  using Scalar = typename Derived::Scalar;
  detail::check_nonnegative(A);
  const Eigen::Index rows = A.rows();
  const Eigen::Index cols = A.cols();
  if (options.k < 1 || options.k > std::min(rows, cols)) {
    throw DomainError("nmf", fmt::format("k = {} outside [1, min({}, {})]", options.k, rows, cols));
  }
  const MatrixX<Scalar> data = A;
  const Scalar floor = static_cast<Scalar>(detail::kDenominatorFloor);
  NmfResult<Scalar> out;
  if (options.init == NmfInit::nndsvda) {
    detail::nndsvda(data, options.k, out.W, out.H);
  } else {
    Rng rng(options.seed);
    const Scalar scale = detail::init_scale<Scalar>(data.mean(), options.k);
    out.W = detail::random_factor<Scalar>(rows, options.k, scale, rng);
    out.H = detail::random_factor<Scalar>(options.k, cols, scale, rng);
  }
  out.objective.push_back(nmf_objective(data, out.W, out.H));

  for (int it = 0; it < options.max_iters; ++it) {
    const MatrixX<Scalar> gram_w = out.W.transpose() * out.W;
    out.H = out.H.cwiseProduct((out.W.transpose() * data)
                                   .cwiseQuotient((gram_w * out.H).cwiseMax(floor)));
    const MatrixX<Scalar> gram_h = out.H * out.H.transpose();
    out.W = out.W.cwiseProduct((data * out.H.transpose())
                                   .cwiseQuotient((out.W * gram_h).cwiseMax(floor)));
    out.objective.push_back(nmf_objective(data, out.W, out.H));
    out.iterations = it + 1;
    if (detail::improvement_below(out.objective[out.objective.size() - 2], out.objective.back(),
                                  options.tol)) {
      out.converged = true;
      break;
    }
  }
  return out;
}

/// Nonnegative least squares of each row of A onto the fixed basis H
/// (multiplicative updates on W only). Returns W (rows x k).
template <typename DA, typename DH>
MatrixX<typename DA::Scalar> project_onto_basis(const Eigen::MatrixBase<DA>& A,
                                                const Eigen::MatrixBase<DH>& H,
                                                const NmfOptions& options) {
  using Scalar = typename DA::Scalar;
  detail::check_nonnegative(A);
  detail::check_nonnegative(H);
  if (A.cols() != H.cols()) throw DomainError("nmf", "feature count mismatch in projection");
  const MatrixX<Scalar> data = A;
  const MatrixX<Scalar> basis = H;
  const auto k = static_cast<int>(basis.rows());
  const Scalar floor = static_cast<Scalar>(detail::kDenominatorFloor);
  Rng rng(options.seed);
  MatrixX<Scalar> W =
      detail::random_factor<Scalar>(data.rows(), k, detail::init_scale<Scalar>(data.mean(), k), rng);
  const MatrixX<Scalar> gram_h = basis * basis.transpose();
  const MatrixX<Scalar> numerator = data * basis.transpose();
  Scalar previous = nmf_objective(data, W, basis);
  for (int it = 0; it < options.max_iters; ++it) {
    W = W.cwiseProduct(numerator.cwiseQuotient((W * gram_h).cwiseMax(floor)));
    const Scalar current = nmf_objective(data, W, basis);
    if (detail::improvement_below(previous, current, options.tol)) break;
    previous = current;
  }
  return W;
}

/// Row-wise softmax. Each output row sums to one.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& W) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out(W.rows(), W.cols());
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    const Scalar peak = W.row(i).maxCoeff();
    out.row(i) = (W.row(i).array() - peak).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

}  // namespace habitforge
