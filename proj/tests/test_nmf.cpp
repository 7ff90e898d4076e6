#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "habitforge/cluster.hpp"
#include "habitforge/error.hpp"
#include "habitforge/nmf.hpp"
#include "habitforge/random.hpp"
#include "habitforge/synth.hpp"

using namespace habitforge;

namespace {

Eigen::MatrixXd random_nonnegative(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd A(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) A(i, j) = rng.bernoulli(0.3) ? 0.0 : rng.uniform(0.0, 5.0);
  }
  return A;
}

// Best label agreement over all relabelings of the k predicted clusters.
double permutation_accuracy(const std::vector<int>& truth, const std::vector<int>& predicted, int k) {
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += perm[static_cast<std::size_t>(predicted[i])] == truth[i];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(truth.size());
}

}  // namespace

TEST_SUITE("nmf") {
  TEST_CASE("rank-1 matrix is reconstructed") {
    Eigen::VectorXd u(6), v(9);
    u << 1, 2, 0.5, 3, 0.1, 4;
    v << 0.3, 1, 2, 0, 5, 1.5, 0.2, 0.7, 3;
    const Eigen::MatrixXd A = u * v.transpose();
    NmfOptions options;
    options.k = 1;
    options.tol = 0;
    options.max_iters = 500;
    const auto r = nmf_factorize(A, options);
    CHECK((A - r.W * r.H).norm() / A.norm() < 1e-6);
  }

  TEST_CASE("objective never increases and factors stay nonnegative") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto A = random_nonnegative(40, 30, 100 + seed);
      NmfOptions options;
      options.init = seed % 2 ? NmfInit::random : NmfInit::nndsvda;
      options.seed = seed;
      options.max_iters = 200;
      options.tol = 0;
      const auto r = nmf_factorize(A, options);
      for (std::size_t t = 1; t < r.objective.size(); ++t) {
        CHECK(r.objective[t] <= r.objective[t - 1] * (1 + 1e-12) + 1e-12);
      }
      CHECK(r.W.minCoeff() >= 0);
      CHECK(r.H.minCoeff() >= 0);
    }
  }

  TEST_CASE("float instantiation works") {
    const Eigen::MatrixXf A = random_nonnegative(20, 10, 3).cast<float>();
    NmfOptions options;
    options.k = 3;
    const auto r = nmf_factorize(A, options);
    CHECK(r.W.rows() == 20);
    CHECK(r.H.cols() == 10);
  }

  TEST_CASE("invalid inputs") {
    Eigen::MatrixXd A = Eigen::MatrixXd::Ones(4, 4);
    NmfOptions options;
    options.k = 5;
    CHECK_THROWS_AS(nmf_factorize(A, options), DomainError);
    options.k = 2;
    A(1, 1) = -1;
    CHECK_THROWS_AS(nmf_factorize(A, options), DomainError);
  }

  TEST_CASE("seeded runs are deterministic") {
    const auto A = random_nonnegative(30, 20, 9);
    NmfOptions options;
    options.k = 4;
    options.init = NmfInit::random;
    options.seed = 42;
    const auto a = nmf_factorize(A, options), b = nmf_factorize(A, options);
    CHECK(a.W == b.W);
    CHECK(a.H == b.H);
  }

  TEST_CASE("random seeds give different starts") {
    const auto A = random_nonnegative(30, 20, 9);
    NmfOptions options;
    options.k = 4;
    options.init = NmfInit::random;
    options.max_iters = 1;
    options.seed = 1;
    const auto a = nmf_factorize(A, options);
    options.seed = 2;
    const auto b = nmf_factorize(A, options);
    CHECK(a.objective[0] != b.objective[0]);
  }

  TEST_CASE("SVD start is positive and ignores the seed") {
    const auto A = random_nonnegative(50, 30, 4);
    NmfOptions options;
    options.k = 3;
    options.max_iters = 1;
    const auto a = nmf_factorize(A, options);
    options.seed = 99;
    const auto b = nmf_factorize(A, options);
    CHECK(a.W == b.W);
    CHECK(a.W.minCoeff() > 0);
    CHECK(a.H.minCoeff() > 0);
  }

  TEST_CASE("SVD start is exact for a rank-1 matrix") {
    Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(12, 0.5, 3.0), v = Eigen::VectorXd::LinSpaced(8, 1.0, 0.2);
    const Eigen::MatrixXd A = u * v.transpose();
    NmfOptions options;
    options.k = 1;
    options.max_iters = 1;
    const auto r = nmf_factorize(A, options);
    CHECK(std::sqrt(r.objective[0]) / A.norm() < 1e-10);
  }

  TEST_CASE("projection onto a fixed basis recovers exact weights") {
    Eigen::MatrixXd H(2, 4);
    H << 1, 0, 1, 0, 0, 1, 0, 2;
    Eigen::MatrixXd W(3, 2);
    W << 1, 0, 0.5, 2, 0, 3;
    NmfOptions options;
    options.tol = 0;
    options.max_iters = 3000;
    const auto P = project_onto_basis(W * H, H, options);
    CHECK((P - W).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_SUITE("cluster") {
  TEST_CASE("softmax of constants is uniform") {
    const Eigen::MatrixXd W = Eigen::MatrixXd::Constant(1, 5, 3.7);
    const auto p = cluster_probabilities(W);
    for (int j = 0; j < 5; ++j) CHECK(p(0, j) == doctest::Approx(0.2));
  }

  TEST_CASE("softmax of a unit row") {
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(1, 5);
    W(0, 0) = 1;
    const auto p = cluster_probabilities(W);
    const double e = std::exp(1.0);
    CHECK(p(0, 0) == doctest::Approx(e / (e + 4)).epsilon(1e-12));
    CHECK(p(0, 0) == doctest::Approx(0.4046).epsilon(1e-3));
    for (int j = 1; j < 5; ++j) CHECK(p(0, j) == doctest::Approx(1 / (e + 4)).epsilon(1e-12));
  }

  TEST_CASE("softmax rows sum to one and keep the argmax") {
    const auto W = random_nonnegative(50, 5, 4);
    const auto p = cluster_probabilities(W);
    const auto labels = hard_labels(p);
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-9);
      Eigen::Index arg = 0;
      W.row(i).maxCoeff(&arg);
      CHECK(labels[static_cast<std::size_t>(i)] == arg);
    }
  }

  TEST_CASE("transition of identical labels is diagonal") {
    const std::vector<std::string> ids = {"a", "b", "c", "d"};
    const std::vector<int> labels = {0, 1, 2, 1};
    const auto t = transition_matrix(ids, labels, ids, labels, 3);
    CHECK(t.total() == 4);
    CHECK(t.diagonal_share() == 1.0);
    CHECK(t.counts(1, 1) == 2);
    CHECK(t.counts(0, 1) == 0);
  }

  TEST_CASE("a single move among ten members") {
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back(std::to_string(i));
    std::vector<int> from(10, 0), to(10, 0);
    to[3] = 1;
    const auto t = transition_matrix(ids, from, ids, to, 2);
    CHECK(t.counts(0, 1) == 1);
    CHECK(t.percent(0, 1) == doctest::Approx(10.0));
    CHECK(t.total() == 10);
    CHECK(t.percent.sum() == doctest::Approx(100.0));
  }

  TEST_CASE("transition needs matching member ids") {
    const std::vector<std::string> a = {"x", "y"}, b = {"x", "z"};
    const std::vector<int> labels = {0, 1};
    CHECK_THROWS_AS(transition_matrix(a, labels, b, labels, 2), ValidationError);
  }

  TEST_CASE("membership probability CDFs") {
    Eigen::MatrixXd p(2, 2);
    p << 0.4, 0.6, 0.6, 0.4;
    const std::vector<int> labels = {0, 0};
    const auto cdf = membership_prob_cdf(p, labels, 0);
    REQUIRE(cdf.size() == 2);
    CHECK(cdf[0] == CdfPoint{0.4, 0.5});
    CHECK(cdf[1] == CdfPoint{0.6, 1.0});

    Eigen::MatrixXd certain = Eigen::MatrixXd::Zero(3, 2);
    certain.col(0).setOnes();
    const auto step = membership_prob_cdf(certain, std::vector<int>{0, 0, 0}, 0);
    REQUIRE(step.size() == 1);
    CHECK(step[0] == CdfPoint{1.0, 1.0});
  }

  TEST_CASE("noise-free archetype cohort is recovered exactly") {
    auto spec = preset_spec("low-noise");
    spec.n_members = 1500;
    spec.seed = 5;
    const auto synth = generate_cohort(spec);
    NmfOptions options;
    options.seed = 1;
    const auto model = fit_cluster_model(build_matrix(synth.cohort, 6), options);
    std::vector<int> truth, predicted;
    for (std::size_t i = 0; i < synth.truth.size(); ++i) {
      if (model.zero_row[i]) continue;
      truth.push_back(synth.truth[i].archetype);
      predicted.push_back(model.labels[i]);
    }
    CHECK(permutation_accuracy(truth, predicted, 5) == 1.0);
    CHECK(model.names == std::vector<std::string>{"morning", "noon", "afternoon", "evening", "night"});
  }

  TEST_CASE("the most crowded archetype has the least confident memberships") {
    auto spec = preset_spec("default");
    spec.n_members = 2000;
    spec.seed = 8;
    const auto synth = generate_cohort(spec);
    NmfOptions options;
    const auto model = fit_cluster_model(build_matrix(synth.cohort, 6), options);
    std::vector<double> medians;
    for (int c = 0; c < model.k; ++c) {
      auto cdf = membership_prob_cdf(model.probabilities, model.labels, c, model.zero_row);
      REQUIRE_FALSE(cdf.empty());
      const auto it = std::find_if(cdf.begin(), cdf.end(), [](const CdfPoint& p) { return p.cumulative >= 0.5; });
      medians.push_back(it->value);
    }
    // evening (18:00, 17:00 at weekends) sits within an hour or two of afternoon and night
    const auto bottom = std::min_element(medians.begin(), medians.end()) - medians.begin();
    CHECK(model.names[static_cast<std::size_t>(bottom)] == "evening");
  }

  TEST_CASE("cluster model JSON round-trip") {
    auto spec = preset_spec("default");
    spec.n_members = 300;
    const auto synth = generate_cohort(spec);
    NmfOptions options;
    const auto model = fit_cluster_model(build_matrix(synth.cohort, 6), options);
    const auto back = cluster_model_from_json(to_json(model));
    CHECK(back.labels == model.labels);
    CHECK(back.H == model.H);
    CHECK(back.W == model.W);
    CHECK(back.probabilities == model.probabilities);
    CHECK(to_json(back).dump() == to_json(model).dump());
  }
}
