#include <doctest.h>

#include <numeric>

#include "habitforge/critical.hpp"
#include "habitforge/error.hpp"
#include "habitforge/random.hpp"
#include "habitforge/synth.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace habitforge;

TEST_SUITE("critical") {
  TEST_CASE("visit count within a window") {
    const auto m = hf_test::member("A");
    auto visits = hf_test::weekly_visits(m, {1, 4, 6, 7, 7});
    CHECK(visit_count_in_window(visits, m.contract_start, 6) == 3);
    CHECK(visit_count_in_window(visits, m.contract_start, 7) == 5);
    CHECK(visit_count_in_window({}, m.contract_start, 6) == 0);
    CHECK_THROWS_AS(visit_count_in_window(visits, m.contract_start, 0), DomainError);
    const auto cum = cumulative_visits(visits, m.contract_start);
    CHECK(cum[0] == 0);
    CHECK(cum[6] == 3);
    CHECK(cum[52] == 5);
  }

  TEST_CASE("separated groups") {
    const std::vector<int> counts = {1, 2, 3, 5, 6, 7};
    const std::vector<int> streaks = {2, 3, 4, 20, 30, 40};
    const auto e = critical_visits(counts, streaks, 6);
    CHECK(e.critical_visits == 3);
    CHECK(e.max_diff == 1.0);
    CHECK(e.n_short == 3);
    CHECK(e.n_long == 3);
  }

  TEST_CASE("identical groups tie at the smallest count") {
    const std::vector<int> counts = {4, 2, 9, 4, 2, 9};
    const std::vector<int> streaks = {1, 1, 1, 10, 10, 10};
    const auto e = critical_visits(counts, streaks, 6);
    CHECK(e.max_diff == 0.0);
    CHECK(e.critical_visits == 2);
  }

  TEST_CASE("empty survivor group is an estimation error") {
    const std::vector<int> counts = {1, 2};
    const std::vector<int> streaks = {52, 52};
    CHECK_THROWS_AS(critical_visits(counts, streaks, 6), EstimationError);
  }

  TEST_CASE("critical visits match the integer scan oracle") {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
      const int n = rng.uniform_int(2, 60);
      const int week = rng.uniform_int(6, 30);
      std::vector<int> counts(static_cast<std::size_t>(n)), streaks(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        streaks[static_cast<std::size_t>(i)] = rng.uniform_int(0, 52);
        counts[static_cast<std::size_t>(i)] = rng.uniform_int(0, 3 * week);
      }
      streaks[0] = 0;
      streaks[1] = 52;
      const auto e = critical_visits(counts, streaks, week);
      const auto o = hf_test::critical_oracle(counts, streaks, week);
      REQUIRE(e.critical_visits == o.x);
      REQUIRE(e.max_diff == o.diff);
      CHECK(e.max_diff >= 0.0);
      CHECK(e.max_diff <= 1.0);
    }
  }

  TEST_CASE("relabeling members leaves the estimate unchanged") {
    Rng rng(5);
    std::vector<int> counts(80), streaks(80);
    for (std::size_t i = 0; i < counts.size(); ++i) {
      streaks[i] = rng.uniform_int(0, 52);
      counts[i] = rng.uniform_int(0, 40);
    }
    const auto before = critical_visits(counts, streaks, 10);
    std::vector<std::size_t> order(counts.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)))]);
    }
    std::vector<int> c2, s2;
    for (auto i : order) {
      c2.push_back(counts[i]);
      s2.push_back(streaks[i]);
    }
    const auto after = critical_visits(c2, s2, 10);
    CHECK(after.critical_visits == before.critical_visits);
    CHECK(after.max_diff == before.max_diff);
  }

  TEST_CASE("everyone surviving the year flags every week") {
    std::vector<CumulativeVisits> visits(4);
    std::vector<SurvivalRecord> records(4);
    for (std::size_t i = 0; i < visits.size(); ++i) {
      for (int w = 0; w <= 52; ++w) visits[i][static_cast<std::size_t>(w)] = w * static_cast<int>(i + 1);
      records[i].streak_weeks = 52;
    }
    const auto table = critical_visit_table(visits, records);
    CHECK(table.entries.empty());
    CHECK(table.flagged_weeks.size() == 47);
  }

  TEST_CASE("three-point least squares") {
    CriticalVisitTable table;
    table.entries = {{6, 9}, {10, 15}, {20, 35}};
    const auto fit = fit_milestone_line(table);
    const auto [slope, intercept] = hf_test::ols_oracle({6, 10, 20}, {9, 15, 35});
    CHECK(fit.slope == doctest::Approx(slope).epsilon(1e-12));
    CHECK(fit.intercept == doctest::Approx(intercept).epsilon(1e-12));
    CHECK(fit.slope == doctest::Approx(1.884615).epsilon(1e-6));
    CHECK(fit.intercept == doctest::Approx(-2.948718).epsilon(1e-6));
  }

  TEST_CASE("exact line") {
    CriticalVisitTable table;
    for (int w = 6; w <= 52; ++w) table.entries.push_back({w, 2 * w - 5});
    const auto fit = fit_milestone_line(table);
    CHECK(fit.slope == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit.intercept == doctest::Approx(-5.0).epsilon(1e-12));
    CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    table.entries.resize(1);
    CHECK_THROWS_AS(fit_milestone_line(table), EstimationError);
  }

  TEST_CASE("least-squares residuals are orthogonal to the regressor") {
    Rng rng(17);
    std::vector<double> x, y;
    for (int i = 0; i < 40; ++i) {
      x.push_back(rng.uniform(0, 50));
      y.push_back(2 * x.back() - 5 + rng.normal());
    }
    const auto fit = ols_line<double>(x, y);
    double dot = 0, sum = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - fit.intercept - fit.slope * x[i];
      dot += r * x[i];
      sum += r;
    }
    CHECK(std::abs(dot) < 1e-9);
    CHECK(std::abs(sum) < 1e-9);
  }

  TEST_CASE("generated cohort gives a full table with a slope near two") {
    auto spec = preset_spec("default");
    spec.n_members = 4000;
    spec.seed = 12;
    const auto synth = generate_cohort(spec);
    const auto records = cohort_survival(cohort_attendance(synth.cohort));
    const auto visits = cohort_cumulative_visits(synth.cohort);
    const auto table = critical_visit_table(visits, records);
    CHECK(table.entries.size() + table.flagged_weeks.size() == 47);
    const auto fit = fit_milestone_line(table);
    CHECK(fit.slope >= 1.8);
    CHECK(fit.slope <= 2.2);
  }
}
