#include <doctest.h>

#include "habitforge/error.hpp"
#include "habitforge/random.hpp"
#include "habitforge/survival.hpp"
#include "habitforge/synth.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace habitforge;

namespace {

WeeklyAttendance series(std::initializer_list<int> weeks) {
  std::vector<bool> flags;
  for (int v : weeks) flags.push_back(v != 0);
  std::array<bool, 52> leading{};
  for (std::size_t i = 0; i < flags.size(); ++i) leading[i] = flags[i];
  return make_attendance(std::span<const bool>(leading.data(), flags.size()));
}

WeeklyAttendance random_series(Rng& rng, double p) {
  WeeklyAttendance a;
  for (auto& w : a.attended) w = rng.bernoulli(p);
  return a;
}

}  // namespace

TEST_SUITE("survival") {
  TEST_CASE("weekly attendance") {
    const auto m = hf_test::member("A");
    const auto start = m.contract_start;
    auto a = weekly_attendance("A", {{hf_test::visit("A", start + std::chrono::days(15), 8, 9)}}, start);
    for (int w = 1; w <= 52; ++w) CHECK(a.at(w) == (w == 3));
    a = weekly_attendance("A", {{hf_test::visit("A", start + std::chrono::days(14), 8, 9),
                                 hf_test::visit("A", start + std::chrono::days(20), 8, 9)}}, start);
    CHECK(a.at(3));
    CHECK(std::count(a.attended.begin(), a.attended.end(), true) == 1);
    a = weekly_attendance("A", {}, start);
    CHECK(std::none_of(a.attended.begin(), a.attended.end(), [](bool x) { return x; }));
    a = weekly_attendance("A", {{hf_test::visit("A", start + std::chrono::days(7 * 60), 8, 9)}}, start);
    CHECK(std::none_of(a.attended.begin(), a.attended.end(), [](bool x) { return x; }));
  }

  TEST_CASE("a single absent week is tolerated") {
    const auto r = survival_streak(series({1, 1, 1, 0, 1, 1}));
    CHECK(r.streak_weeks == 6);
    CHECK(r.gaps_used == 1);
    CHECK(r.gap_week_indices == std::vector<int>{4});
  }

  TEST_CASE("two absent weeks break the streak") {
    const auto r = survival_streak(series({1, 1, 0, 0, 1, 1}));
    CHECK(r.streak_weeks == 2);
    CHECK(r.gaps_used == 0);
    CHECK(survival_streak(series({0, 0, 1, 1})).streak_weeks == 0);
  }

  TEST_CASE("a full year") {
    WeeklyAttendance a;
    a.attended.fill(true);
    const auto r = survival_streak(a);
    CHECK(r.streak_weeks == 52);
    CHECK(r.gaps_used == 0);
  }

  TEST_CASE("larger tolerance") {
    CHECK(survival_streak(series({1, 0, 0, 1}), 2).streak_weeks == 4);
    CHECK(survival_streak(series({1, 0, 0, 1}), 0).streak_weeks == 1);
  }

  TEST_CASE("streak matches the prefix oracle") {
    Rng rng(2024);
    for (int i = 0; i < 2000; ++i) {
      const auto a = random_series(rng, 0.3 + 0.6 * rng.uniform());
      REQUIRE(survival_streak(a).streak_weeks == hf_test::streak_oracle(a.attended));
    }
  }

  TEST_CASE("streak invariants") {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
      auto a = random_series(rng, 0.75);
      const auto r = survival_streak(a);
      CHECK(r.streak_weeks <= 52);
      if (r.streak_weeks >= 1) CHECK(a.at(r.streak_weeks));
      for (std::size_t g = 1; g < r.gap_week_indices.size(); ++g) {
        CHECK(r.gap_week_indices[g] - r.gap_week_indices[g - 1] > 1);
      }
      a.attended[static_cast<std::size_t>(rng.uniform_int(0, 51))] = true;
      CHECK(survival_streak(a).streak_weeks >= r.streak_weeks);
    }
  }

  TEST_CASE("survival CDF of a point mass") {
    std::vector<SurvivalRecord> records(5);
    for (auto& r : records) r.streak_weeks = 10;
    const std::vector<std::string> keys(5, "all");
    const auto curves = survival_cdf(records, keys);
    REQUIRE(curves.size() == 1);
    for (int s = 0; s <= 52; ++s) CHECK(curves[0].cdf[static_cast<std::size_t>(s)] == (s >= 10 ? 1.0 : 0.0));
    CHECK(curves[0].reach_6 == 1.0);
    CHECK(curves[0].reach_17 == 0.0);
  }

  TEST_CASE("groups with identical streaks have identical curves") {
    std::vector<SurvivalRecord> records;
    std::vector<std::string> keys;
    for (int s : {3, 8, 8, 20}) {
      for (const char* g : {"x", "y"}) {
        records.push_back({"", s, 0, {}});
        keys.push_back(g);
      }
    }
    const auto curves = survival_cdf(records, keys);
    REQUIRE(curves.size() == 2);
    CHECK(curves[0].cdf == curves[1].cdf);
    for (std::size_t s = 1; s < curves[0].cdf.size(); ++s) CHECK(curves[0].cdf[s] >= curves[0].cdf[s - 1]);
    CHECK(curves[0].cdf.back() == 1.0);
  }

  TEST_CASE("groupings") {
    CHECK(parse_grouping("age_band") == SurvivalGrouping::age_band);
    CHECK_THROWS_AS(parse_grouping("weekday"), ValidationError);
  }

  TEST_CASE("gap usage statistics") {
    std::vector<SurvivalRecord> none(3);
    for (auto& r : none) r.streak_weeks = 8;
    const auto zero = gap_usage_stats(none, default_survival_bins());
    CHECK(std::all_of(zero.gaps_per_week.begin(), zero.gaps_per_week.end(), [](int v) { return v == 0; }));

    const auto one = survival_streak(series({1, 1, 1, 0, 1, 1}));
    const std::vector<SurvivalRecord> records = {one};
    const auto stats = gap_usage_stats(records, default_survival_bins());
    CHECK(stats.gaps_per_week[4] == 1);
    CHECK(stats.joint(6, 1) == 1);
    CHECK(stats.bins[1].rate_by_week[4] == 1.0);
    CHECK(stats.bins[1].rate_by_weeks_to_end[2] == 1.0);
  }

  TEST_CASE("survival bins") {
    const auto bins = parse_survival_bins("1-5,6-16,17-29,30-52");
    REQUIRE(bins.size() == 4);
    CHECK(bins[2].lo == 17);
    CHECK(bins[2].hi == 29);
    CHECK(bins[0].label() == "1-5");
    CHECK_THROWS(parse_survival_bins("5-1"));
  }

  TEST_CASE("intermediate gaps") {
    CHECK(intermediate_gaps(series({1, 0, 1})) == std::vector<int>{1});
    CHECK(intermediate_gaps(series({1, 0, 0, 0, 1})) == std::vector<int>{3});
    CHECK(intermediate_gaps(series({0, 1, 1, 0})).empty());
    const std::vector<WeeklyAttendance> all = {series({1, 0, 1, 0, 0, 1})};
    const auto cdf = intermediate_gap_cdf(all);
    REQUIRE(cdf.size() == 2);
    CHECK(cdf[0] == CdfPoint{1.0, 0.5});
  }

  TEST_CASE("gap usage rises toward the end of a streak") {
    auto spec = preset_spec("default");
    spec.n_members = 3000;
    spec.seed = 3;
    const auto synth = generate_cohort(spec);
    const auto records = cohort_survival(cohort_attendance(synth.cohort));
    const auto stats = gap_usage_stats(records, default_survival_bins());
    for (const auto& b : stats.bins) {
      if (b.bin.lo < 6) continue;
      const double near = b.rate_by_weeks_to_end[1] + b.rate_by_weeks_to_end[2];
      const double far = b.rate_by_weeks_to_end[4] + b.rate_by_weeks_to_end[5];
      CHECK(near > far);
    }
  }
}
