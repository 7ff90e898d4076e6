#include <doctest.h>

#include <fmt/format.h>

#include "habitforge/error.hpp"
#include "habitforge/random.hpp"
#include "habitforge/vectorize.hpp"
#include "support.hpp"

using namespace habitforge;
using hf_test::date;

TEST_SUITE("vectorize") {
  TEST_CASE("weekday visit touches entry and exit hours") {
    const auto start = date("2022-01-03");  // Monday
    const auto v = build_visit_vector({{hf_test::visit("A", start, 8, 9)}}, start, 6);
    CHECK(v.bins(0, 8 - kFirstHour) == 1);
    CHECK(v.bins(0, 9 - kFirstHour) == 1);
    CHECK(v.bins.sum() == 2);
  }

  TEST_CASE("weekend visit is capped at closing time") {
    const auto start = date("2022-01-03");
    const auto saturday = start + std::chrono::days(5);
    const auto v = build_visit_vector({{hf_test::visit("A", saturday, 19, 22)}}, start, 6);
    CHECK(v.bins(5, 19 - kFirstHour) == 1);
    CHECK(v.bins.sum() == 1);
  }

  TEST_CASE("weekday visit is capped at 23") {
    const auto start = date("2022-01-03");
    const auto v = build_visit_vector({{hf_test::visit("A", start + std::chrono::days(2), 21, 23)}}, start, 6);
    CHECK(v.bins(2, 21 - kFirstHour) == 1);
    CHECK(v.bins(2, 22 - kFirstHour) == 1);
    CHECK(v.bins.sum() == 2);
  }

  TEST_CASE("no visits give the zero vector") {
    const auto v = build_visit_vector({}, date("2022-01-03"), 6);
    CHECK(v.bins.sum() == 0);
    CHECK(v.flattened().size() == kFeatureCount);
  }

  TEST_CASE("invalid input") {
    const auto start = date("2022-01-03");
    CHECK_THROWS_AS(build_visit_vector({{hf_test::visit("A", start, 9, 8)}}, start, 6), DomainError);
    CHECK_THROWS_AS(build_visit_vector({}, start, 0), DomainError);
  }

  TEST_CASE("feature layout") {
    CHECK(feature_index(0, 6) == 0);
    CHECK(feature_index(1, 6) == 18);
    CHECK(feature_index(6, 23) == kFeatureCount - 1);
    CHECK(feature_name(feature_index(2, 9)) == "d2_h09");
  }

  TEST_CASE("matrix shape and window exclusion") {
    const auto a = hf_test::member("A"), b = hf_test::member("B"), c = hf_test::member("C");
    auto visits = hf_test::weekly_visits(a, {1, 2});
    const auto late = hf_test::weekly_visits(b, {7});
    visits.insert(visits.end(), late.begin(), late.end());
    const auto cohort = CohortDataset::assemble({a, b, c}, visits, {});
    const auto m = build_matrix(cohort, 6);
    CHECK(m.rows.rows() == 3);
    CHECK(m.rows.cols() == 126);
    CHECK_FALSE(m.zero_row[0]);
    CHECK(m.zero_row[1]);
    CHECK(m.zero_row[2]);
    const auto normalized = build_matrix(cohort, 6, true);
    CHECK(normalized.rows.row(0).sum() == doctest::Approx(1.0));
  }

  TEST_CASE("random visits: monotone in the window, bin mass and opening hours") {
    Rng rng(11);
    std::vector<MemberProfile> members;
    std::vector<VisitEvent> visits;
    for (int i = 0; i < 40; ++i) {
      auto m = hf_test::member(fmt::format("M{:02}", i));
      for (int j = 0; j < 60; ++j) {
        const int entry = rng.uniform_int(0, 23);
        visits.push_back(hf_test::visit(m.member_id, m.contract_start + std::chrono::days(rng.uniform_int(0, 150)),
                                        entry, std::min(23, entry + rng.uniform_int(0, 3))));
      }
      members.push_back(m);
    }
    const auto cohort = CohortDataset::assemble(members, visits, {});
    const auto m6 = build_matrix(cohort, 6), m17 = build_matrix(cohort, 17);
    CHECK((m17.rows.array() >= m6.rows.array()).all());
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      int in_window = 0;
      for (const auto& v : cohort.visits(i)) {
        const int day = day_of_week(v.date);
        const int close = is_weekend(day) ? kWeekendCloseHour : kWeekdayCloseHour;
        if (week_index(v.date, cohort.member(i).contract_start) <= 6 && v.entry_hour >= 6 && v.entry_hour < close) {
          ++in_window;
        }
      }
      CHECK(m6.rows.row(static_cast<Eigen::Index>(i)).sum() >= in_window);
    }
    for (int d = 0; d < kDays; ++d) {
      const int close = is_weekend(d) ? kWeekendCloseHour : kWeekdayCloseHour;
      for (int h = close; h < 24; ++h) CHECK(m17.rows.col(feature_index(d, h)).sum() == 0);
    }
  }
}
