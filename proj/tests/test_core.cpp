#include <doctest.h>

#include <sstream>

#include <fmt/format.h>

#include "habitforge/error.hpp"
#include "support.hpp"

using namespace habitforge;
using hf_test::date;

namespace {

const std::string kMembers = std::string(kMembersHeader) + "\n"
                             "A1,25,female,22.1,2022-01-03,C01,basic,1,2,0,annual,true\n"
                             "A2,41,male,27.5,2022-02-07,C02,premium,,,,annual,true\n"
                             "A3,33,female,30.2,2022-03-01,C01,comfort,3,,1,annual,false\n";

}  // namespace

TEST_SUITE("core") {
  TEST_CASE("week index is anchored at the contract start") {
    const auto start = date("2022-03-14");
    CHECK(week_index(start, start) == 1);
    CHECK(week_index(start + std::chrono::days(6), start) == 1);
    CHECK(week_index(start + std::chrono::days(7), start) == 2);
    CHECK_THROWS_AS(week_index(start - std::chrono::days(1), start), DomainError);
  }

  TEST_CASE("week index is monotone and seven days wide") {
    const auto start = date("2021-12-30");
    int previous = 1;
    for (int d = 0; d < 400; ++d) {
      const int w = week_index(start + std::chrono::days(d), start);
      CHECK(w >= previous);
      CHECK(w == d / 7 + 1);
      previous = w;
    }
  }

  TEST_CASE("dates parse and format") {
    CHECK(format_date(date("2022-02-28")) == "2022-02-28");
    CHECK_FALSE(parse_date("2022-02-30"));
    CHECK_FALSE(parse_date("22-1-1"));
    CHECK(day_of_week(date("2022-01-03")) == 0);
    CHECK(day_of_week(date("2022-01-09")) == 6);
  }

  TEST_CASE("three valid rows give three profiles") {
    std::istringstream in(kMembers);
    const auto members = read_members(in);
    REQUIRE(members.size() == 3);
    CHECK(members[0].form_level == 2);
    CHECK(members[1].gender == Gender::male);
    CHECK_FALSE(members[2].paid);
  }

  TEST_CASE("empty survey cells are absent") {
    std::istringstream in(kMembers);
    const auto members = read_members(in);
    CHECK_FALSE(members[1].form_level);
    CHECK_FALSE(members[2].form_level);
    CHECK(members[2].experience_level == 3);
    CHECK_FALSE(members[2].complete_responder());
    CHECK(members[0].complete_responder());
  }

  TEST_CASE("malformed age names the row") {
    std::istringstream in(std::string(kMembersHeader) + "\n"
                          "A1,25,female,22.1,2022-01-03,C01,basic,1,2,0,annual,true\n"
                          "A2,abc,male,27.5,2022-02-07,C02,premium,,,,annual,true\n");
    try {
      read_members(in);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.row() == 3);
      CHECK(e.column() == "age");
    }
  }

  TEST_CASE("wrong header is rejected") {
    std::istringstream in("member_id,age\nA1,3\n");
    CHECK_THROWS_AS(read_members(in), ParseError);
  }

  TEST_CASE("filter keeps annual paid members") {
    std::vector<MemberProfile> members;
    for (int i = 0; i < 10; ++i) {
      auto m = hf_test::member("M" + std::to_string(i));
      m.contract_type = i < 6 ? "annual" : "monthly";
      m.paid = i % 3 != 0;
      members.push_back(m);
    }
    // annual and paid: 1, 2, 4, 5
    const auto cohort = filter_cohort(members, {}, {}, CohortRules{});
    CHECK(cohort.size() == 4);
    for (const auto& m : cohort.members()) {
      CHECK(m.contract_type == "annual");
      CHECK(m.paid);
    }
  }

  TEST_CASE("filter can empty the cohort") {
    auto m = hf_test::member("X");
    m.paid = false;
    const auto cohort = filter_cohort({m}, hf_test::weekly_visits(m, {1, 2}), {}, CohortRules{});
    CHECK(cohort.empty());
    CHECK(cohort.visit_count() == 0);
  }

  TEST_CASE("zero-visit members are retained") {
    const auto a = hf_test::member("A"), b = hf_test::member("B");
    const auto cohort = filter_cohort({a, b}, hf_test::weekly_visits(a, {1}), {}, CohortRules{});
    REQUIRE(cohort.size() == 2);
    CHECK(cohort.visits(*cohort.find("B")).empty());
    CHECK(cohort.interventions(*cohort.find("B")).counts == std::array<int, 5>{});
  }

  TEST_CASE("filtered cohort is a subset") {
    std::vector<MemberProfile> members;
    std::vector<VisitEvent> visits;
    for (int i = 0; i < 20; ++i) {
      auto m = hf_test::member(fmt::format("M{:02}", i));
      m.paid = i % 2 == 0;
      const auto v = hf_test::weekly_visits(m, {1, 3, i % 5 + 1});
      visits.insert(visits.end(), v.begin(), v.end());
      members.push_back(m);
    }
    const auto cohort = filter_cohort(members, visits, {}, CohortRules{});
    CHECK(cohort.size() == 10);
    CHECK(cohort.visit_count() == 30);
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      for (const auto& v : cohort.visits(i)) CHECK(v.member_id == cohort.member(i).member_id);
    }
  }

  TEST_CASE("assembly validates records") {
    const auto a = hf_test::member("A");
    CHECK_THROWS_AS(CohortDataset::assemble({a, a}, {}, {}), ValidationError);
    CHECK_THROWS_AS(CohortDataset::assemble({a}, {hf_test::visit("Z", a.contract_start, 8, 9)}, {}), ValidationError);
    CHECK_THROWS_AS(CohortDataset::assemble({a}, {hf_test::visit("A", a.contract_start, 10, 9)}, {}), ValidationError);
    CHECK_THROWS_AS(
        CohortDataset::assemble({a}, {hf_test::visit("A", a.contract_start - std::chrono::days(1), 8, 9)}, {}),
        ValidationError);
    InterventionCounts bad{"A", {0, -1, 0, 0, 0}};
    CHECK_THROWS_AS(CohortDataset::assemble({a}, {}, {bad}), ValidationError);
  }

  TEST_CASE("members csv round-trips") {
    std::istringstream in(kMembers);
    const auto members = read_members(in);
    std::ostringstream out;
    write_members(out, members);
    CHECK(out.str() == kMembers);
  }

  TEST_CASE("visits and interventions round-trip") {
    const std::string visits = std::string(kVisitsHeader) + "\nA1,2022-01-04,8,9\nA1,2022-01-09,19,22\n";
    std::istringstream vin(visits);
    std::ostringstream vout;
    write_visits(vout, read_visits(vin));
    CHECK(vout.str() == visits);
    const std::string rows = std::string(kInterventionsHeader) + "\nA1,3,0,1,2,0\n";
    std::istringstream iin(rows);
    std::ostringstream iout;
    write_interventions(iout, read_interventions(iin));
    CHECK(iout.str() == rows);
  }

  TEST_CASE("age bands") {
    AgeBands bands;
    CHECK(bands.index(13) == -1);
    CHECK(bands.index(14) == 0);
    CHECK(bands.index(20) == 0);
    CHECK(bands.index(21) == 1);
    CHECK(bands.index(70) == 4);
    CHECK(bands.labels() == std::vector<std::string>{"14-20", "21-27", "28-34", "35-48", "49+"});
  }
}
