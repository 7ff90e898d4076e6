#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "habitforge/error.hpp"
#include "habitforge/propensity.hpp"
#include "habitforge/survival.hpp"
#include "habitforge/synth.hpp"
#include "habitforge/vectorize.hpp"

using namespace habitforge;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("habitforge_synth_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

GeneratorSpec sized(const char* preset, std::size_t n, std::uint64_t seed) {
  auto spec = preset_spec(preset);
  spec.n_members = n;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("empty cohort writes header-only files") {
    const auto dir = scratch("empty");
    write_synth(generate_cohort(sized("default", 0, 1)), dir);
    CHECK(slurp(dir / "members.csv") == std::string(kMembersHeader) + "\n");
    CHECK(slurp(dir / "visits.csv") == std::string(kVisitsHeader) + "\n");
    CHECK(fs::exists(dir / "truth.json"));
  }

  TEST_CASE("same spec and seed give identical files") {
    const auto a = scratch("a"), b = scratch("b");
    write_synth(generate_cohort(sized("default", 500, 77)), a);
    write_synth(generate_cohort(sized("default", 500, 77)), b);
    for (const char* f : {"members.csv", "visits.csv", "interventions.csv", "truth.json"}) {
      CHECK(slurp(a / f) == slurp(b / f));
    }
    const auto c = scratch("c");
    write_synth(generate_cohort(sized("default", 500, 78)), c);
    CHECK(slurp(a / "visits.csv") != slurp(c / "visits.csv"));
  }

  TEST_CASE("written cohort loads back unchanged") {
    const auto dir = scratch("load");
    const auto synth = generate_cohort(sized("default", 300, 4));
    write_synth(synth, dir);
    const auto back = load_cohort(dir);
    CHECK(back.size() == synth.cohort.size());
    CHECK(back.visit_count() == synth.cohort.visit_count());
  }

  TEST_CASE("visits fall inside opening hours") {
    const auto synth = generate_cohort(sized("default", 2000, 5));
    for (const auto& v : synth.cohort.all_visits()) {
      const bool weekend = is_weekend(day_of_week(v.date));
      CHECK(v.entry_hour >= (weekend ? 8 : 6));
      CHECK(v.exit_hour <= (weekend ? kWeekendCloseHour : kWeekdayCloseHour));
      CHECK(v.entry_hour <= v.exit_hour);
    }
    const auto m = build_matrix(synth.cohort, 52);
    for (int d = 0; d < kDays; ++d) {
      const int close = is_weekend(d) ? kWeekendCloseHour : kWeekdayCloseHour;
      for (int h = close; h < 24; ++h) CHECK(m.rows.col(feature_index(d, h)).sum() == 0);
    }
  }

  TEST_CASE("low-noise members keep to their archetype hours") {
    const auto synth = generate_cohort(sized("low-noise", 500, 6));
    for (std::size_t i = 0; i < synth.cohort.size(); ++i) {
      const auto& a = synth.spec.archetypes[static_cast<std::size_t>(synth.truth[i].archetype)];
      for (const auto& v : synth.cohort.visits(i)) {
        const bool weekend = is_weekend(day_of_week(v.date));
        CHECK(v.entry_hour == (weekend ? a.weekend_hour : a.weekday_hour));
      }
    }
  }

  TEST_CASE("default survival shape") {
    const auto synth = generate_cohort(sized("default", 20000, 9));
    const auto records = cohort_survival(cohort_attendance(synth.cohort));
    double below6 = 0, above17 = 0;
    for (const auto& r : records) {
      below6 += r.streak_weeks < 6;
      above17 += r.streak_weeks >= 17;
    }
    below6 /= static_cast<double>(records.size());
    above17 /= static_cast<double>(records.size());
    CHECK(below6 == doctest::Approx(0.50).epsilon(0.06));
    CHECK(std::abs(above17 - 0.20) <= 0.03);
  }

  TEST_CASE("assignment follows the logistic model") {
    const auto synth = generate_cohort(sized("default", 20000, 10));
    const auto& cohort = synth.cohort;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(cohort.size()), 1);
    for (std::size_t i = 0; i < cohort.size(); ++i) {
      const auto& m = cohort.member(i);
      X(static_cast<Eigen::Index>(i), 0) = 0.8 * (m.age - 35.0) / 12.0 - 0.8 * (m.bmi - 25.0) / 4.0;
    }
    LogisticOptions options;
    options.lambda = 1e-9;
    for (const auto& a : synth.spec.assignments) {
      std::vector<std::uint8_t> y;
      for (std::size_t i = 0; i < cohort.size(); ++i) y.push_back(cohort.interventions(i)[a.intervention] > 0);
      const auto fit = fit_ridge_logistic(X, y, options);
      CHECK(fit.coefficients(0) == doctest::Approx(a.intercept).epsilon(0.1));
      CHECK(std::abs(fit.coefficients(1) - a.coefficient * synth.spec.confounding) < 0.1);
    }
  }

  TEST_CASE("ground truth effects") {
    auto uniform = sized("null", 3000, 11);
    uniform.early_min = 0.35;
    UpliftSpec u;
    u.intervention = Intervention::group_lessons;
    u.level = Level::high;
    u.by_week.fill(0.2);
    uniform.uplifts = {u};
    const auto a = generate_cohort(uniform);
    CHECK(ground_truth_att(a, Intervention::group_lessons, Level::high, 6) == doctest::Approx(0.2));
    CHECK(ground_truth_att(a, Intervention::group_lessons, Level::low, 6) == 0.0);
    CHECK(ground_truth_att(a, Intervention::pt_sessions, Level::high, 6) == 0.0);
    CHECK_THROWS_AS(ground_truth_att(a, Intervention::group_lessons, Level::high, 5), LookupError);

    u.archetype = "morning";
    u.by_week.fill(0.3);
    uniform.uplifts = {u};
    const auto b = generate_cohort(uniform);
    double at_level = 0, morning = 0;
    for (const auto& t : b.truth) {
      if (t.levels[0] != Level::high) continue;
      at_level += 1;
      morning += t.archetype == 0;
    }
    CHECK(ground_truth_att(b, Intervention::group_lessons, Level::high, 17) ==
          doctest::Approx(0.3 * morning / at_level).epsilon(1e-12));
  }

  TEST_CASE("uplift raises the milestone probability by the uplift") {
    const auto synth = generate_cohort(sized("default", 2000, 12));
    for (const auto& t : synth.truth) {
      for (std::size_t w = 0; w < kOutcomeWeeks; ++w) {
        double total = 0;
        for (const auto& e : t.effect) total += e[w];
        CHECK(t.p1[w] == doctest::Approx(t.p0[w] + total).epsilon(1e-12));
        CHECK(t.p1[w] <= 1.0);
      }
    }
  }

  TEST_CASE("invalid specs") {
    auto spec = preset_spec("default");
    spec.uplifts[0].by_week[5] = spec.uplifts[0].by_week[4] + 0.01;
    CHECK_THROWS_AS(validate(spec), SpecError);
    spec = preset_spec("default");
    spec.uplifts[0].by_week.fill(-0.1);
    CHECK_THROWS_AS(validate(spec), SpecError);
    spec = preset_spec("default");
    spec.uplifts[0].level = Level::none;
    CHECK_THROWS_AS(validate(spec), SpecError);
    spec = preset_spec("default");
    spec.archetypes[0].weight = 0.5;
    CHECK_THROWS_AS(validate(spec), SpecError);
    spec = preset_spec("null");
    spec.n_members = 200;
    UpliftSpec big;
    big.by_week.fill(0.9);
    spec.uplifts = {big};
    CHECK_THROWS_AS(generate_cohort(spec), SpecError);
    CHECK_THROWS_AS(preset_spec("noisy"), SpecError);
    CHECK_THROWS_AS(spec_from_json(nlohmann::json{{"n_member", 3}}, preset_spec("default")), SpecError);
  }

  TEST_CASE("spec JSON round-trip") {
    const auto spec = preset_spec("default");
    const auto j = to_json(spec);
    CHECK(to_json(spec_from_json(j, preset_spec("null"))).dump() == j.dump());
    const auto tweaked = spec_from_json(nlohmann::json::parse(R"({"n_members": 12, "uplifts": [
        {"intervention": "pt_sessions", "level": "high", "by_week": 0.2}]})"), spec);
    CHECK(tweaked.n_members == 12);
    REQUIRE(tweaked.uplifts.size() == 1);
    CHECK(tweaked.uplifts[0].by_week[11] == 0.2);
  }
}
