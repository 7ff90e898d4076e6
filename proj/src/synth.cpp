#include "habitforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "habitforge/error.hpp"
#include "habitforge/random.hpp"

namespace habitforge {

namespace {

constexpr int kWeekdayOpen = 6, kWeekdayClose = 23;
constexpr int kWeekendOpen = 8, kWeekendClose = 20;
constexpr std::array<std::pair<int, int>, 5> kAgeRanges = {{{14, 20}, {21, 27}, {28, 34}, {35, 48}, {49, 70}}};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<ArchetypeProfile> default_archetypes() {
  return {
      {"morning", 0.15, 8, 9, {0.08, 0.14, 0.20, 0.32, 0.26}, 0.48},
      {"noon", 0.15, 12, 12, {0.12, 0.30, 0.25, 0.22, 0.11}, 0.55},
      {"afternoon", 0.20, 16, 15, {0.30, 0.32, 0.16, 0.14, 0.08}, 0.45},
      {"evening", 0.30, 18, 17, {0.12, 0.30, 0.26, 0.22, 0.10}, 0.58},
      {"night", 0.20, 20, 18, {0.22, 0.36, 0.22, 0.14, 0.06}, 0.35},
  };
}

WeekProfile linear_profile(double first, double last) {
  WeekProfile p{};
  for (std::size_t i = 0; i < kOutcomeWeeks; ++i) {
    p[i] = first + (last - first) * static_cast<double>(i) / static_cast<double>(kOutcomeWeeks - 1);
  }
  return p;
}

}  // namespace

GeneratorSpec preset_spec(std::string_view name) {
  GeneratorSpec spec;
  spec.archetypes = default_archetypes();
  spec.early_streak_probs = {0.04, 0.30, 0.22, 0.18, 0.14, 0.12};
  spec.early_intensity = {0.15, 0.50, 0.35};
  spec.middle_intensity = {0.15, 0.50, 0.35};
  spec.long_intensity = {0.05, 0.40, 0.55};
  spec.assignments = {
      {Intervention::group_lessons, -0.6, 1.0, 3.0},
      {Intervention::pt_sessions, -1.4, 1.0, 2.5},
      {Intervention::invitation_credits, -1.0, 0.5, 2.5},
      {Intervention::distinct_clubs, -0.8, 0.5, 2.5},
      {Intervention::distinct_group_lessons, -0.9, 1.0, 2.5},
  };
  spec.uplifts = {
      {Intervention::group_lessons, Level::low, std::nullopt, linear_profile(0.03, 0.02)},
      {Intervention::group_lessons, Level::moderate, std::nullopt, linear_profile(0.06, 0.03)},
      {Intervention::group_lessons, Level::high, std::nullopt, linear_profile(0.10, 0.05)},
      {Intervention::pt_sessions, Level::high, std::nullopt, linear_profile(0.05, 0.03)},
      {Intervention::distinct_clubs, Level::moderate, std::nullopt, linear_profile(0.02, 0.02)},
      {Intervention::distinct_clubs, Level::high, std::nullopt, linear_profile(0.03, 0.02)},
  };
  if (name == "default") return spec;
  if (name == "null") {
    for (auto& u : spec.uplifts) u.by_week.fill(0.0);
    return spec;
  }
  if (name == "low-noise") {
    spec.hour_jitter = 0.0;
    spec.off_archetype = 0.0;
    return spec;
  }
  throw SpecError("synth", fmt::format("unknown generator preset '{}'", name));
}

std::string_view to_string(PersistenceClass c) {
  switch (c) {
    case PersistenceClass::early: return "early";
    case PersistenceClass::responder: return "responder";
    case PersistenceClass::middle: return "middle";
    case PersistenceClass::long_term: return "long";
  }
  return "?";
}

void validate(const GeneratorSpec& spec) {
  const auto fail = [](std::string msg) { throw SpecError("synth", std::move(msg)); };
  if (spec.archetypes.empty()) fail("at least one archetype is required");
  double total = 0.0;
  for (const auto& a : spec.archetypes) {
    if (a.weight < 0) fail(fmt::format("archetype '{}' has a negative weight", a.name));
    total += a.weight;
    const double bands = std::accumulate(a.age_band_probs.begin(), a.age_band_probs.end(), 0.0);
    if (std::abs(bands - 1.0) > 1e-9) fail(fmt::format("age band probabilities of '{}' sum to {}", a.name, bands));
    if (a.female_share < 0 || a.female_share > 1) fail("female_share outside [0, 1]");
    if (a.weekday_hour < kWeekdayOpen || a.weekday_hour > kWeekdayClose - 2 ||
        a.weekend_hour < kWeekendOpen || a.weekend_hour > kWeekendClose - 2) {
      fail(fmt::format("archetype '{}' visits outside opening hours", a.name));
    }
  }
  if (std::abs(total - 1.0) > 1e-9) fail(fmt::format("archetype weights sum to {}", total));
  const auto check_probs = [&](std::span<const double> p, std::string_view what) {
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    if (std::abs(s - 1.0) > 1e-9 || std::any_of(p.begin(), p.end(), [](double v) { return v < 0; })) {
      fail(fmt::format("{} must be a probability vector", what));
    }
  };
  check_probs(spec.early_streak_probs, "early_streak_probs");
  check_probs(spec.early_intensity, "early_intensity");
  check_probs(spec.middle_intensity, "middle_intensity");
  check_probs(spec.long_intensity, "long_intensity");
  const auto unit = [&](double v, std::string_view what) {
    if (!(v >= 0 && v <= 1)) fail(fmt::format("{} outside [0, 1]", what));
  };
  unit(spec.early_min, "early_min");
  unit(spec.early_max, "early_max");
  if (spec.early_min > spec.early_max) fail("early_min exceeds early_max");
  unit(spec.long_share, "long_share");
  unit(spec.full_year_share, "full_year_share");
  unit(spec.gap_prob, "gap_prob");
  unit(spec.ramp_gap_prob, "ramp_gap_prob");
  unit(spec.return_prob, "return_prob");
  unit(spec.hour_jitter, "hour_jitter");
  unit(spec.off_archetype, "off_archetype");
  unit(spec.survey_response, "survey_response");
  if (!(spec.middle_decay > 0)) fail("middle_decay must be positive");
  if (spec.responder_visits < 1 || spec.responder_visits > 7) fail("responder_visits outside 1..7");
  if (spec.clubs < 1) fail("clubs must be positive");
  if (spec.categories.empty()) fail("at least one membership category is required");
  for (const auto& a : spec.assignments) {
    if (a.extra_mean < 0) fail("extra_mean must be nonnegative");
  }
  for (const auto& u : spec.uplifts) {
    if (u.level == Level::none) fail("uplifts apply to low, moderate or high levels");
    if (u.archetype &&
        std::none_of(spec.archetypes.begin(), spec.archetypes.end(),
                     [&](const ArchetypeProfile& a) { return a.name == *u.archetype; })) {
      fail(fmt::format("uplift names unknown archetype '{}'", *u.archetype));
    }
    for (std::size_t i = 0; i < kOutcomeWeeks; ++i) {
      if (!(u.by_week[i] >= 0 && u.by_week[i] <= 1)) fail("uplifts must lie in [0, 1]");
      if (i > 0 && u.by_week[i] > u.by_week[i - 1] + 1e-12) {
        fail(fmt::format("uplift for {} {} increases over weeks", to_string(u.intervention),
                         to_string(u.level)));
      }
    }
  }
}

namespace {

struct Profile {
  MemberProfile member;
  int archetype = 0;
  double early_prob = 0.0;
  InterventionCounts counts;
};

int draw_count(const AssignmentModel& a, double x, double confounding, Rng& rng) {
  if (!rng.bernoulli(sigmoid(a.intercept + a.coefficient * confounding * x))) return 0;
  int count = 1;
  if (a.extra_mean > 0) {
    const double q = 1.0 / (1.0 + a.extra_mean);  // success probability of the geometric tail
    count += static_cast<int>(std::floor(std::log(rng.uniform_positive()) / std::log1p(-q)));
  }
  return count;
}

Profile draw_profile(const GeneratorSpec& spec, std::size_t index, Rng& rng) {
  Profile p;
  MemberProfile& m = p.member;
  m.member_id = fmt::format("M{:06d}", index + 1);
  std::vector<double> weights;
  for (const auto& a : spec.archetypes) weights.push_back(a.weight);
  p.archetype = static_cast<int>(rng.categorical(weights));
  const auto& arch = spec.archetypes[static_cast<std::size_t>(p.archetype)];
  m.gender = rng.bernoulli(arch.female_share) ? Gender::female : Gender::male;
  const auto band = rng.categorical(arch.age_band_probs);
  m.age = rng.uniform_int(kAgeRanges[band].first, kAgeRanges[band].second);
  m.bmi = std::round(std::clamp(rng.normal(25.0, 4.0), 16.0, 45.0) * 10.0) / 10.0;
  const Date jan1{std::chrono::year{spec.contract_year} / std::chrono::January / 1};
  m.contract_start = jan1 + std::chrono::days{rng.uniform_int(0, 364)};
  m.main_club = fmt::format("C{:02d}", rng.uniform_int(1, spec.clubs));
  m.membership_category = spec.categories[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<int>(spec.categories.size()) - 1))];
  if (rng.bernoulli(spec.survey_response)) {
    const std::array<double, 4> experience = {0.30, 0.30, 0.25, 0.15};
    const std::array<double, 3> form = {0.30, 0.45, 0.25};
    const std::array<double, 3> frequency = {0.30, 0.40, 0.30};
    m.experience_level = static_cast<int>(rng.categorical(experience));
    m.form_level = static_cast<int>(rng.categorical(form));
    m.est_visit_frequency = static_cast<int>(rng.categorical(frequency));
  }
  const double z_age = (m.age - 35.0) / 12.0;
  const double z_bmi = (m.bmi - 25.0) / 4.0;
  const double x = 0.8 * z_age - 0.8 * z_bmi;
  p.early_prob = spec.early_min +
                 (spec.early_max - spec.early_min) * sigmoid(spec.early_bias - spec.confounding * x);
  p.counts.member_id = m.member_id;
  for (const auto& a : spec.assignments) p.counts[a.intervention] = draw_count(a, x, spec.confounding, rng);
  return p;
}

// P(streak > w) for a middle-class member, w = 6..17.
WeekProfile middle_survival(const GeneratorSpec& spec) {
  std::array<double, kOutcomeWeeks> weights{};
  double total = 0.0;
  for (std::size_t i = 0; i < kOutcomeWeeks; ++i) {
    weights[i] = std::pow(spec.middle_decay, static_cast<double>(i));
    total += weights[i];
  }
  WeekProfile out{};
  double above = total;
  for (std::size_t i = 0; i < kOutcomeWeeks; ++i) {
    above -= weights[i];  // mass of streaks > 6 + i
    out[i] = above / total;
  }
  return out;
}

int draw_middle_streak(const GeneratorSpec& spec, Rng& rng) {
  std::array<double, kOutcomeWeeks> weights{};
  for (std::size_t i = 0; i < kOutcomeWeeks; ++i) weights[i] = std::pow(spec.middle_decay, static_cast<double>(i));
  return kFirstOutcomeWeek + static_cast<int>(rng.categorical(weights));
}

int draw_long_streak(const GeneratorSpec& spec, Rng& rng) {
  if (rng.bernoulli(spec.full_year_share)) return kContractWeeks;
  return rng.uniform_int(kLastOutcomeWeek + 1, kContractWeeks - 1);
}

// Responders outlast week w with probability d_w / d_6.
int draw_responder_streak(const GeneratorSpec& spec, const WeekProfile& uplift, Rng& rng) {
  const double u = rng.uniform() * uplift[0];
  for (std::size_t i = 1; i < kOutcomeWeeks; ++i) {
    if (u >= uplift[i]) return kFirstOutcomeWeek + static_cast<int>(i);
  }
  return draw_long_streak(spec, rng);
}

int draw_visits(std::span<const double> intensity, Rng& rng) {
  return 1 + static_cast<int>(rng.categorical(intensity));
}

std::array<int, kContractWeeks> weekly_plan(const GeneratorSpec& spec, PersistenceClass c, int streak,
                                            Rng& rng) {
  std::array<int, kContractWeeks> visits{};
  if (streak == 0) return visits;
  bool previous_gap = false;
  for (int w = 1; w <= streak; ++w) {
    const bool ramp = w > streak - spec.ramp_weeks;
    const bool responder_phase = c == PersistenceClass::responder && w <= kLastOutcomeWeek;
    if (!responder_phase && w < streak && !previous_gap &&
        rng.bernoulli(ramp ? spec.ramp_gap_prob : spec.gap_prob)) {
      previous_gap = true;
      continue;
    }
    previous_gap = false;
    int n = 1;
    if (responder_phase) {
      n = spec.responder_visits;
    } else {
      switch (c) {
        case PersistenceClass::early: n = draw_visits(spec.early_intensity, rng); break;
        case PersistenceClass::middle: n = draw_visits(spec.middle_intensity, rng); break;
        default: n = draw_visits(spec.long_intensity, rng); break;
      }
    }
    visits[static_cast<std::size_t>(w - 1)] = n;
  }
  for (int w = streak + 3; w <= kContractWeeks; ++w) {
    if (rng.bernoulli(spec.return_prob)) visits[static_cast<std::size_t>(w - 1)] = 1;
  }
  return visits;
}

int entry_hour(const GeneratorSpec& spec, const ArchetypeProfile& arch, bool weekend, Rng& rng) {
  const int open = weekend ? kWeekendOpen : kWeekdayOpen;
  const int last = (weekend ? kWeekendClose : kWeekdayClose) - 2;
  if (rng.bernoulli(spec.off_archetype)) return rng.uniform_int(open, last);
  int hour = weekend ? arch.weekend_hour : arch.weekday_hour;
  if (rng.bernoulli(spec.hour_jitter)) hour += rng.bernoulli(0.5) ? 1 : -1;
  return std::clamp(hour, open, last);
}

void place_visits(const GeneratorSpec& spec, const ArchetypeProfile& arch, const MemberProfile& m,
                  const std::array<int, kContractWeeks>& plan, Rng& rng,
                  std::vector<VisitEvent>& out) {
  for (int w = 1; w <= kContractWeeks; ++w) {
    const int n = plan[static_cast<std::size_t>(w - 1)];
    if (n == 0) continue;
    std::array<int, 7> days = {0, 1, 2, 3, 4, 5, 6};
    for (int i = 0; i < n; ++i) std::swap(days[static_cast<std::size_t>(i)], days[static_cast<std::size_t>(rng.uniform_int(i, 6))]);
    std::sort(days.begin(), days.begin() + n);
    for (int i = 0; i < n; ++i) {
      const Date date = m.contract_start + std::chrono::days{7 * (w - 1) + days[static_cast<std::size_t>(i)]};
      const int entry = entry_hour(spec, arch, is_weekend(day_of_week(date)), rng);
      out.push_back({m.member_id, date, entry, entry + 1});
    }
  }
}

}  // namespace

SynthCohort generate_cohort(const GeneratorSpec& spec) {
  validate(spec);
  SynthCohort out;
  out.spec = spec;
  const std::size_t n = spec.n_members;

  std::vector<Profile> profiles;
  profiles.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(Rng::split(spec.seed, 2 * i));
    profiles.push_back(draw_profile(spec, i, rng));
  }

  // Levels are defined on the whole cohort before any outcome is drawn.
  for (const Intervention j : kAllInterventions) {
    std::vector<int> counts(n);
    for (std::size_t i = 0; i < n; ++i) counts[i] = profiles[i].counts[j];
    if (std::any_of(counts.begin(), counts.end(), [](int c) { return c > 0; })) {
      out.cuts[static_cast<std::size_t>(j)] = four_level_cuts(counts);
    }
  }

  const WeekProfile middle = middle_survival(spec);
  std::vector<MemberProfile> members;
  std::vector<VisitEvent> visits;
  std::vector<InterventionCounts> interventions;
  members.reserve(n);
  interventions.reserve(n);
  out.truth.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Profile& p = profiles[i];
    MemberTruth t;
    t.member_id = p.member.member_id;
    t.archetype = p.archetype;
    const auto& arch = spec.archetypes[static_cast<std::size_t>(p.archetype)];
    WeekProfile uplift{};
    for (const Intervention j : kAllInterventions) {
      const auto idx = static_cast<std::size_t>(j);
      t.levels[idx] = out.cuts[idx] ? four_level(p.counts[j], *out.cuts[idx]) : Level::none;
    }
    for (const auto& u : spec.uplifts) {
      const auto idx = static_cast<std::size_t>(u.intervention);
      if (t.levels[idx] != u.level || (u.archetype && *u.archetype != arch.name)) continue;
      for (std::size_t w = 0; w < kOutcomeWeeks; ++w) {
        t.effect[idx][w] += u.by_week[w];
        uplift[w] += u.by_week[w];
      }
    }
    if (uplift[0] > p.early_prob + 1e-12) {
      throw SpecError("synth", fmt::format("uplift {} for member {} exceeds the early-churn "
                                           "probability {} it draws from",
                                           uplift[0], t.member_id, p.early_prob));
    }
    for (std::size_t w = 0; w < kOutcomeWeeks; ++w) {
      t.p0[w] = (1.0 - p.early_prob) * (spec.long_share + (1.0 - spec.long_share) * middle[w]);
      t.p1[w] = t.p0[w] + uplift[w];
    }

    Rng rng(Rng::split(spec.seed, 2 * i + 1));
    const double u = rng.uniform();
    if (u < p.early_prob - uplift[0]) {
      t.persistence = PersistenceClass::early;
      t.target_streak = static_cast<int>(rng.categorical(spec.early_streak_probs));
    } else if (u < p.early_prob) {
      t.persistence = PersistenceClass::responder;
      t.target_streak = draw_responder_streak(spec, uplift, rng);
    } else if (rng.bernoulli(spec.long_share)) {
      t.persistence = PersistenceClass::long_term;
      t.target_streak = draw_long_streak(spec, rng);
    } else {
      t.persistence = PersistenceClass::middle;
      t.target_streak = draw_middle_streak(spec, rng);
    }
    const auto plan = weekly_plan(spec, t.persistence, t.target_streak, rng);
    place_visits(spec, arch, p.member, plan, rng, visits);

    members.push_back(p.member);
    interventions.push_back(p.counts);
    out.truth.push_back(std::move(t));
  }
  out.cohort = CohortDataset::assemble(std::move(members), std::move(visits), std::move(interventions));
  return out;
}

double ground_truth_att(const SynthCohort& synth, Intervention intervention, Level level, int week) {
  if (week < kFirstOutcomeWeek || week > kLastOutcomeWeek) {
    throw LookupError("synth", fmt::format("week {} outside {}..{}", week, kFirstOutcomeWeek,
                                           kLastOutcomeWeek));
  }
  const auto idx = static_cast<std::size_t>(intervention);
  const auto w = static_cast<std::size_t>(week - kFirstOutcomeWeek);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& t : synth.truth) {
    if (t.levels[idx] != level) continue;
    sum += t.effect[idx][w];
    ++count;
  }
  if (count == 0) {
    throw LookupError("synth", fmt::format("no member at level {} of {}", to_string(level),
                                           to_string(intervention)));
  }
  return sum / static_cast<double>(count);
}

// ---- JSON ----------------------------------------------------------------

namespace {

Intervention intervention_from(const nlohmann::json& j) {
  const auto name = j.get<std::string>();
  const auto parsed = parse_intervention(name);
  if (!parsed) throw SpecError("synth", fmt::format("unknown intervention '{}'", name));
  return *parsed;
}

Level level_from(const nlohmann::json& j) {
  const auto name = j.get<std::string>();
  const auto parsed = parse_level(name);
  if (!parsed) throw SpecError("synth", fmt::format("unknown level '{}'", name));
  return *parsed;
}

template <std::size_t N>
std::array<double, N> array_from(const nlohmann::json& j, std::string_view key) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != N) throw SpecError("synth", fmt::format("'{}' needs {} values", key, N));
  std::array<double, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

WeekProfile profile_from(const nlohmann::json& j) {
  if (j.is_number()) {
    WeekProfile p{};
    p.fill(j.get<double>());
    return p;
  }
  return array_from<kOutcomeWeeks>(j, "by_week");
}

void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                std::string_view where) {
  if (!j.is_object()) throw SpecError("synth", fmt::format("{} must be an object", where));
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw SpecError("synth", fmt::format("unknown key '{}' in {}", key, where));
    }
  }
}

}  // namespace

GeneratorSpec spec_from_json(const nlohmann::json& j, GeneratorSpec spec) {
  check_keys(j,
             {"n_members", "seed", "archetypes", "early_min", "early_max", "early_bias",
              "confounding", "long_share", "early_streak_probs", "middle_decay", "full_year_share",
              "early_intensity", "middle_intensity", "long_intensity", "responder_visits",
              "gap_prob", "ramp_gap_prob", "ramp_weeks", "return_prob", "hour_jitter",
              "off_archetype", "survey_response", "contract_year", "clubs", "categories",
              "assignments", "uplifts"},
             "generator spec");
  try {
    const auto num = [&](const char* key, double& field) {
      if (j.contains(key)) field = j.at(key).get<double>();
    };
    const auto integer = [&](const char* key, int& field) {
      if (j.contains(key)) field = j.at(key).get<int>();
    };
    if (j.contains("n_members")) spec.n_members = j.at("n_members").get<std::size_t>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    num("early_min", spec.early_min);
    num("early_max", spec.early_max);
    num("early_bias", spec.early_bias);
    num("confounding", spec.confounding);
    num("long_share", spec.long_share);
    num("middle_decay", spec.middle_decay);
    num("full_year_share", spec.full_year_share);
    num("gap_prob", spec.gap_prob);
    num("ramp_gap_prob", spec.ramp_gap_prob);
    num("return_prob", spec.return_prob);
    num("hour_jitter", spec.hour_jitter);
    num("off_archetype", spec.off_archetype);
    num("survey_response", spec.survey_response);
    integer("responder_visits", spec.responder_visits);
    integer("ramp_weeks", spec.ramp_weeks);
    integer("contract_year", spec.contract_year);
    integer("clubs", spec.clubs);
    if (j.contains("early_streak_probs")) spec.early_streak_probs = array_from<6>(j.at("early_streak_probs"), "early_streak_probs");
    if (j.contains("early_intensity")) spec.early_intensity = array_from<3>(j.at("early_intensity"), "early_intensity");
    if (j.contains("middle_intensity")) spec.middle_intensity = array_from<3>(j.at("middle_intensity"), "middle_intensity");
    if (j.contains("long_intensity")) spec.long_intensity = array_from<3>(j.at("long_intensity"), "long_intensity");
    if (j.contains("categories")) spec.categories = j.at("categories").get<std::vector<std::string>>();
    if (j.contains("archetypes")) {
      spec.archetypes.clear();
      for (const auto& a : j.at("archetypes")) {
        check_keys(a, {"name", "weight", "weekday_hour", "weekend_hour", "age_band_probs", "female_share"},
                   "archetype");
        ArchetypeProfile p;
        p.name = a.at("name").get<std::string>();
        p.weight = a.value("weight", p.weight);
        p.weekday_hour = a.value("weekday_hour", p.weekday_hour);
        p.weekend_hour = a.value("weekend_hour", p.weekend_hour);
        p.female_share = a.value("female_share", p.female_share);
        p.age_band_probs = array_from<5>(a.at("age_band_probs"), "age_band_probs");
        spec.archetypes.push_back(std::move(p));
      }
    }
    if (j.contains("assignments")) {
      spec.assignments.clear();
      for (const auto& a : j.at("assignments")) {
        check_keys(a, {"intervention", "intercept", "coefficient", "extra_mean"}, "assignment");
        AssignmentModel m;
        m.intervention = intervention_from(a.at("intervention"));
        m.intercept = a.value("intercept", m.intercept);
        m.coefficient = a.value("coefficient", m.coefficient);
        m.extra_mean = a.value("extra_mean", m.extra_mean);
        spec.assignments.push_back(m);
      }
    }
    if (j.contains("uplifts")) {
      spec.uplifts.clear();
      for (const auto& u : j.at("uplifts")) {
        check_keys(u, {"intervention", "level", "archetype", "by_week"}, "uplift");
        UpliftSpec s;
        s.intervention = intervention_from(u.at("intervention"));
        s.level = level_from(u.at("level"));
        if (u.contains("archetype") && !u.at("archetype").is_null()) s.archetype = u.at("archetype").get<std::string>();
        s.by_week = profile_from(u.at("by_week"));
        spec.uplifts.push_back(s);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError("synth", fmt::format("malformed generator spec: {}", e.what()));
  }
  return spec;
}

nlohmann::json to_json(const GeneratorSpec& spec) {
  nlohmann::json j;
  j["n_members"] = spec.n_members;
  j["seed"] = spec.seed;
  auto archetypes = nlohmann::json::array();
  for (const auto& a : spec.archetypes) {
    archetypes.push_back({{"name", a.name},
                          {"weight", a.weight},
                          {"weekday_hour", a.weekday_hour},
                          {"weekend_hour", a.weekend_hour},
                          {"age_band_probs", a.age_band_probs},
                          {"female_share", a.female_share}});
  }
  j["archetypes"] = std::move(archetypes);
  j["early_min"] = spec.early_min;
  j["early_max"] = spec.early_max;
  j["early_bias"] = spec.early_bias;
  j["confounding"] = spec.confounding;
  j["long_share"] = spec.long_share;
  j["early_streak_probs"] = spec.early_streak_probs;
  j["middle_decay"] = spec.middle_decay;
  j["full_year_share"] = spec.full_year_share;
  j["early_intensity"] = spec.early_intensity;
  j["middle_intensity"] = spec.middle_intensity;
  j["long_intensity"] = spec.long_intensity;
  j["responder_visits"] = spec.responder_visits;
  j["gap_prob"] = spec.gap_prob;
  j["ramp_gap_prob"] = spec.ramp_gap_prob;
  j["ramp_weeks"] = spec.ramp_weeks;
  j["return_prob"] = spec.return_prob;
  j["hour_jitter"] = spec.hour_jitter;
  j["off_archetype"] = spec.off_archetype;
  j["survey_response"] = spec.survey_response;
  j["contract_year"] = spec.contract_year;
  j["clubs"] = spec.clubs;
  j["categories"] = spec.categories;
  auto assignments = nlohmann::json::array();
  for (const auto& a : spec.assignments) {
    assignments.push_back({{"intervention", to_string(a.intervention)},
                           {"intercept", a.intercept},
                           {"coefficient", a.coefficient},
                           {"extra_mean", a.extra_mean}});
  }
  j["assignments"] = std::move(assignments);
  auto uplifts = nlohmann::json::array();
  for (const auto& u : spec.uplifts) {
    nlohmann::json e = {{"intervention", to_string(u.intervention)},
                        {"level", to_string(u.level)},
                        {"by_week", u.by_week}};
    e["archetype"] = u.archetype ? nlohmann::json(*u.archetype) : nlohmann::json(nullptr);
    uplifts.push_back(std::move(e));
  }
  j["uplifts"] = std::move(uplifts);
  return j;
}

nlohmann::json truth_json(const SynthCohort& synth) {
  nlohmann::json j;
  j["spec"] = to_json(synth.spec);
  nlohmann::json cuts = nlohmann::json::object();
  for (const Intervention i : kAllInterventions) {
    const auto& c = synth.cuts[static_cast<std::size_t>(i)];
    cuts[std::string(to_string(i))] =
        c ? nlohmann::json{{"low_cut", c->low_cut}, {"moderate_cut", c->moderate_cut}} : nlohmann::json(nullptr);
  }
  j["level_cuts"] = std::move(cuts);
  j["outcome_weeks"] = {kFirstOutcomeWeek, kLastOutcomeWeek};
  auto members = nlohmann::json::array();
  for (const auto& t : synth.truth) {
    nlohmann::json levels = nlohmann::json::object();
    nlohmann::json uplift = nlohmann::json::object();
    for (const Intervention i : kAllInterventions) {
      const auto idx = static_cast<std::size_t>(i);
      levels[std::string(to_string(i))] = to_string(t.levels[idx]);
      if (std::any_of(t.effect[idx].begin(), t.effect[idx].end(), [](double v) { return v != 0.0; })) {
        uplift[std::string(to_string(i))] = t.effect[idx];
      }
    }
    members.push_back({{"member_id", t.member_id},
                       {"archetype", synth.spec.archetypes[static_cast<std::size_t>(t.archetype)].name},
                       {"persistence", to_string(t.persistence)},
                       {"target_streak", t.target_streak},
                       {"levels", std::move(levels)},
                       {"uplift", std::move(uplift)},
                       {"p0", t.p0},
                       {"p1", t.p1}});
  }
  j["members"] = std::move(members);
  return j;
}

void write_synth(const SynthCohort& synth, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw ValidationError("synth", fmt::format("cannot write {}", (dir / name).string()));
    return out;
  };
  {
    auto out = open("members.csv");
    write_members(out, synth.cohort.members());
  }
  {
    auto out = open("visits.csv");
    write_visits(out, synth.cohort.all_visits());
  }
  {
    auto out = open("interventions.csv");
    const auto rows = synth.cohort.all_interventions();
    write_interventions(out, rows);
  }
  {
    auto out = open("truth.json");
    out << truth_json(synth).dump() << '\n';
  }
}

}  // namespace habitforge
