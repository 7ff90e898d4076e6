#pragma once

// Seeded synthetic cohorts with known structure: five time-of-day archetypes,
// a weekly attendance process with churn, confounded intervention assignment
// and injected effects on the weekly milestone.
//
// Members fall into latent persistence classes. Early churners stop attending
// within the first five weeks; the rest churn between weeks 6 and 17 or outlast
// week 17. An injected uplift of d_w moves d_6 of a member's early-churn
// probability into a "responder" class that survives past week w with
// probability d_w / d_6, so the probability of outlasting week w rises by
// exactly d_w. Responders attend every week at a fixed pace close to the
// growth of the critical count, which keeps the milestone outcome aligned with
// that survival event up to a lag of about two weeks after they churn.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "habitforge/causal.hpp"
#include "habitforge/core.hpp"

namespace habitforge {

inline constexpr int kFirstOutcomeWeek = 6;
inline constexpr int kLastOutcomeWeek = 17;
inline constexpr std::size_t kOutcomeWeeks = kLastOutcomeWeek - kFirstOutcomeWeek + 1;
using WeekProfile = std::array<double, kOutcomeWeeks>;

struct ArchetypeProfile {
  std::string name;
  double weight = 0.2;
  int weekday_hour = 8;  // entry hour; visits last until entry + 1
  int weekend_hour = 9;
  std::array<double, 5> age_band_probs{};  // over 14-20, 21-27, 28-34, 35-48, 49+
  double female_share = 0.5;
};

/// P(count > 0) = sigmoid(intercept + coefficient * confounding * x), where
/// x = 0.8 z_age - 0.8 z_bmi; positive counts are 1 + Geometric(mean extra).
struct AssignmentModel {
  Intervention intervention = Intervention::group_lessons;
  double intercept = -1.0;
  double coefficient = 1.0;
  double extra_mean = 2.0;
};

/// Additive effect on the probability of reaching each weekly milestone for
/// members at `level` of `intervention` (optionally only in one archetype).
/// Profiles must be nonnegative and non-increasing over weeks 6..17.
struct UpliftSpec {
  Intervention intervention = Intervention::group_lessons;
  Level level = Level::high;
  std::optional<std::string> archetype;
  WeekProfile by_week{};
};

struct GeneratorSpec {
  std::size_t n_members = 1000;
  std::uint64_t seed = 0;
  std::vector<ArchetypeProfile> archetypes;

  // Early-churn probability: early_min + (early_max - early_min) *
  // sigmoid(early_bias - confounding * x).
  double early_min = 0.25;
  double early_max = 0.75;
  double early_bias = 0.0;
  double confounding = 1.0;
  double long_share = 0.37;  // share of non-early members outlasting week 17
  std::array<double, 6> early_streak_probs{};  // streak 0..5 for early churners
  double middle_decay = 0.85;                  // streak 6..17 weights decay^(t-6)
  double full_year_share = 0.3;                // long members attending all 52 weeks

  // Weekly visit counts 1, 2, 3 by class.
  std::array<double, 3> early_intensity{};
  std::array<double, 3> middle_intensity{};
  std::array<double, 3> long_intensity{};
  int responder_visits = 2;

  double gap_prob = 0.10;       // isolated absent week inside a streak
  double ramp_gap_prob = 0.25;  // same, within the last ramp_weeks before churn
  int ramp_weeks = 3;
  double return_prob = 0.03;  // sporadic single visits after churn

  double hour_jitter = 0.1;    // entry shifted by one hour
  double off_archetype = 0.05;  // entry at a random opening hour

  double survey_response = 0.336;
  int contract_year = 2022;
  int clubs = 10;
  std::vector<std::string> categories = {"basic", "comfort", "premium"};

  std::vector<AssignmentModel> assignments;
  std::vector<UpliftSpec> uplifts;
};

/// Named presets: "default" (calibrated), "low-noise" (pure archetype hours),
/// "null" (default without uplifts). Throws SpecError for unknown names.
GeneratorSpec preset_spec(std::string_view name);

/// Overlays the keys of `j` onto `base`; unknown keys throw SpecError.
GeneratorSpec spec_from_json(const nlohmann::json& j, GeneratorSpec base);
nlohmann::json to_json(const GeneratorSpec& spec);

/// Throws SpecError when weights do not sum to one or parameters are out of range.
void validate(const GeneratorSpec& spec);

enum class PersistenceClass { early, responder, middle, long_term };
std::string_view to_string(PersistenceClass c);

struct MemberTruth {
  std::string member_id;
  int archetype = 0;
  PersistenceClass persistence = PersistenceClass::early;
  int target_streak = 0;
  std::array<Level, kInterventionCount> levels{};
  std::array<WeekProfile, kInterventionCount> effect{};  // uplift attributable to each intervention
  WeekProfile p0{};  // milestone probability without any uplift
  WeekProfile p1{};  // with the member's uplift
};

struct SynthCohort {
  GeneratorSpec spec;
  CohortDataset cohort;
  std::vector<MemberTruth> truth;  // aligned with cohort.members()
  std::array<std::optional<FourLevelCuts>, kInterventionCount> cuts;
};

/// Deterministic given spec.seed. Throws SpecError when an uplift would push
/// a member's milestone probability above one.
SynthCohort generate_cohort(const GeneratorSpec& spec);

/// Mean injected uplift of `intervention` at week `week` over members at
/// `level` (0 when the spec injects nothing for it). Throws LookupError when
/// the week is outside 6..17 or nobody is at the level.
double ground_truth_att(const SynthCohort& synth, Intervention intervention, Level level, int week);

nlohmann::json truth_json(const SynthCohort& synth);

/// Writes members.csv, visits.csv, interventions.csv and truth.json.
void write_synth(const SynthCohort& synth, const std::filesystem::path& dir);

}  // namespace habitforge
