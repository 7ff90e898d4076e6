#pragma once

// Propensity-score-matching effect estimates of early interventions on the
// weekly milestone outcome, with per-cluster reruns and a random-common-cause
// refutation.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "habitforge/core.hpp"
#include "habitforge/critical.hpp"
#include "habitforge/propensity.hpp"

namespace habitforge {

enum class TreatmentVariable {
  group_lessons,
  pt_sessions,
  invitation_credits,
  distinct_clubs,
  distinct_group_lessons,
  form_level,
  experience_level,
  est_visit_frequency,
};

std::string_view to_string(TreatmentVariable variable);
std::optional<TreatmentVariable> parse_treatment(std::string_view name);
bool is_self_reported(TreatmentVariable variable);
/// Number of ordinal levels of a self-reported variable (0 for interventions).
int ordinal_levels(TreatmentVariable variable);

enum class Level { none, low, moderate, high };
std::string_view to_string(Level level);
std::optional<Level> parse_level(std::string_view name);

/// Positive values v are Low when v <= low_cut, Moderate when v <= moderate_cut,
/// otherwise High. Cuts are the largest positive values whose share of the
/// positives is at most 1/3 and 2/3 (0 when no such value exists).
struct FourLevelCuts {
  int low_cut = 0;
  int moderate_cut = 0;
  std::size_t positives = 0;
};

/// Throws SchemeError when no value is positive.
FourLevelCuts four_level_cuts(std::span<const int> values);
Level four_level(int value, const FourLevelCuts& cuts);
std::vector<Level> binarize_four_level(std::span<const int> values);

/// treated iff value > threshold. Throws SchemeError unless 0 <= threshold <= levels - 2.
std::vector<std::uint8_t> binarize_threshold(std::span<const int> values, int threshold, int levels);

struct TreatmentSpec {
  TreatmentVariable variable = TreatmentVariable::group_lessons;
  bool four_level = true;
  Level treated_level = Level::high;  // four_level: contrasted against None
  int threshold = 0;                  // threshold scheme: value > threshold is treated

  /// "low" / "moderate" / "high", or "gt<t>" for thresholds.
  std::string level_name() const;
};

/// Validates the scheme against the variable family. Throws SchemeError.
void validate(const TreatmentSpec& spec);

/// Per-member treatment values of `variable`; missing survey answers are nullopt.
std::vector<std::optional<int>> treatment_values(const CohortDataset& cohort,
                                                 TreatmentVariable variable);

/// Mean over pairs of outcome[treated] - outcome[control]. Throws
/// EstimationError without pairs.
double estimate_att(std::span<const MatchedPair> pairs, std::span<const std::uint8_t> outcome);

struct Band {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// 2.5/97.5 percentiles of the ATT over pair-level resamples.
Band bootstrap_band(std::span<const MatchedPair> pairs, std::span<const std::uint8_t> outcome,
                    int resamples, std::uint64_t seed);

struct PsmOptions {
  LogisticOptions logistic;
  std::optional<double> caliper;
  int bootstrap = 1000;
  int refute_draws = 0;
  std::uint64_t seed = 0;
};

struct PsmFit {
  PropensityModel model;
  MatchResult matches;
};

PsmFit run_psm(const Eigen::MatrixXd& X, std::span<const std::uint8_t> treated,
               const PsmOptions& options);

struct Refutation {
  double new_estimate = 0.0;  // mean over draws
  double p_value = 0.0;       // share of draws inside the original bootstrap band
  std::vector<double> draws;
};

/// Appends `extra` as a covariate, refits, rematches and re-estimates each outcome.
std::vector<double> reestimate_with_column(const Eigen::MatrixXd& X,
                                           std::span<const std::uint8_t> treated,
                                           const Eigen::VectorXd& extra,
                                           std::span<const std::vector<std::uint8_t>> outcomes,
                                           const PsmOptions& options);

/// Random-common-cause refuter run jointly for several outcomes sharing one
/// treatment assignment; one result per outcome.
std::vector<Refutation> refute_random_common_cause(
    const Eigen::MatrixXd& X, std::span<const std::uint8_t> treated,
    std::span<const std::vector<std::uint8_t>> outcomes, std::span<const Band> bands, int draws,
    std::uint64_t seed, const PsmOptions& options);

struct CausalEstimate {
  TreatmentSpec spec;
  int week = 0;
  std::string cluster = "all";
  double att = 0.0;
  double naive = 0.0;  // difference in means before matching
  std::size_t n_treated = 0;
  std::size_t n_matched = 0;
  Band band;
  std::optional<double> refute_estimate;
  std::optional<double> refute_p;
};

/// Inputs shared across treatment cells. Spans must outlive the context.
struct CausalContext {
  const CohortDataset* cohort = nullptr;
  std::span<const int> labels;  // hard cluster label per member
  std::vector<std::string> cluster_names;
  std::span<const CumulativeVisits> visits;
  const CriticalVisitTable* table = nullptr;
};

struct CellDiagnostics {
  std::string treatment;
  std::string level;
  std::string cluster;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  std::size_t n_unmatched = 0;
  double lambda = 0.0;
  int iterations = 0;
  bool near_separation = false;
  bool ridge_increased = false;
  std::uint64_t seed = 0;
  std::vector<std::string> covariates;
  std::vector<int> skipped_weeks;  // no critical count available
};

struct EffectSeries {
  std::vector<CausalEstimate> estimates;
  CellDiagnostics diagnostics;
};

/// Covariate set for a treatment family; cluster-specific runs drop `cluster`.
std::vector<Covariate> covariates_for(TreatmentVariable variable, bool within_cluster);

/// One estimate per week for the members in `rows`. Self-reported treatments
/// restrict to complete responders. Treatments are measured over the whole
/// cohort (for four-level cuts) before restricting.
EffectSeries estimate_series(const CausalContext& ctx, const TreatmentSpec& spec,
                             std::span<const int> weeks, std::span<const std::size_t> rows,
                             bool within_cluster, std::string cluster_name,
                             const PsmOptions& options);

EffectSeries effect_timeline(const CausalContext& ctx, const TreatmentSpec& spec,
                             std::span<const int> weeks, const PsmOptions& options);

struct ClusterEffects {
  std::vector<EffectSeries> series;
  std::vector<std::string> omitted;  // clusters too small to match
};

ClusterEffects effect_by_cluster(const CausalContext& ctx, const TreatmentSpec& spec,
                                 std::span<const int> weeks, const PsmOptions& options);

/// Stable per-cell seed so a cell's random streams do not depend on which
/// other cells run alongside it.
std::uint64_t cell_seed(std::uint64_t seed, std::string_view treatment, std::string_view level,
                        std::string_view cluster);

void write_estimates_csv(std::ostream& out, std::span<const CausalEstimate> estimates);
nlohmann::json to_json(const CellDiagnostics& d);

}  // namespace habitforge
