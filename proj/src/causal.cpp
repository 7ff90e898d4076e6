#include "habitforge/causal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "habitforge/error.hpp"
#include "habitforge/random.hpp"

namespace habitforge {

namespace {

constexpr std::array<std::pair<TreatmentVariable, std::string_view>, 8> kTreatmentNames = {{
    {TreatmentVariable::group_lessons, "group_lessons"},
    {TreatmentVariable::pt_sessions, "pt_sessions"},
    {TreatmentVariable::invitation_credits, "invitation_credits"},
    {TreatmentVariable::distinct_clubs, "distinct_clubs"},
    {TreatmentVariable::distinct_group_lessons, "distinct_group_lessons"},
    {TreatmentVariable::form_level, "form_level"},
    {TreatmentVariable::experience_level, "experience_level"},
    {TreatmentVariable::est_visit_frequency, "est_visit_frequency"},
}};

}  // namespace

std::string_view to_string(TreatmentVariable variable) {
  for (const auto& [v, name] : kTreatmentNames) {
    if (v == variable) return name;
  }
  return "?";
}

std::optional<TreatmentVariable> parse_treatment(std::string_view name) {
  for (const auto& [v, n] : kTreatmentNames) {
    if (n == name) return v;
  }
  return std::nullopt;
}

bool is_self_reported(TreatmentVariable variable) { return ordinal_levels(variable) > 0; }

int ordinal_levels(TreatmentVariable variable) {
  switch (variable) {
    case TreatmentVariable::form_level: return 3;
    case TreatmentVariable::experience_level: return 4;
    case TreatmentVariable::est_visit_frequency: return 3;
    default: return 0;
  }
}

std::string_view to_string(Level level) {
  switch (level) {
    case Level::none: return "none";
    case Level::low: return "low";
    case Level::moderate: return "moderate";
    case Level::high: return "high";
  }
  return "?";
}

std::optional<Level> parse_level(std::string_view name) {
  for (const Level l : {Level::none, Level::low, Level::moderate, Level::high}) {
    if (to_string(l) == name) return l;
  }
  return std::nullopt;
}

FourLevelCuts four_level_cuts(std::span<const int> values) {
  std::vector<int> positives;
  for (const int v : values) {
    if (v < 0) throw SchemeError("causal", "treatment values must be nonnegative");
    if (v > 0) positives.push_back(v);
  }
  if (positives.empty()) {
    throw SchemeError("causal", "four-level binarization needs at least one positive value");
  }
  std::sort(positives.begin(), positives.end());
  FourLevelCuts cuts;
  cuts.positives = positives.size();
  const std::size_t n = positives.size();
  // positives[i] has i + 1 values at or below it once the run of ties ends.
  for (std::size_t i = 0; i < n; ++i) {
    if (i + 1 < n && positives[i + 1] == positives[i]) continue;
    const std::size_t at_or_below = i + 1;
    if (3 * at_or_below <= n) cuts.low_cut = positives[i];
    if (3 * at_or_below <= 2 * n) cuts.moderate_cut = positives[i];
  }
  return cuts;
}

Level four_level(int value, const FourLevelCuts& cuts) {
  if (value <= 0) return Level::none;
  if (value <= cuts.low_cut) return Level::low;
  if (value <= cuts.moderate_cut) return Level::moderate;
  return Level::high;
}

std::vector<Level> binarize_four_level(std::span<const int> values) {
  const auto cuts = four_level_cuts(values);
  std::vector<Level> out;
  out.reserve(values.size());
  for (const int v : values) out.push_back(four_level(v, cuts));
  return out;
}

std::vector<std::uint8_t> binarize_threshold(std::span<const int> values, int threshold,
                                             int levels) {
  if (threshold < 0 || threshold > levels - 2) {
    throw SchemeError("causal", fmt::format("threshold {} outside 0..{}", threshold, levels - 2));
  }
  std::vector<std::uint8_t> out;
  out.reserve(values.size());
  for (const int v : values) {
    if (v < 0 || v >= levels) throw SchemeError("causal", fmt::format("ordinal value {} out of range", v));
    out.push_back(v > threshold ? 1 : 0);
  }
  return out;
}

std::string TreatmentSpec::level_name() const {
  if (four_level) return std::string(to_string(treated_level));
  return fmt::format("gt{}", threshold);
}

void validate(const TreatmentSpec& spec) {
  if (is_self_reported(spec.variable)) {
    if (spec.four_level) {
      throw SchemeError("causal", fmt::format("{} is ordinal; use a threshold scheme",
                                              to_string(spec.variable)));
    }
    const int levels = ordinal_levels(spec.variable);
    if (spec.threshold < 0 || spec.threshold > levels - 2) {
      throw SchemeError("causal", fmt::format("threshold {} outside 0..{} for {}", spec.threshold,
                                              levels - 2, to_string(spec.variable)));
    }
  } else {
    if (!spec.four_level) {
      throw SchemeError("causal", fmt::format("{} is an intervention count; use the four-level scheme",
                                              to_string(spec.variable)));
    }
    if (spec.treated_level == Level::none) {
      throw SchemeError("causal", "the treated level cannot be none");
    }
  }
}

std::vector<std::optional<int>> treatment_values(const CohortDataset& cohort,
                                                 TreatmentVariable variable) {
  std::vector<std::optional<int>> out(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& m = cohort.member(i);
    switch (variable) {
      case TreatmentVariable::form_level: out[i] = m.form_level; break;
      case TreatmentVariable::experience_level: out[i] = m.experience_level; break;
      case TreatmentVariable::est_visit_frequency: out[i] = m.est_visit_frequency; break;
      default:
        out[i] = cohort.interventions(i)[static_cast<Intervention>(static_cast<std::size_t>(variable))];
    }
  }
  return out;
}

double estimate_att(std::span<const MatchedPair> pairs, std::span<const std::uint8_t> outcome) {
  if (pairs.empty()) throw EstimationError("causal", "no matched pairs to estimate from");
  long sum = 0;
  for (const auto& p : pairs) sum += int(outcome[p.treated] != 0) - int(outcome[p.control] != 0);
  return static_cast<double>(sum) / static_cast<double>(pairs.size());
}

namespace {

double percentile(const std::vector<double>& sorted, double q) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

Band bootstrap_band(std::span<const MatchedPair> pairs, std::span<const std::uint8_t> outcome,
                    int resamples, std::uint64_t seed) {
  if (pairs.empty()) throw EstimationError("causal", "no matched pairs to resample");
  std::vector<int> diffs;
  diffs.reserve(pairs.size());
  for (const auto& p : pairs) diffs.push_back(int(outcome[p.treated] != 0) - int(outcome[p.control] != 0));
  if (resamples < 1) {
    const double att = estimate_att(pairs, outcome);
    return {att, att};
  }
  Rng rng(seed);
  const int n = static_cast<int>(diffs.size());
  std::vector<double> estimates(static_cast<std::size_t>(resamples));
  for (auto& e : estimates) {
    long sum = 0;
    for (int i = 0; i < n; ++i) sum += diffs[static_cast<std::size_t>(rng.uniform_int(0, n - 1))];
    e = static_cast<double>(sum) / n;
  }
  std::sort(estimates.begin(), estimates.end());
  return {percentile(estimates, 0.025), percentile(estimates, 0.975)};
}

PsmFit run_psm(const Eigen::MatrixXd& X, std::span<const std::uint8_t> treated,
               const PsmOptions& options) {
  PsmFit fit;
  fit.model = fit_propensity(X, treated, options.logistic);
  const std::vector<double> scores(fit.model.scores.data(),
                                   fit.model.scores.data() + fit.model.scores.size());
  fit.matches = match_nearest(scores, treated, options.caliper);
  return fit;
}

std::vector<double> reestimate_with_column(const Eigen::MatrixXd& X,
                                           std::span<const std::uint8_t> treated,
                                           const Eigen::VectorXd& extra,
                                           std::span<const std::vector<std::uint8_t>> outcomes,
                                           const PsmOptions& options) {
  Eigen::MatrixXd augmented(X.rows(), X.cols() + 1);
  augmented.leftCols(X.cols()) = X;
  augmented.col(X.cols()) = extra;
  const auto fit = run_psm(augmented, treated, options);
  std::vector<double> out;
  out.reserve(outcomes.size());
  for (const auto& y : outcomes) out.push_back(estimate_att(fit.matches.pairs, y));
  return out;
}

std::vector<Refutation> refute_random_common_cause(
    const Eigen::MatrixXd& X, std::span<const std::uint8_t> treated,
    std::span<const std::vector<std::uint8_t>> outcomes, std::span<const Band> bands, int draws,
    std::uint64_t seed, const PsmOptions& options) {
  if (bands.size() != outcomes.size()) {
    throw EstimationError("causal", "one resampling band is needed per outcome");
  }
  std::vector<Refutation> out(outcomes.size());
  for (int d = 0; d < draws; ++d) {
    Rng rng(Rng::split(seed, static_cast<std::uint64_t>(d)));
    Eigen::VectorXd extra(X.rows());
    for (Eigen::Index i = 0; i < extra.size(); ++i) extra(i) = rng.normal();
    const auto estimates = reestimate_with_column(X, treated, extra, outcomes, options);
    for (std::size_t o = 0; o < outcomes.size(); ++o) out[o].draws.push_back(estimates[o]);
  }
  for (std::size_t o = 0; o < outcomes.size(); ++o) {
    auto& r = out[o];
    if (r.draws.empty()) continue;
    double sum = 0.0;
    int inside = 0;
    for (const double e : r.draws) {
      sum += e;
      inside += bands[o].contains(e) ? 1 : 0;
    }
    r.new_estimate = sum / static_cast<double>(r.draws.size());
    r.p_value = static_cast<double>(inside) / static_cast<double>(r.draws.size());
  }
  return out;
}

std::vector<Covariate> covariates_for(TreatmentVariable variable, bool within_cluster) {
  std::vector<Covariate> out = {Covariate::age,       Covariate::gender,
                                Covariate::bmi,       Covariate::contract_start,
                                Covariate::main_club, Covariate::membership_category};
  if (!is_self_reported(variable)) out.push_back(Covariate::experience_level);
  if (!within_cluster) out.push_back(Covariate::cluster);
  return out;
}

std::uint64_t cell_seed(std::uint64_t seed, std::string_view treatment, std::string_view level,
                        std::string_view cluster) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](std::string_view s) {
    for (const char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  mix(treatment);
  mix(level);
  mix(cluster);
  return Rng::split(seed, h);
}

EffectSeries estimate_series(const CausalContext& ctx, const TreatmentSpec& spec,
                             std::span<const int> weeks, std::span<const std::size_t> rows,
                             bool within_cluster, std::string cluster_name,
                             const PsmOptions& options) {
  validate(spec);
  const CohortDataset& cohort = *ctx.cohort;
  const auto values = treatment_values(cohort, spec.variable);

  // Treatment status per member: 1 treated, 0 control, -1 outside the contrast.
  std::vector<int> status(cohort.size(), -1);
  if (spec.four_level) {
    std::vector<int> counts(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) counts[i] = values[i].value_or(0);
    const auto cuts = four_level_cuts(counts);
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const Level l = four_level(counts[i], cuts);
      if (l == Level::none) status[i] = 0;
      if (l == spec.treated_level) status[i] = 1;
    }
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!cohort.member(i).complete_responder() || !values[i]) continue;
      status[i] = *values[i] > spec.threshold ? 1 : 0;
    }
  }

  std::vector<std::size_t> analysis;
  std::vector<std::uint8_t> treated;
  for (const std::size_t r : rows) {
    if (status[r] < 0) continue;
    analysis.push_back(r);
    treated.push_back(static_cast<std::uint8_t>(status[r]));
  }

  EffectSeries out;
  auto& diag = out.diagnostics;
  diag.treatment = std::string(to_string(spec.variable));
  diag.level = spec.level_name();
  diag.cluster = cluster_name;
  diag.n_treated = static_cast<std::size_t>(std::count(treated.begin(), treated.end(), 1));
  diag.n_control = treated.size() - diag.n_treated;
  diag.seed = cell_seed(options.seed, diag.treatment, diag.level, diag.cluster);
  if (diag.n_treated == 0) {
    throw MatchingError("causal", fmt::format("no treated members for {} {} in {}", diag.treatment,
                                              diag.level, cluster_name));
  }
  if (diag.n_control == 0) {
    throw MatchingError("causal", fmt::format("no control members for {} {} in {}", diag.treatment,
                                              diag.level, cluster_name));
  }

  const auto covariates = covariates_for(spec.variable, within_cluster);
  const auto encoded = encode_covariates(cohort, analysis, ctx.labels, covariates);
  diag.covariates = encoded.columns;
  PsmOptions cell = options;
  cell.seed = diag.seed;
  const auto fit = run_psm(encoded.X, treated, cell);
  diag.n_unmatched = fit.matches.unmatched_treated.size();
  diag.lambda = fit.model.lambda;
  diag.iterations = fit.model.iterations;
  diag.near_separation = fit.model.near_separation;
  diag.ridge_increased = fit.model.ridge_increased;
  if (fit.matches.pairs.empty()) {
    throw EstimationError("causal", fmt::format("no matched pairs for {} {} in {}", diag.treatment,
                                                diag.level, cluster_name));
  }

  std::vector<std::vector<std::uint8_t>> outcomes;
  std::vector<Band> bands;
  for (const int week : weeks) {
    const auto critical = ctx.table->critical_for(week);
    if (!critical) {
      diag.skipped_weeks.push_back(week);
      continue;
    }
    std::vector<std::uint8_t> y(analysis.size());
    double treated_sum = 0.0, control_sum = 0.0;
    for (std::size_t a = 0; a < analysis.size(); ++a) {
      y[a] = reaches_milestone(ctx.visits[analysis[a]], week, *critical) ? 1 : 0;
      (treated[a] ? treated_sum : control_sum) += y[a];
    }
    CausalEstimate e;
    e.spec = spec;
    e.week = week;
    e.cluster = cluster_name;
    e.att = estimate_att(fit.matches.pairs, y);
    e.naive = treated_sum / static_cast<double>(diag.n_treated) -
              control_sum / static_cast<double>(diag.n_control);
    e.n_treated = diag.n_treated;
    e.n_matched = fit.matches.pairs.size();
    e.band = bootstrap_band(fit.matches.pairs, y, options.bootstrap,
                            Rng::split(diag.seed, 1000 + static_cast<std::uint64_t>(week)));
    out.estimates.push_back(e);
    bands.push_back(e.band);
    outcomes.push_back(std::move(y));
  }

  if (options.refute_draws > 0 && !outcomes.empty()) {
    const auto refutations = refute_random_common_cause(encoded.X, treated, outcomes, bands,
                                                        options.refute_draws,
                                                        Rng::split(diag.seed, 1), cell);
    for (std::size_t o = 0; o < refutations.size(); ++o) {
      out.estimates[o].refute_estimate = refutations[o].new_estimate;
      out.estimates[o].refute_p = refutations[o].p_value;
    }
  }
  return out;
}

EffectSeries effect_timeline(const CausalContext& ctx, const TreatmentSpec& spec,
                             std::span<const int> weeks, const PsmOptions& options) {
  std::vector<std::size_t> rows(ctx.cohort->size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return estimate_series(ctx, spec, weeks, rows, false, "all", options);
}

ClusterEffects effect_by_cluster(const CausalContext& ctx, const TreatmentSpec& spec,
                                 std::span<const int> weeks, const PsmOptions& options) {
  validate(spec);
  ClusterEffects out;
  for (std::size_t c = 0; c < ctx.cluster_names.size(); ++c) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ctx.labels.size(); ++i) {
      if (ctx.labels[i] == static_cast<int>(c)) rows.push_back(i);
    }
    try {
      if (rows.empty()) throw MatchingError("causal", "empty cluster");
      out.series.push_back(estimate_series(ctx, spec, weeks, rows, true, ctx.cluster_names[c], options));
    } catch (const MatchingError&) {
      out.omitted.push_back(ctx.cluster_names[c]);
    } catch (const EstimationError&) {
      out.omitted.push_back(ctx.cluster_names[c]);
    }
  }
  return out;
}

void write_estimates_csv(std::ostream& out, std::span<const CausalEstimate> estimates) {
  out << "treatment,level,week,cluster,att,n_treated,n_matched,refute_estimate,refute_p\n";
  for (const auto& e : estimates) {
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", to_string(e.spec.variable),
                       e.spec.level_name(), e.week, e.cluster, e.att, e.n_treated, e.n_matched,
                       e.refute_estimate ? fmt::format("{}", *e.refute_estimate) : std::string(),
                       e.refute_p ? fmt::format("{}", *e.refute_p) : std::string());
  }
}

nlohmann::json to_json(const CellDiagnostics& d) {
  return {{"treatment", d.treatment},
          {"level", d.level},
          {"cluster", d.cluster},
          {"n_treated", d.n_treated},
          {"n_control", d.n_control},
          {"n_unmatched", d.n_unmatched},
          {"lambda", d.lambda},
          {"iterations", d.iterations},
          {"near_separation", d.near_separation},
          {"ridge_increased", d.ridge_increased},
          {"seed", d.seed},
          {"covariates", d.covariates},
          {"skipped_weeks", d.skipped_weeks}};
}

}  // namespace habitforge
