#include "habitforge/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "habitforge/causal.hpp"
#include "habitforge/cluster.hpp"
#include "habitforge/core.hpp"
#include "habitforge/critical.hpp"
#include "habitforge/csv.hpp"
#include "habitforge/demographics.hpp"
#include "habitforge/error.hpp"
#include "habitforge/survival.hpp"
#include "habitforge/svg.hpp"
#include "habitforge/synth.hpp"
#include "habitforge/vectorize.hpp"

namespace habitforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct KeyInfo {
  const char* key;
  const char* fallback;
  const char* help;
};

// Every configurable value with its default. Empty defaults are resolved per
// subcommand and echoed in the manifest.
const std::vector<KeyInfo> kKeys = {
    {"in", ".", "input directory"},
    {"out", ".", "output directory"},
    {"seed", "0", "global seed (falls back to HABITFORGE_SEED)"},
    {"k", "5", "number of behavioral clusters"},
    {"window", "6", "visit-vector window in weeks"},
    {"later_window", "17", "window of the second clustering for the transition matrix"},
    {"gap_tolerance", "1", "absent weeks tolerated inside a streak"},
    {"weeks", "", "week range a..b (critical: 6..52, causal: 6..17)"},
    {"treatment", "all", "treatment variable or all"},
    {"level", "all", "low|moderate|high, gt<t> for survey thresholds, or all"},
    {"refute", "0", "random-common-cause refutation draws"},
    {"n", "", "members to generate (default: the spec's)"},
    {"spec", "default", "generator preset (default, low-noise, null) or JSON spec file"},
    {"nmf_max_iters", "1000", "NMF iteration cap"},
    {"nmf_tol", "1e-7", "NMF relative improvement tolerance"},
    {"nmf_init", "nndsvda", "NMF initialization: nndsvda or random (seeded)"},
    {"normalize", "false", "scale each visit vector to unit sum"},
    {"lambda", "0.001", "ridge penalty of the propensity model"},
    {"bootstrap", "1000", "pair-level bootstrap resamples"},
    {"caliper", "", "matching caliper on the score scale (empty: none)"},
    {"age_bands", "14,21,28,35,49", "inclusive lower bounds of the age bands"},
    {"survival_bins", "1-5,6-16,17-29,30-52", "streak bins for gap statistics"},
    {"clusters", "auto", "cluster model JSON, 'compute', or 'auto' (reuse cluster_model.json)"},
    {"estimates", "auto", "causal estimates CSV for report, 'compute', or 'auto'"},
    {"contract_type", "annual", "contract type kept at ingestion (any: no filter)"},
    {"paid", "true", "paid status kept at ingestion (any: no filter)"},
};

using Config = std::map<std::string, std::string>;

std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

bool known_key(const std::string& key) {
  return std::any_of(kKeys.begin(), kKeys.end(), [&](const KeyInfo& k) { return key == k.key; });
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "";
  return v.dump();
}

Config read_config_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError(fmt::format("cannot read config file {}", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  Config out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw UsageError(fmt::format("config file {} is not valid JSON: {}", path.string(), e.what()));
    }
    const json& obj = j.contains("config") ? j.at("config") : j;
    for (const auto& [key, value] : obj.items()) out[normalize_key(key)] = scalar_text(value);
  } else {
    std::istringstream lines(text);
    std::string line;
    int number = 0;
    while (std::getline(lines, line)) {
      ++number;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string_view::npos) {
        throw UsageError(fmt::format("{}:{}: expected key = value", path.string(), number));
      }
      out[normalize_key(std::string(trim(t.substr(0, eq))))] = std::string(trim(t.substr(eq + 1)));
    }
  }
  for (const auto& [key, _] : out) {
    if (!known_key(key)) throw UsageError(fmt::format("unknown config key '{}' in {}", key, path.string()));
  }
  return out;
}

// ---- typed access ----------------------------------------------------------

long long to_integer(const Config& cfg, const std::string& key) {
  const auto& text = cfg.at(key);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(text.c_str(), &end, 10);
  if (text.empty() || *end != '\0' || errno != 0) {
    throw UsageError(fmt::format("{} expects an integer, got '{}'", key, text));
  }
  return v;
}

int get_int(const Config& cfg, const std::string& key) {
  const auto v = to_integer(cfg, key);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw UsageError(fmt::format("{} is out of range", key));
  }
  return static_cast<int>(v);
}

std::uint64_t get_seed(const Config& cfg) {
  const auto& text = cfg.at("seed");
  char* end = nullptr;
  errno = 0;
  const auto v = std::strtoull(text.c_str(), &end, 10);
  if (text.empty() || *end != '\0' || errno != 0 || text.front() == '-') {
    throw UsageError(fmt::format("seed expects a nonnegative integer, got '{}'", text));
  }
  return v;
}

double get_real(const Config& cfg, const std::string& key) {
  const auto& text = cfg.at(key);
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || *end != '\0' || !std::isfinite(v)) {
    throw UsageError(fmt::format("{} expects a number, got '{}'", key, text));
  }
  return v;
}

bool get_bool(const Config& cfg, const std::string& key) {
  const auto& text = cfg.at(key);
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw UsageError(fmt::format("{} expects true or false, got '{}'", key, text));
}

std::pair<int, int> get_weeks(const Config& cfg) {
  const auto& text = cfg.at("weeks");
  const auto dots = text.find("..");
  Config tmp;
  try {
    if (dots == std::string::npos) {
      tmp["weeks"] = text;
      const int w = get_int(tmp, "weeks");
      return {w, w};
    }
    tmp["a"] = text.substr(0, dots);
    tmp["b"] = text.substr(dots + 2);
    const int a = get_int(tmp, "a"), b = get_int(tmp, "b");
    if (a < 1 || b < a || b > kContractWeeks) throw UsageError("");
    return {a, b};
  } catch (const UsageError&) {
    throw UsageError(fmt::format("weeks expects a..b with 1 <= a <= b <= {}, got '{}'",
                                 kContractWeeks, text));
  }
}

std::vector<int> week_list(std::pair<int, int> range) {
  std::vector<int> out;
  for (int w = range.first; w <= range.second; ++w) out.push_back(w);
  return out;
}

AgeBands get_age_bands(const Config& cfg) {
  AgeBands bands;
  bands.lower_bounds.clear();
  for (const auto& field : split_fields(cfg.at("age_bands"), ',')) {
    Config tmp{{"age_bands", std::string(trim(field))}};
    bands.lower_bounds.push_back(get_int(tmp, "age_bands"));
  }
  if (bands.lower_bounds.empty() || !std::is_sorted(bands.lower_bounds.begin(), bands.lower_bounds.end()) ||
      std::adjacent_find(bands.lower_bounds.begin(), bands.lower_bounds.end()) != bands.lower_bounds.end()) {
    throw UsageError("age_bands must be strictly increasing lower bounds");
  }
  return bands;
}

CohortRules get_rules(const Config& cfg) {
  CohortRules rules;
  const auto& type = cfg.at("contract_type");
  rules.contract_type = type == "any" ? std::nullopt : std::optional<std::string>(type);
  if (cfg.at("paid") == "any") {
    rules.paid = std::nullopt;
  } else {
    rules.paid = get_bool(cfg, "paid");
  }
  return rules;
}

// ---- run context -----------------------------------------------------------

struct Run {
  std::string subcommand;
  Config cfg;
  fs::path in;
  fs::path out;
  json extras = json::object();
  std::set<std::string> outputs;
  std::ostream* log = nullptr;

  void write(const std::string& name, const std::string& content) {
    const fs::path path = out / name;
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cli", fmt::format("cannot write {}", path.string()));
    f << content;
    if (!f) throw ValidationError("cli", fmt::format("failed writing {}", path.string()));
    outputs.insert(name);
  }

  template <typename Fn>
  void write_with(const std::string& name, Fn&& fn) {
    std::ostringstream s;
    fn(s);
    write(name, s.str());
  }

  void write_manifest() {
    json j;
    j["tool"] = "habitforge";
    j["subcommand"] = subcommand;
    j["config"] = json(cfg);
    j["outputs"] = json(std::vector<std::string>(outputs.begin(), outputs.end()));
    for (const auto& [key, value] : extras.items()) j[key] = value;
    const fs::path path = out / fmt::format("manifest_{}.json", subcommand);
    fs::create_directories(out);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cli", fmt::format("cannot write {}", path.string()));
    f << j.dump(2) << '\n';
  }
};

CohortDataset load(const Run& run) { return load_cohort(run.in, get_rules(run.cfg)); }

NmfOptions nmf_options(const Config& cfg) {
  NmfOptions o;
  o.k = get_int(cfg, "k");
  o.max_iters = get_int(cfg, "nmf_max_iters");
  o.tol = get_real(cfg, "nmf_tol");
  o.seed = get_seed(cfg);
  const auto& init = cfg.at("nmf_init");
  if (init == "random") {
    o.init = NmfInit::random;
  } else if (init != "nndsvda") {
    throw UsageError(fmt::format("unknown nmf_init '{}'", init));
  }
  if (o.k < 1) throw UsageError("k must be positive");
  if (o.max_iters < 1) throw UsageError("nmf_max_iters must be positive");
  return o;
}

int get_window(const Config& cfg, const std::string& key) {
  const int w = get_int(cfg, key);
  if (w < 1 || w > kContractWeeks) throw UsageError(fmt::format("{} must lie in 1..{}", key, kContractWeeks));
  return w;
}

ClusterModel compute_clusters(const CohortDataset& cohort, const Config& cfg) {
  const auto matrix = build_matrix(cohort, get_window(cfg, "window"), get_bool(cfg, "normalize"));
  return fit_cluster_model(matrix, nmf_options(cfg));
}

// Resolves the `clusters` key: a model file matching the cohort, or a fresh fit.
ClusterModel obtain_clusters(Run& run, const CohortDataset& cohort) {
  std::string source = run.cfg.at("clusters");
  if (source == "auto") {
    source = "compute";
    for (const fs::path& dir : {run.in, run.out}) {
      if (fs::exists(dir / "cluster_model.json")) {
        source = (dir / "cluster_model.json").string();
        break;
      }
    }
  }
  run.cfg["clusters"] = source;
  if (source == "compute") return compute_clusters(cohort, run.cfg);
  std::ifstream f(source, std::ios::binary);
  if (!f) throw ValidationError("cli", fmt::format("cannot read cluster model {}", source));
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ParseError("nmf", fmt::format("{}: {}", source, e.what()));
  }
  ClusterModel model = cluster_model_from_json(j);
  bool match = model.member_ids.size() == cohort.size();
  for (std::size_t i = 0; match && i < cohort.size(); ++i) match = model.member_ids[i] == cohort.member(i).member_id;
  if (!match) {
    throw ValidationError("nmf", fmt::format("cluster model {} does not cover the loaded cohort", source));
  }
  return model;
}

std::string cdf_rows(std::span<const CdfPoint> cdf, const std::string& prefix) {
  std::string s;
  for (const auto& p : cdf) s += fmt::format("{}{},{}\n", prefix, p.value, p.cumulative);
  return s;
}

// ---- subcommands -----------------------------------------------------------

void cmd_generate(Run& run) {
  const std::string& name = run.cfg.at("spec");
  GeneratorSpec spec;
  if (name == "default" || name == "low-noise" || name == "null") {
    spec = preset_spec(name);
  } else {
    std::ifstream f(name, std::ios::binary);
    if (!f) throw SpecError("synth", fmt::format("unknown preset or unreadable spec file '{}'", name));
    json j;
    try {
      j = json::parse(f);
    } catch (const json::exception& e) {
      throw SpecError("synth", fmt::format("{}: {}", name, e.what()));
    }
    const std::string base = j.contains("preset") ? j.at("preset").get<std::string>() : "default";
    j.erase("preset");
    spec = spec_from_json(j, preset_spec(base));
  }
  if (!run.cfg.at("n").empty()) {
    const auto n = to_integer(run.cfg, "n");
    if (n < 0) throw UsageError("n must be nonnegative");
    spec.n_members = static_cast<std::size_t>(n);
  }
  spec.seed = get_seed(run.cfg);
  run.cfg["n"] = std::to_string(spec.n_members);
  const auto synth = generate_cohort(spec);
  run.write_with("members.csv", [&](std::ostream& o) { write_members(o, synth.cohort.members()); });
  run.write_with("visits.csv", [&](std::ostream& o) { write_visits(o, synth.cohort.all_visits()); });
  run.write_with("interventions.csv", [&](std::ostream& o) {
    const auto rows = synth.cohort.all_interventions();
    write_interventions(o, rows);
  });
  run.write("truth.json", truth_json(synth).dump() + "\n");
  run.extras["members"] = synth.cohort.size();
  run.extras["visits"] = synth.cohort.visit_count();
  *run.log << fmt::format("generate: {} members, {} visits\n", synth.cohort.size(), synth.cohort.visit_count());
}

void cmd_vectorize(Run& run) {
  const auto cohort = load(run);
  const int window = get_window(run.cfg, "window");
  const auto matrix = build_matrix(cohort, window, get_bool(run.cfg, "normalize"));
  run.write_with(fmt::format("visit_matrix_w{}.csv", window), [&](std::ostream& o) { write_matrix_csv(o, matrix); });
  const auto zero = std::count(matrix.zero_row.begin(), matrix.zero_row.end(), true);
  run.extras["zero_rows"] = zero;
  *run.log << fmt::format("vectorize: {} members, {} without visits in the first {} weeks\n",
                          matrix.size(), zero, window);
}

void write_cluster_outputs(Run& run, const ClusterModel& model, const ClusterModel& later) {
  run.write("cluster_model.json", to_json(model).dump() + "\n");
  run.write(fmt::format("cluster_model_w{}.json", later.window_weeks), to_json(later).dump() + "\n");
  const auto transition = transition_matrix(model.member_ids, model.labels, later.member_ids, later.labels, model.k);
  run.write_with("transition.csv", [&](std::ostream& o) { write_transition_csv(o, transition, model.names); });
  run.write_with("cluster_components.csv", [&](std::ostream& o) {
    o << "cluster,feature,weight\n";
    for (int c = 0; c < model.k; ++c) {
      for (int f = 0; f < kFeatureCount; ++f) {
        o << fmt::format("{},{},{}\n", model.names[static_cast<std::size_t>(c)], feature_name(f), model.H(c, f));
      }
    }
  });
  run.write_with("membership_cdf.csv", [&](std::ostream& o) {
    o << "cluster,probability,cumulative\n";
    for (int c = 0; c < model.k; ++c) {
      const auto cdf = membership_prob_cdf(model.probabilities, model.labels, c, model.zero_row);
      o << cdf_rows(cdf, model.names[static_cast<std::size_t>(c)] + ",");
    }
  });
  run.write_with("nmf_objective.csv", [&](std::ostream& o) {
    o << "iteration,objective\n";
    for (std::size_t i = 0; i < model.objective.size(); ++i) o << fmt::format("{},{}\n", i, model.objective[i]);
  });
  run.extras["iterations"] = model.iterations;
  run.extras["converged"] = model.converged;
  run.extras["final_error"] = model.final_error;
  run.extras["transition_diagonal"] = transition.diagonal_share();
  *run.log << fmt::format("cluster: k={} iterations={} relative error={:.4f} diagonal share={:.4f}\n",
                          model.k, model.iterations, model.final_error, transition.diagonal_share());
}

void cmd_cluster(Run& run) {
  const auto cohort = load(run);
  const auto model = compute_clusters(cohort, run.cfg);
  const int later_window = get_window(run.cfg, "later_window");
  const auto later = project_cluster_model(build_matrix(cohort, later_window, get_bool(run.cfg, "normalize")),
                                           model, nmf_options(run.cfg));
  write_cluster_outputs(run, model, later);
}

struct SurvivalData {
  std::vector<WeeklyAttendance> attendance;
  std::vector<SurvivalRecord> records;
};

SurvivalData survival_data(const Run& run, const CohortDataset& cohort) {
  SurvivalData d;
  d.attendance = cohort_attendance(cohort);
  const int tolerance = get_int(run.cfg, "gap_tolerance");
  if (tolerance < 0) throw UsageError("gap_tolerance must be nonnegative");
  d.records = cohort_survival(d.attendance, tolerance);
  return d;
}

struct GroupedCurves {
  std::string grouping;
  std::vector<SurvivalCurve> curves;
};

std::vector<GroupedCurves> grouped_survival(Run& run, const CohortDataset& cohort,
                                            const std::vector<SurvivalRecord>& records) {
  const auto bands = get_age_bands(run.cfg);
  std::vector<GroupedCurves> out;
  const std::vector<int> no_labels;
  for (const auto grouping : {SurvivalGrouping::all, SurvivalGrouping::gender, SurvivalGrouping::age_band}) {
    const auto keys = grouping_keys(grouping, cohort, no_labels, {}, bands);
    std::vector<std::string> order;
    if (grouping == SurvivalGrouping::age_band) order = bands.labels();
    const char* name = grouping == SurvivalGrouping::all ? "all" : grouping == SurvivalGrouping::gender ? "gender" : "age_band";
    out.push_back({name, survival_cdf(records, keys, order)});
  }
  try {
    const auto model = obtain_clusters(run, cohort);
    const auto keys = grouping_keys(SurvivalGrouping::cluster, cohort, model.labels, model.names, bands);
    out.push_back({"cluster", survival_cdf(records, keys, model.names)});
  } catch (const DomainError& e) {
    run.extras["cluster_grouping_skipped"] = e.what();
  }
  return out;
}

void cmd_survival(Run& run) {
  const auto cohort = load(run);
  const auto data = survival_data(run, cohort);
  run.write_with("survival_records.csv", [&](std::ostream& o) { write_survival_records(o, data.records); });
  const auto grouped = grouped_survival(run, cohort, data.records);
  run.write_with("survival_cdf.csv", [&](std::ostream& o) {
    o << "grouping,group,members,streak_weeks,cdf\n";
    for (const auto& g : grouped) {
      for (const auto& c : g.curves) {
        for (int s = 0; s <= kContractWeeks; ++s) {
          o << fmt::format("{},{},{},{},{}\n", g.grouping, c.group, c.members, s, c.cdf[static_cast<std::size_t>(s)]);
        }
      }
    }
  });
  run.write_with("survival_reach.csv", [&](std::ostream& o) {
    o << "grouping,group,members,reach_6,reach_17\n";
    for (const auto& g : grouped) {
      for (const auto& c : g.curves) o << fmt::format("{},{},{},{},{}\n", g.grouping, c.group, c.members, c.reach_6, c.reach_17);
    }
  });
  const auto bins = parse_survival_bins(run.cfg.at("survival_bins"));
  const auto stats = gap_usage_stats(data.records, bins);
  run.write_with("gaps_per_week.csv", [&](std::ostream& o) {
    o << "week,gap_weeks\n";
    for (int w = 1; w <= kContractWeeks; ++w) o << fmt::format("{},{}\n", w, stats.gaps_per_week[static_cast<std::size_t>(w)]);
  });
  run.write_with("gap_rate_by_week.csv", [&](std::ostream& o) {
    o << "bin,week,rate\n";
    for (const auto& b : stats.bins) {
      for (std::size_t w = 1; w < b.rate_by_week.size(); ++w) o << fmt::format("{},{},{}\n", b.bin.label(), w, b.rate_by_week[w]);
    }
  });
  run.write_with("gap_rate_by_weeks_to_end.csv", [&](std::ostream& o) {
    o << "bin,weeks_to_end,rate\n";
    for (const auto& b : stats.bins) {
      for (std::size_t d = 0; d < b.rate_by_weeks_to_end.size(); ++d) {
        o << fmt::format("{},{},{}\n", b.bin.label(), d, b.rate_by_weeks_to_end[d]);
      }
    }
  });
  run.write_with("gap_joint.csv", [&](std::ostream& o) {
    o << "streak_weeks,gaps_used,members\n";
    for (Eigen::Index s = 0; s < stats.joint.rows(); ++s) {
      for (Eigen::Index g = 0; g < stats.joint.cols(); ++g) {
        if (stats.joint(s, g) > 0) o << fmt::format("{},{},{}\n", s, g, stats.joint(s, g));
      }
    }
  });
  const auto gap_cdf = intermediate_gap_cdf(data.attendance);
  run.write_with("intermediate_gaps.csv", [&](std::ostream& o) {
    o << "length,cumulative\n" << cdf_rows(gap_cdf, "");
  });
  const auto& all = grouped.front().curves;
  const double short_share = all.empty() ? 0.0 : all.front().cdf[5];
  const double reach_17 = all.empty() ? 0.0 : all.front().reach_17;
  run.extras["share_streak_below_6"] = short_share;
  run.extras["share_streak_at_least_17"] = reach_17;
  run.extras["intermediate_gap_cdf_1"] = cdf_at(gap_cdf, 1);
  *run.log << fmt::format("survival: {} members, streak < 6: {:.3f}, streak >= 17: {:.3f}\n",
                          data.records.size(), short_share, reach_17);
}

CriticalVisitTable critical_table(const CohortDataset& cohort,
                                  const std::vector<SurvivalRecord>& records,
                                  std::pair<int, int> weeks, std::vector<CumulativeVisits>& visits) {
  visits = cohort_cumulative_visits(cohort);
  return critical_visit_table(visits, records, weeks.first, weeks.second);
}

json fit_json(const CriticalVisitTable& table) {
  json j;
  j["flagged_weeks"] = table.flagged_weeks;
  try {
    const auto fit = fit_milestone_line(table);
    j["slope"] = fit.slope;
    j["intercept"] = fit.intercept;
    j["r_squared"] = fit.r_squared;
  } catch (const EstimationError& e) {
    j["slope"] = nullptr;
    j["intercept"] = nullptr;
    j["r_squared"] = nullptr;
    j["note"] = e.what();
  }
  return j;
}

void cmd_critical(Run& run) {
  if (run.cfg.at("weeks").empty()) run.cfg["weeks"] = fmt::format("6..{}", kContractWeeks);
  const auto weeks = get_weeks(run.cfg);
  const auto cohort = load(run);
  const auto data = survival_data(run, cohort);
  std::vector<CumulativeVisits> visits;
  const auto table = critical_table(cohort, data.records, weeks, visits);
  run.write_with("critical_table.csv", [&](std::ostream& o) { write_critical_table(o, table); });
  auto fit = fit_json(table);
  fit["weeks"] = {weeks.first, weeks.second};
  run.write("milestone_fit.json", fit.dump(2) + "\n");
  if (const auto c6 = table.critical_for(6)) run.extras["critical_week_6"] = *c6;
  *run.log << fmt::format("critical: {} weeks estimated, {} flagged\n", table.entries.size(), table.flagged_weeks.size());
}

void cmd_deviations(Run& run) {
  const auto cohort = load(run);
  const auto model = obtain_clusters(run, cohort);
  const auto bands = get_age_bands(run.cfg);
  const auto gender = gender_groups(cohort);
  const auto report_g = deviation(gender, model.labels, model.k, {"female", "male"});
  const auto age = age_band_groups(cohort, bands);
  const auto report_a = deviation(age, model.labels, model.k, bands.labels());
  run.write_with("deviations_gender.csv", [&](std::ostream& o) { write_deviation_csv(o, report_g, model.names); });
  run.write_with("deviations_age_band.csv", [&](std::ostream& o) { write_deviation_csv(o, report_a, model.names); });
  run.extras["cluster_share"] = report_g.cluster_share;
  *run.log << fmt::format("deviations: {} clusters, {} gender and {} age groups\n", model.k,
                          report_g.groups.size(), report_a.groups.size());
}

std::vector<TreatmentSpec> requested_cells(const Config& cfg) {
  const auto& t = cfg.at("treatment");
  const auto& l = cfg.at("level");
  std::vector<TreatmentVariable> variables;
  if (t == "all") {
    for (const auto& name : {"group_lessons", "pt_sessions", "invitation_credits", "distinct_clubs",
                             "distinct_group_lessons", "form_level", "experience_level", "est_visit_frequency"}) {
      variables.push_back(*parse_treatment(name));
    }
  } else {
    const auto v = parse_treatment(t);
    if (!v) throw UsageError(fmt::format("unknown treatment '{}'", t));
    variables.push_back(*v);
  }
  std::optional<Level> level;
  std::optional<int> threshold;
  if (l != "all") {
    if (l.rfind("gt", 0) == 0) {
      Config tmp{{"level", l.substr(2)}};
      threshold = get_int(tmp, "level");
    } else {
      level = parse_level(l);
      if (!level || *level == Level::none) throw UsageError(fmt::format("unknown level '{}'", l));
    }
  }
  std::vector<TreatmentSpec> out;
  for (const auto v : variables) {
    if (is_self_reported(v)) {
      if (level) {
        if (t != "all") throw SchemeError("causal", fmt::format("{} takes threshold levels gt0..gt{}", t, ordinal_levels(v) - 2));
        continue;
      }
      for (int th = 0; th <= ordinal_levels(v) - 2; ++th) {
        if (threshold && *threshold != th) continue;
        out.push_back({v, false, Level::high, th});
      }
      if (threshold && (*threshold < 0 || *threshold > ordinal_levels(v) - 2) && t != "all") {
        throw SchemeError("causal", fmt::format("threshold {} outside 0..{} for {}", *threshold,
                                                ordinal_levels(v) - 2, t));
      }
    } else {
      if (threshold) {
        if (t != "all") throw SchemeError("causal", fmt::format("{} takes levels low, moderate or high", t));
        continue;
      }
      for (const Level lv : {Level::low, Level::moderate, Level::high}) {
        if (level && *level != lv) continue;
        out.push_back({v, true, lv, 0});
      }
    }
  }
  return out;
}

struct CausalRun {
  std::vector<CausalEstimate> estimates;
  json cells = json::array();
  json skipped = json::array();
  json cuts = json::object();
};

CausalRun causal_estimates(Run& run, const CohortDataset& cohort, std::pair<int, int> weeks,
                           bool per_cluster, int refute) {
  const auto model = obtain_clusters(run, cohort);
  const auto data = survival_data(run, cohort);
  std::vector<CumulativeVisits> visits;
  const auto table = critical_table(cohort, data.records, weeks, visits);
  CausalContext ctx{&cohort, model.labels, model.names, visits, &table};

  PsmOptions options;
  options.logistic.lambda = get_real(run.cfg, "lambda");
  options.bootstrap = get_int(run.cfg, "bootstrap");
  options.seed = get_seed(run.cfg);
  if (!run.cfg.at("caliper").empty()) options.caliper = get_real(run.cfg, "caliper");
  if (!(options.logistic.lambda > 0)) throw UsageError("lambda must be positive");
  if (options.bootstrap < 0) throw UsageError("bootstrap must be nonnegative");
  if (refute < 0) throw UsageError("refute must be nonnegative");

  const auto specs = requested_cells(run.cfg);
  const bool explicit_cell = run.cfg.at("treatment") != "all" && run.cfg.at("level") != "all";
  const auto all_weeks = week_list(weeks);
  std::vector<int> cluster_weeks;
  for (const int w : {6, 17}) {
    if (w >= weeks.first && w <= weeks.second) cluster_weeks.push_back(w);
  }

  CausalRun out;
  for (const Intervention i : kAllInterventions) {
    const auto values = treatment_values(cohort, static_cast<TreatmentVariable>(static_cast<std::size_t>(i)));
    std::vector<int> counts;
    for (const auto& v : values) counts.push_back(v.value_or(0));
    try {
      const auto c = four_level_cuts(counts);
      out.cuts[std::string(to_string(i))] = {{"low_cut", c.low_cut}, {"moderate_cut", c.moderate_cut}, {"positives", c.positives}};
    } catch (const SchemeError&) {
      out.cuts[std::string(to_string(i))] = nullptr;
    }
  }

  for (const auto& spec : specs) {
    const std::string treatment(to_string(spec.variable));
    try {
      PsmOptions cell = options;
      cell.refute_draws = refute;
      auto series = effect_timeline(ctx, spec, all_weeks, cell);
      out.cells.push_back(to_json(series.diagnostics));
      out.estimates.insert(out.estimates.end(), series.estimates.begin(), series.estimates.end());
    } catch (const Error& e) {
      if (explicit_cell) throw;
      out.skipped.push_back({{"treatment", treatment}, {"level", spec.level_name()}, {"cluster", "all"},
                             {"module", e.module()}, {"reason", e.what()}});
      continue;
    }
    if (!per_cluster || cluster_weeks.empty()) continue;
    PsmOptions cell = options;
    cell.refute_draws = 0;
    const auto by_cluster = effect_by_cluster(ctx, spec, cluster_weeks, cell);
    for (const auto& s : by_cluster.series) {
      out.cells.push_back(to_json(s.diagnostics));
      out.estimates.insert(out.estimates.end(), s.estimates.begin(), s.estimates.end());
    }
    for (const auto& name : by_cluster.omitted) {
      out.skipped.push_back({{"treatment", treatment}, {"level", spec.level_name()}, {"cluster", name},
                             {"module", "causal"}, {"reason", "cluster too small to match"}});
    }
  }
  return out;
}

void cmd_causal(Run& run) {
  if (run.cfg.at("weeks").empty()) run.cfg["weeks"] = "6..17";
  const auto weeks = get_weeks(run.cfg);
  const auto cohort = load(run);
  const auto result = causal_estimates(run, cohort, weeks, true, get_int(run.cfg, "refute"));
  run.write_with("causal_estimates.csv", [&](std::ostream& o) { write_estimates_csv(o, result.estimates); });
  run.extras["contrast"] = "each level against none (survey variables: above threshold against at or below)";
  run.extras["level_cuts"] = result.cuts;
  run.extras["cells"] = result.cells;
  run.extras["skipped"] = result.skipped;
  *run.log << fmt::format("causal: {} estimates over {} cells, {} skipped\n", result.estimates.size(),
                          result.cells.size(), result.skipped.size());
}

// ---- report ----------------------------------------------------------------

std::vector<CausalEstimate> read_estimates(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cli", fmt::format("cannot read {}", path.string()));
  CsvReader reader(in, path.string());
  reader.expect_header("treatment,level,week,cluster,att,n_treated,n_matched,refute_estimate,refute_p");
  std::vector<CausalEstimate> out;
  while (reader.next()) {
    CausalEstimate e;
    const auto v = parse_treatment(reader.field(0));
    if (!v) reader.fail(0, "unknown treatment");
    e.spec.variable = *v;
    const std::string level(reader.field(1));
    if (level.rfind("gt", 0) == 0) {
      e.spec.four_level = false;
      e.spec.threshold = std::atoi(level.c_str() + 2);
    } else {
      const auto l = parse_level(level);
      if (!l) reader.fail(1, "unknown level");
      e.spec.treated_level = *l;
    }
    e.week = static_cast<int>(reader.integer(2));
    e.cluster = std::string(reader.field(3));
    e.att = reader.real(4);
    e.n_treated = static_cast<std::size_t>(reader.integer(5));
    e.n_matched = static_cast<std::size_t>(reader.integer(6));
    out.push_back(std::move(e));
  }
  return out;
}

void cmd_report(Run& run) {
  if (run.cfg.at("weeks").empty()) run.cfg["weeks"] = "6..17";
  const auto weeks = get_weeks(run.cfg);
  const auto cohort = load(run);
  const auto data = survival_data(run, cohort);
  json summary;
  summary["members"] = cohort.size();
  summary["visits"] = cohort.visit_count();

  // Survival curves and gap statistics.
  const auto grouped = grouped_survival(run, cohort, data.records);
  for (const auto& g : grouped) {
    std::vector<PlotSeries> series;
    for (const auto& c : g.curves) {
      PlotSeries s{c.group, {}, {}};
      for (int w = 0; w <= kContractWeeks; ++w) {
        s.x.push_back(w);
        s.y.push_back(c.cdf[static_cast<std::size_t>(w)]);
      }
      series.push_back(std::move(s));
    }
    run.write(fmt::format("figures/survival_cdf_{}.svg", g.grouping),
              line_chart({fmt::format("Survival streak CDF by {}", g.grouping), "streak (weeks)", "P(streak <= x)", true}, series));
  }
  const auto& overall = grouped.front().curves.front();
  summary["share_streak_below_6"] = overall.cdf[5];
  summary["share_streak_at_least_17"] = overall.reach_17;

  const auto bins = parse_survival_bins(run.cfg.at("survival_bins"));
  const auto stats = gap_usage_stats(data.records, bins);
  std::vector<PlotSeries> by_week, to_end;
  for (const auto& b : stats.bins) {
    PlotSeries a{b.bin.label(), {}, {}}, e{b.bin.label(), {}, {}};
    for (std::size_t w = 1; w < b.rate_by_week.size(); ++w) {
      a.x.push_back(static_cast<double>(w));
      a.y.push_back(b.rate_by_week[w]);
    }
    for (std::size_t d = 0; d < b.rate_by_weeks_to_end.size(); ++d) {
      e.x.push_back(static_cast<double>(d));
      e.y.push_back(b.rate_by_weeks_to_end[d]);
    }
    by_week.push_back(std::move(a));
    to_end.push_back(std::move(e));
  }
  run.write("figures/gap_rate_by_week.svg", line_chart({"Gap usage by membership week", "week", "gap rate"}, by_week));
  run.write("figures/gap_rate_by_weeks_to_end.svg",
            line_chart({"Gap usage before the streak ends", "weeks before streak end", "gap rate"}, to_end));
  const auto gap_cdf = intermediate_gap_cdf(data.attendance);
  {
    PlotSeries s{"all members", {}, {}};
    for (const auto& p : gap_cdf) {
      s.x.push_back(p.value);
      s.y.push_back(p.cumulative);
    }
    run.write("figures/intermediate_gaps.svg",
              line_chart({"Intermediate gap lengths", "absent weeks", "cumulative share", true}, std::span(&s, 1)));
  }
  summary["intermediate_gap_cdf_1"] = cdf_at(gap_cdf, 1);

  // Critical visits over the whole contract, with the linear trend.
  std::vector<CumulativeVisits> visits;
  const auto table = critical_table(cohort, data.records, {6, kContractWeeks}, visits);
  auto fit = fit_json(table);
  {
    PlotSeries points{"critical visits", {}, {}}, line{"linear fit", {}, {}, true};
    for (const auto& e : table.entries) {
      points.x.push_back(e.week);
      points.y.push_back(e.critical_visits);
    }
    if (fit["slope"].is_number() && !points.x.empty()) {
      for (const double x : {points.x.front(), points.x.back()}) {
        line.x.push_back(x);
        line.y.push_back(fit["slope"].get<double>() * x + fit["intercept"].get<double>());
      }
    }
    const std::vector<PlotSeries> series = {points, line};
    run.write("figures/critical_visits.svg", line_chart({"Critical visit count per week", "week", "visits"}, series));
  }
  if (const auto c6 = table.critical_for(6)) summary["critical_week_6"] = *c6;
  summary["milestone_fit"] = fit;

  // Clusters, their transition and demographic composition.
  try {
    const auto model = obtain_clusters(run, cohort);
    std::vector<PlotSeries> profiles;
    for (int c = 0; c < model.k; ++c) {
      PlotSeries s{model.names[static_cast<std::size_t>(c)], {}, {}};
      for (int h = 0; h < kHourBins; ++h) {
        double total = 0.0;
        for (int d = 0; d < kDays; ++d) total += model.H(c, d * kHourBins + h);
        s.x.push_back(kFirstHour + h);
        s.y.push_back(total);
      }
      profiles.push_back(std::move(s));
    }
    run.write("figures/cluster_profiles.svg", line_chart({"Cluster hour profiles", "hour", "component weight"}, profiles));
    std::vector<std::string> features;
    for (int f = 0; f < kFeatureCount; ++f) features.push_back(feature_name(f));
    run.write("figures/cluster_components.svg", heatmap("NMF components", model.names, features, model.H));

    const int later_window = get_window(run.cfg, "later_window");
    const auto later = project_cluster_model(build_matrix(cohort, later_window, get_bool(run.cfg, "normalize")),
                                             model, nmf_options(run.cfg));
    const auto transition = transition_matrix(model.member_ids, model.labels, later.member_ids, later.labels, model.k);
    run.write("figures/transition.svg",
              heatmap(fmt::format("Cluster transition week {} to {} (row %)", model.window_weeks, later_window),
                      model.names, model.names, transition.row_percent));
    summary["transition_diagonal"] = transition.diagonal_share();

    std::vector<PlotSeries> membership;
    for (int c = 0; c < model.k; ++c) {
      PlotSeries s{model.names[static_cast<std::size_t>(c)], {}, {}};
      for (const auto& p : membership_prob_cdf(model.probabilities, model.labels, c, model.zero_row)) {
        s.x.push_back(p.value);
        s.y.push_back(p.cumulative);
      }
      membership.push_back(std::move(s));
    }
    run.write("figures/membership_cdf.svg",
              line_chart({"Membership probability of the assigned cluster", "probability", "cumulative share", true}, membership));

    const auto bands = get_age_bands(run.cfg);
    const auto write_deviation = [&](const std::string& name, const DeviationReport& r) {
      Eigen::MatrixXd values = Eigen::MatrixXd::Zero(r.k, static_cast<Eigen::Index>(r.groups.size()));
      for (int c = 0; c < r.k; ++c) {
        for (std::size_t g = 0; g < r.groups.size(); ++g) values(c, static_cast<Eigen::Index>(g)) = r.at(c, g).deviation.value_or(0.0);
      }
      run.write(fmt::format("figures/deviations_{}.svg", name),
                heatmap(fmt::format("Deviation by {}", name), model.names, r.groups, values, true));
    };
    const auto report_g = deviation(gender_groups(cohort), model.labels, model.k, {"female", "male"});
    write_deviation("gender", report_g);
    write_deviation("age_band", deviation(age_band_groups(cohort, bands), model.labels, model.k, bands.labels()));
    summary["cluster_share"] = report_g.cluster_share;
    summary["cluster_names"] = model.names;
  } catch (const DomainError& e) {
    summary["clusters_skipped"] = e.what();
  }

  // Effect curves: reuse an estimates file when available.
  std::string source = run.cfg.at("estimates");
  if (source == "auto") {
    source = "compute";
    for (const fs::path& dir : {run.in, run.out}) {
      if (fs::exists(dir / "causal_estimates.csv")) {
        source = (dir / "causal_estimates.csv").string();
        break;
      }
    }
  }
  run.cfg["estimates"] = source;
  std::vector<CausalEstimate> estimates;
  if (source == "compute") {
    try {
      estimates = causal_estimates(run, cohort, weeks, false, 0).estimates;
    } catch (const Error& e) {
      summary["effects_skipped"] = e.what();
    }
  } else {
    estimates = read_estimates(source);
  }
  std::map<std::string, std::vector<PlotSeries>> by_treatment;
  for (const auto& e : estimates) {
    if (e.cluster != "all") continue;
    auto& list = by_treatment[std::string(to_string(e.spec.variable))];
    const auto name = e.spec.level_name();
    auto it = std::find_if(list.begin(), list.end(), [&](const PlotSeries& s) { return s.label == name; });
    if (it == list.end()) {
      list.push_back({name, {}, {}});
      it = std::prev(list.end());
    }
    it->x.push_back(e.week);
    it->y.push_back(e.att);
  }
  for (const auto& [treatment, series] : by_treatment) {
    run.write(fmt::format("figures/effects_{}.svg", treatment),
              line_chart({fmt::format("Estimated effect of {} on the weekly milestone", treatment), "week", "ATT"}, series));
  }
  summary["effect_estimates"] = estimates.size();
  run.write("summary.json", summary.dump(2) + "\n");
  *run.log << fmt::format("report: {} files written\n", run.outputs.size());
}

// ---- driver ----------------------------------------------------------------

struct Subcommand {
  const char* name;
  const char* help;
  void (*fn)(Run&);
};

const std::vector<Subcommand> kSubcommands = {
    {"generate", "write a synthetic cohort with ground truth", cmd_generate},
    {"vectorize", "build the 7x18 day-hour visit matrix", cmd_vectorize},
    {"cluster", "NMF clusters, memberships and transition matrix", cmd_cluster},
    {"survival", "survival streaks, CDFs and gap statistics", cmd_survival},
    {"critical", "critical visit table and milestone trend", cmd_critical},
    {"deviations", "demographic deviations per cluster", cmd_deviations},
    {"causal", "propensity-matched effects of interventions", cmd_causal},
    {"report", "SVG figures and a summary JSON", cmd_report},
};

const char* error_kind(const Error& e) {
  if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
  if (dynamic_cast<const ValidationError*>(&e)) return "ValidationError";
  if (dynamic_cast<const DomainError*>(&e)) return "DomainError";
  if (dynamic_cast<const EstimationError*>(&e)) return "EstimationError";
  if (dynamic_cast<const SchemeError*>(&e)) return "SchemeError";
  if (dynamic_cast<const MatchingError*>(&e)) return "MatchingError";
  if (dynamic_cast<const SpecError*>(&e)) return "SpecError";
  if (dynamic_cast<const LookupError*>(&e)) return "LookupError";
  return "Error";
}

std::string config_help() {
  std::string s = "Config keys (flags override --config file, which overrides defaults):\n";
  for (const auto& k : kKeys) s += fmt::format("  {:<15} {} [default: {}]\n", k.key, k.help, k.fallback);
  return s;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"habitforge: habit-formation cohort analytics"};
  app.require_subcommand(1);
  app.footer(config_help());
  std::map<std::string, std::string> flags;
  std::string config_path;
  struct Flag {
    const char* option;
    const char* key;
  };
  const std::vector<Flag> flag_table = {
      {"--in", "in"},         {"--out", "out"},         {"--seed", "seed"},
      {"--k", "k"},           {"--window", "window"},   {"--gap-tolerance", "gap_tolerance"},
      {"--weeks", "weeks"},   {"--treatment", "treatment"}, {"--level", "level"},
      {"--refute", "refute"}, {"--n", "n"},             {"--spec", "spec"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& sc : kSubcommands) {
    auto* sub = app.add_subcommand(sc.name, sc.help);
    for (const auto& f : flag_table) {
      const auto it = std::find_if(kKeys.begin(), kKeys.end(), [&](const KeyInfo& k) { return std::string(k.key) == f.key; });
      sub->add_option(f.option, flags[f.key], it->help);
    }
    sub->add_option("--config", config_path, "key = value file or a run manifest");
    subs[sc.name] = sub;
  }

  const auto usage = [&](const std::string& message) {
    err << json{{"error", "UsageError"}, {"module", "cli"}, {"message", message}}.dump() << '\n';
    return 2;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return usage(e.what());
  }

  const Subcommand* chosen = nullptr;
  for (const auto& sc : kSubcommands) {
    if (subs[sc.name]->parsed()) chosen = &sc;
  }
  if (!chosen) return usage("a subcommand is required");
  CLI::App* sub = subs[chosen->name];

  Run run;
  run.subcommand = chosen->name;
  run.log = &out;
  try {
    for (const auto& k : kKeys) run.cfg[k.key] = k.fallback;
    if (const char* env = std::getenv("HABITFORGE_SEED"); env && *env) run.cfg["seed"] = env;
    if (!config_path.empty()) {
      for (const auto& [key, value] : read_config_file(config_path)) run.cfg[key] = value;
    }
    for (const auto& f : flag_table) {
      if (sub->count(f.option) > 0) run.cfg[f.key] = flags[f.key];
    }
    get_seed(run.cfg);
    run.in = run.cfg.at("in");
    run.out = run.cfg.at("out");
    chosen->fn(run);
    run.write_manifest();
  } catch (const UsageError& e) {
    return usage(e.what());
  } catch (const Error& e) {
    json j = {{"error", error_kind(e)}, {"module", e.module()}, {"message", e.what()}};
    if (const auto* pe = dynamic_cast<const ParseError*>(&e)) {
      if (pe->row() > 0) j["row"] = pe->row();
      if (!pe->column().empty()) j["column"] = pe->column();
    }
    err << j.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << json{{"error", "Error"}, {"module", "cli"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace habitforge::cli
