#include "habitforge/core.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "habitforge/csv.hpp"
#include "habitforge/error.hpp"

namespace habitforge {

namespace {

bool parse_fixed_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  for (char c : text) {
    if (c < '0' || c > '9') return false;
  }
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("core", fmt::format("cannot open '{}'", path.string()));
  return in;
}

}  // namespace

std::optional<Date> parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0, m = 0, d = 0;
  if (!parse_fixed_int(text.substr(0, 4), y) || !parse_fixed_int(text.substr(5, 2), m) ||
      !parse_fixed_int(text.substr(8, 2), d)) {
    return std::nullopt;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return Date{ymd};
}

std::string format_date(Date date) {
  const std::chrono::year_month_day ymd{date};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

int day_of_week(Date date) {
  return static_cast<int>(std::chrono::weekday{date}.iso_encoding()) - 1;
}

int week_index(Date date, Date contract_start) {
  const auto days = (date - contract_start).count();
  if (days < 0) {
    throw DomainError("core", fmt::format("date {} precedes contract start {}",
                                          format_date(date), format_date(contract_start)));
  }
  return 1 + static_cast<int>(days / 7);
}

std::string_view to_string(Gender gender) {
  return gender == Gender::female ? "female" : "male";
}

std::string_view to_string(Intervention intervention) {
  switch (intervention) {
    case Intervention::group_lessons: return "group_lessons";
    case Intervention::pt_sessions: return "pt_sessions";
    case Intervention::invitation_credits: return "invitation_credits";
    case Intervention::distinct_clubs: return "distinct_clubs";
    case Intervention::distinct_group_lessons: return "distinct_group_lessons";
  }
  return "?";
}

std::optional<Intervention> parse_intervention(std::string_view name) {
  for (auto i : kAllInterventions) {
    if (to_string(i) == name) return i;
  }
  return std::nullopt;
}

int AgeBands::index(int age) const {
  int band = -1;
  for (std::size_t b = 0; b < lower_bounds.size(); ++b) {
    if (age >= lower_bounds[b]) band = static_cast<int>(b);
  }
  return band;
}

std::string AgeBands::label(std::size_t band) const {
  if (band + 1 < lower_bounds.size()) {
    return fmt::format("{}-{}", lower_bounds[band], lower_bounds[band + 1] - 1);
  }
  return fmt::format("{}+", lower_bounds[band]);
}

std::vector<std::string> AgeBands::labels() const {
  std::vector<std::string> out;
  for (std::size_t b = 0; b < lower_bounds.size(); ++b) out.push_back(label(b));
  return out;
}

// ---------------------------------------------------------------------------

CohortDataset CohortDataset::assemble(std::vector<MemberProfile> members,
                                      std::vector<VisitEvent> visits,
                                      std::vector<InterventionCounts> interventions) {
  CohortDataset out;
  std::sort(members.begin(), members.end(),
            [](const auto& a, const auto& b) { return a.member_id < b.member_id; });
  out.index_.reserve(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (!out.index_.emplace(members[i].member_id, i).second) {
      throw ValidationError("core", fmt::format("duplicate member_id '{}'", members[i].member_id));
    }
  }
  out.members_ = std::move(members);
  out.visits_.resize(out.members_.size());
  out.interventions_.resize(out.members_.size());
  for (std::size_t i = 0; i < out.members_.size(); ++i) {
    out.interventions_[i].member_id = out.members_[i].member_id;
  }

  for (auto& v : visits) {
    const auto it = out.index_.find(v.member_id);
    if (it == out.index_.end()) {
      throw ValidationError("core", fmt::format("visit references unknown member '{}'", v.member_id));
    }
    const auto& m = out.members_[it->second];
    if (v.date < m.contract_start) {
      throw ValidationError("core", fmt::format("visit of '{}' on {} precedes contract start",
                                                v.member_id, format_date(v.date)));
    }
    if (v.entry_hour > v.exit_hour) {
      throw ValidationError("core", fmt::format("visit of '{}' on {} has entry after exit",
                                                v.member_id, format_date(v.date)));
    }
    out.visits_[it->second].push_back(std::move(v));
  }
  for (auto& list : out.visits_) {
    std::stable_sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
      return a.date != b.date ? a.date < b.date : a.entry_hour < b.entry_hour;
    });
  }

  for (auto& row : interventions) {
    const auto it = out.index_.find(row.member_id);
    if (it == out.index_.end()) {
      throw ValidationError("core",
                            fmt::format("interventions reference unknown member '{}'", row.member_id));
    }
    for (int c : row.counts) {
      if (c < 0) {
        throw ValidationError("core",
                              fmt::format("negative intervention count for '{}'", row.member_id));
      }
    }
    out.interventions_[it->second] = std::move(row);
  }
  return out;
}

std::optional<std::size_t> CohortDataset::find(std::string_view member_id) const {
  const auto it = index_.find(std::string(member_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t CohortDataset::visit_count() const {
  return std::accumulate(visits_.begin(), visits_.end(), std::size_t{0},
                         [](std::size_t acc, const auto& v) { return acc + v.size(); });
}

std::vector<VisitEvent> CohortDataset::all_visits() const {
  std::vector<VisitEvent> out;
  out.reserve(visit_count());
  for (const auto& list : visits_) out.insert(out.end(), list.begin(), list.end());
  return out;
}

CohortDataset CohortDataset::subset(std::span<const std::size_t> indices) const {
  CohortDataset out;
  std::vector<std::size_t> sorted(indices.begin(), indices.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (auto i : sorted) {
    out.index_.emplace(members_[i].member_id, out.members_.size());
    out.members_.push_back(members_[i]);
    out.visits_.push_back(visits_[i]);
    out.interventions_.push_back(interventions_[i]);
  }
  return out;
}

CohortDataset filter_cohort(std::vector<MemberProfile> members, std::vector<VisitEvent> visits,
                            std::vector<InterventionCounts> interventions,
                            const CohortRules& rules) {
  std::unordered_map<std::string, bool> keep;
  std::vector<MemberProfile> kept;
  for (auto& m : members) {
    const bool pass = (!rules.contract_type || m.contract_type == *rules.contract_type) &&
                      (!rules.paid || m.paid == *rules.paid);
    keep.emplace(m.member_id, pass);
    if (pass) kept.push_back(std::move(m));
  }
  // Visits of unknown members stay in so assemble() reports them.
  std::erase_if(visits, [&](const VisitEvent& v) {
    const auto it = keep.find(v.member_id);
    return it != keep.end() && !it->second;
  });
  std::erase_if(interventions, [&](const InterventionCounts& r) {
    const auto it = keep.find(r.member_id);
    return it != keep.end() && !it->second;
  });
  return CohortDataset::assemble(std::move(kept), std::move(visits), std::move(interventions));
}

// ---------------------------------------------------------------------------

std::vector<MemberProfile> read_members(std::istream& in) {
  CsvReader csv(in, "members.csv");
  csv.expect_header(kMembersHeader);
  std::vector<MemberProfile> out;
  while (csv.next()) {
    MemberProfile m;
    m.member_id = std::string(csv.field(0));
    if (m.member_id.empty()) csv.fail(0, "empty member_id");
    m.age = csv.integer(1);
    if (m.age < 14) csv.fail(1, fmt::format("age {} below 14", m.age));
    const auto gender = csv.field(2);
    if (gender == "female") {
      m.gender = Gender::female;
    } else if (gender == "male") {
      m.gender = Gender::male;
    } else {
      csv.fail(2, fmt::format("invalid gender '{}'", gender));
    }
    m.bmi = csv.real(3);
    if (!(m.bmi > 0.0)) csv.fail(3, "bmi must be positive");
    const auto start = parse_date(csv.field(4));
    if (!start) csv.fail(4, fmt::format("invalid date '{}'", csv.field(4)));
    m.contract_start = *start;
    m.main_club = std::string(csv.field(5));
    m.membership_category = std::string(csv.field(6));
    const auto ranged = [&](std::size_t col, int hi) -> std::optional<int> {
      auto v = csv.optional_integer(col);
      if (v && (*v < 0 || *v > hi)) csv.fail(col, fmt::format("value {} outside 0..{}", *v, hi));
      return v;
    };
    m.experience_level = ranged(7, 3);
    m.form_level = ranged(8, 2);
    m.est_visit_frequency = ranged(9, 2);
    m.contract_type = std::string(csv.field(10));
    m.paid = csv.boolean(11);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<VisitEvent> read_visits(std::istream& in) {
  CsvReader csv(in, "visits.csv");
  csv.expect_header(kVisitsHeader);
  std::vector<VisitEvent> out;
  while (csv.next()) {
    VisitEvent v;
    v.member_id = std::string(csv.field(0));
    const auto date = parse_date(csv.field(1));
    if (!date) csv.fail(1, fmt::format("invalid date '{}'", csv.field(1)));
    v.date = *date;
    v.entry_hour = csv.integer(2);
    if (v.entry_hour < 0 || v.entry_hour > 23) csv.fail(2, "hour outside 0..23");
    v.exit_hour = csv.integer(3);
    if (v.exit_hour < 0 || v.exit_hour > 23) csv.fail(3, "hour outside 0..23");
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<InterventionCounts> read_interventions(std::istream& in) {
  CsvReader csv(in, "interventions.csv");
  csv.expect_header(kInterventionsHeader);
  std::vector<InterventionCounts> out;
  while (csv.next()) {
    InterventionCounts row;
    row.member_id = std::string(csv.field(0));
    for (std::size_t j = 0; j < kInterventionCount; ++j) {
      row.counts[j] = csv.integer(j + 1);
      if (row.counts[j] < 0) csv.fail(j + 1, "negative count");
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<MemberProfile> load_members(const std::filesystem::path& path) {
  auto in = open_input(path);
  auto members = read_members(in);
  std::unordered_map<std::string_view, bool> seen;
  for (const auto& m : members) {
    if (!seen.emplace(m.member_id, true).second) {
      throw ValidationError("core", fmt::format("duplicate member_id '{}'", m.member_id));
    }
  }
  return members;
}

std::vector<VisitEvent> load_visits(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_visits(in);
}

std::vector<InterventionCounts> load_interventions(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_interventions(in);
}

namespace {
std::string optional_cell(const std::optional<int>& v) {
  return v ? fmt::format("{}", *v) : std::string();
}
}  // namespace

void write_members(std::ostream& out, std::span<const MemberProfile> members) {
  out << kMembersHeader << '\n';
  for (const auto& m : members) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", m.member_id, m.age,
                       to_string(m.gender), m.bmi, format_date(m.contract_start), m.main_club,
                       m.membership_category, optional_cell(m.experience_level),
                       optional_cell(m.form_level), optional_cell(m.est_visit_frequency),
                       m.contract_type, m.paid ? "true" : "false");
  }
}

void write_visits(std::ostream& out, std::span<const VisitEvent> visits) {
  out << kVisitsHeader << '\n';
  for (const auto& v : visits) {
    out << fmt::format("{},{},{},{}\n", v.member_id, format_date(v.date), v.entry_hour,
                       v.exit_hour);
  }
}

void write_interventions(std::ostream& out, std::span<const InterventionCounts> rows) {
  out << kInterventionsHeader << '\n';
  for (const auto& r : rows) {
    out << fmt::format("{},{}\n", r.member_id, fmt::join(r.counts, ","));
  }
}

CohortDataset load_cohort(const std::filesystem::path& dir, const CohortRules& rules) {
  auto members = load_members(dir / "members.csv");
  auto visits = load_visits(dir / "visits.csv");
  std::vector<InterventionCounts> interventions;
  if (std::filesystem::exists(dir / "interventions.csv")) {
    interventions = load_interventions(dir / "interventions.csv");
  }
  return filter_cohort(std::move(members), std::move(visits), std::move(interventions), rules);
}

}  // namespace habitforge
