#pragma once

// Domain types shared by every analysis stage: member profiles, visit events,
// the assembled cohort, and the membership-relative week calendar.

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace habitforge {

using Date = std::chrono::sys_days;

/// Parses an ISO-8601 calendar date (YYYY-MM-DD). Returns nullopt when malformed.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(Date date);

/// Day of week with 0 = Monday ... 6 = Sunday.
int day_of_week(Date date);
inline bool is_weekend(int day) { return day >= 5; }

/// 1 + floor(days since contract start / 7). Throws DomainError when `date`
/// precedes `contract_start`.
int week_index(Date date, Date contract_start);

enum class Gender { female, male };
std::string_view to_string(Gender gender);

struct MemberProfile {
  std::string member_id;
  int age = 0;
  Gender gender = Gender::female;
  double bmi = 0.0;
  Date contract_start{};
  std::string main_club;
  std::string membership_category;
  std::optional<int> experience_level;     // 0..3
  std::optional<int> form_level;           // 0..2
  std::optional<int> est_visit_frequency;  // 0..2
  std::string contract_type = "annual";
  bool paid = true;

  /// True when all three self-reported survey answers are present.
  bool complete_responder() const {
    return experience_level && form_level && est_visit_frequency;
  }
};

struct VisitEvent {
  std::string member_id;
  Date date{};
  int entry_hour = 0;
  int exit_hour = 0;
};

enum class Intervention : std::size_t {
  group_lessons,
  pt_sessions,
  invitation_credits,
  distinct_clubs,
  distinct_group_lessons,
};
inline constexpr std::size_t kInterventionCount = 5;
inline constexpr std::array<Intervention, kInterventionCount> kAllInterventions = {
    Intervention::group_lessons, Intervention::pt_sessions, Intervention::invitation_credits,
    Intervention::distinct_clubs, Intervention::distinct_group_lessons};

std::string_view to_string(Intervention intervention);
std::optional<Intervention> parse_intervention(std::string_view name);

/// Counts of each intervention received in the first six membership weeks.
struct InterventionCounts {
  std::string member_id;
  std::array<int, kInterventionCount> counts{};

  int operator[](Intervention i) const { return counts[static_cast<std::size_t>(i)]; }
  int& operator[](Intervention i) { return counts[static_cast<std::size_t>(i)]; }
};

/// Validated, immutable cohort. Members are held in ascending member_id order;
/// `visits(i)` and `interventions(i)` are aligned with `members()[i]`.
class CohortDataset {
 public:
  CohortDataset() = default;

  /// Validates and indexes raw records. Throws ValidationError on duplicate
  /// member ids, visits of unknown members, visits before contract start,
  /// entry after exit, or negative intervention counts. Members without an
  /// interventions row receive all-zero counts.
  static CohortDataset assemble(std::vector<MemberProfile> members,
                                std::vector<VisitEvent> visits,
                                std::vector<InterventionCounts> interventions);

  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }

  std::span<const MemberProfile> members() const { return members_; }
  const MemberProfile& member(std::size_t i) const { return members_[i]; }
  std::span<const VisitEvent> visits(std::size_t i) const { return visits_[i]; }
  const InterventionCounts& interventions(std::size_t i) const { return interventions_[i]; }
  std::optional<std::size_t> find(std::string_view member_id) const;

  std::size_t visit_count() const;

  /// Visits of all members flattened in member order.
  std::vector<VisitEvent> all_visits() const;
  std::vector<InterventionCounts> all_interventions() const { return interventions_; }

  /// Sub-cohort restricted to the given member indices (kept in member order).
  CohortDataset subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<MemberProfile> members_;
  std::vector<std::vector<VisitEvent>> visits_;
  std::vector<InterventionCounts> interventions_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Age bands given by their inclusive lower bounds; the last band is open.
struct AgeBands {
  std::vector<int> lower_bounds = {14, 21, 28, 35, 49};

  /// Band index for `age`, or -1 when below the first bound.
  int index(int age) const;
  std::string label(std::size_t band) const;
  std::vector<std::string> labels() const;
};

/// Declarative eligibility filters applied at ingestion.
struct CohortRules {
  std::optional<std::string> contract_type = std::string("annual");
  std::optional<bool> paid = true;
};

CohortDataset filter_cohort(std::vector<MemberProfile> members, std::vector<VisitEvent> visits,
                            std::vector<InterventionCounts> interventions,
                            const CohortRules& rules);

// CSV ingestion. Parse errors name the file line and column.
inline constexpr std::string_view kMembersHeader =
    "member_id,age,gender,bmi,contract_start,main_club,membership_category,experience_level,"
    "form_level,est_visit_frequency,contract_type,paid";
inline constexpr std::string_view kVisitsHeader = "member_id,date,entry_hour,exit_hour";
inline constexpr std::string_view kInterventionsHeader =
    "member_id,group_lessons_6w,pt_sessions_6w,invitation_credits_6w,distinct_clubs_6w,"
    "distinct_group_lessons_6w";

std::vector<MemberProfile> read_members(std::istream& in);
std::vector<VisitEvent> read_visits(std::istream& in);
std::vector<InterventionCounts> read_interventions(std::istream& in);

/// Reads members.csv; throws ValidationError on duplicate member ids.
std::vector<MemberProfile> load_members(const std::filesystem::path& path);
std::vector<VisitEvent> load_visits(const std::filesystem::path& path);
std::vector<InterventionCounts> load_interventions(const std::filesystem::path& path);

void write_members(std::ostream& out, std::span<const MemberProfile> members);
void write_visits(std::ostream& out, std::span<const VisitEvent> visits);
void write_interventions(std::ostream& out, std::span<const InterventionCounts> rows);

/// Loads members.csv, visits.csv and (optional) interventions.csv from `dir`
/// and applies `rules`.
CohortDataset load_cohort(const std::filesystem::path& dir, const CohortRules& rules = {});

}  // namespace habitforge
