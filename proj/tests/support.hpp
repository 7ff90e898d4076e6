#pragma once

#include <string>
#include <vector>

#include "habitforge/core.hpp"

namespace hf_test {

using namespace habitforge;

inline Date date(const char* text) { return *parse_date(text); }

inline MemberProfile member(std::string id, int age = 30, Gender gender = Gender::female, double bmi = 24.0,
                            const char* start = "2022-01-03") {
  MemberProfile m;
  m.member_id = std::move(id);
  m.age = age;
  m.gender = gender;
  m.bmi = bmi;
  m.contract_start = date(start);
  m.main_club = "C01";
  m.membership_category = "basic";
  return m;
}

inline VisitEvent visit(std::string id, Date day, int entry, int exit) { return {std::move(id), day, entry, exit}; }

// Visits on the given membership weeks (1-based), one per listed week, Monday 18:00.
inline std::vector<VisitEvent> weekly_visits(const MemberProfile& m, const std::vector<int>& weeks) {
  std::vector<VisitEvent> out;
  for (const int w : weeks) out.push_back(visit(m.member_id, m.contract_start + std::chrono::days(7 * (w - 1)), 18, 19));
  return out;
}

}  // namespace hf_test
