#include "habitforge/csv.hpp"

#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "habitforge/error.hpp"

namespace habitforge {

std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

CsvReader::CsvReader(std::istream& in, std::string label) : in_(in), label_(std::move(label)) {}

void CsvReader::expect_header(std::string_view expected) {
  if (!next()) throw ParseError("core", fmt::format("{}: missing header", label_), 1);
  const std::string got(trim(buffer_));
  if (got != expected) {
    throw ParseError("core",
                     fmt::format("{}: line {}: unexpected header '{}' (expected '{}')", label_,
                                 line_, got, expected),
                     line_);
  }
  for (auto name : split_fields(expected)) columns_.emplace_back(name);
}

bool CsvReader::next() {
  while (std::getline(in_, buffer_)) {
    ++line_;
    if (trim(buffer_).empty()) continue;
    split();
    if (!columns_.empty() && fields_.size() != columns_.size()) {
      throw ParseError("core",
                       fmt::format("{}: line {}: expected {} fields, found {}", label_, line_,
                                   columns_.size(), fields_.size()),
                       line_);
    }
    return true;
  }
  return false;
}

void CsvReader::split() { fields_ = split_fields(buffer_); }

std::string_view CsvReader::column_name(std::size_t i) const {
  return i < columns_.size() ? std::string_view(columns_[i]) : std::string_view("?");
}

void CsvReader::fail(std::size_t i, const std::string& what) const {
  throw ParseError("core",
                   fmt::format("{}: line {}, column {}: {}", label_, line_, column_name(i), what),
                   line_, std::string(column_name(i)));
}

int CsvReader::integer(std::size_t i) const {
  const auto text = field(i);
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    fail(i, fmt::format("invalid integer '{}'", text));
  }
  return value;
}

double CsvReader::real(std::size_t i) const {
  const auto text = field(i);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty() ||
      !std::isfinite(value)) {
    fail(i, fmt::format("invalid number '{}'", text));
  }
  return value;
}

std::optional<int> CsvReader::optional_integer(std::size_t i) const {
  if (field(i).empty()) return std::nullopt;
  return integer(i);
}

bool CsvReader::boolean(std::size_t i) const {
  const auto text = field(i);
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  fail(i, fmt::format("invalid boolean '{}'", text));
}

}  // namespace habitforge
