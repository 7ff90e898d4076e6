#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace habitforge {

/// Minimal reader for the unquoted comma-separated files this tool exchanges.
/// Errors are raised as ParseError naming `label`, the line and the column.
class CsvReader {
 public:
  CsvReader(std::istream& in, std::string label);

  /// Reads the header line and checks it matches `expected` exactly.
  void expect_header(std::string_view expected);

  /// Advances to the next non-blank line. Returns false at end of input.
  bool next();

  std::size_t line() const { return line_; }
  std::size_t size() const { return fields_.size(); }
  std::string_view field(std::size_t i) const { return fields_[i]; }
  std::string_view column_name(std::size_t i) const;

  int integer(std::size_t i) const;
  double real(std::size_t i) const;
  std::optional<int> optional_integer(std::size_t i) const;
  bool boolean(std::size_t i) const;

  [[noreturn]] void fail(std::size_t i, const std::string& what) const;

 private:
  void split();

  std::istream& in_;
  std::string label_;
  std::string buffer_;
  std::vector<std::string_view> fields_;
  std::vector<std::string> columns_;
  std::size_t line_ = 0;
};

std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');
std::string_view trim(std::string_view text);

}  // namespace habitforge
