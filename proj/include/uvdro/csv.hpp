#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace uvdro::csv {

struct Row {
  std::size_t line = 0;  ///< 1-based line in the source file
  std::vector<std::string> fields;
};

struct Table {
  std::vector<std::string> header;
  std::vector<Row> rows;

  /// Column position by name, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
};

/// Comma-separated with optional double quotes ("" escapes a quote). Blank
/// lines are skipped. Rows whose width differs from the header raise
/// ParseError naming the line.
Table read(std::istream& in, bool has_header = true);
Table read_file(const std::string& path, bool has_header = true);

std::vector<std::string> split_line(std::string_view line);

/// Parses the whole field as a finite double.
std::optional<double> parse_double(std::string_view field);

/// Shortest representation that round-trips.
std::string format_double(double value);

/// Quotes the field when it contains a comma, quote or newline.
std::string escape(std::string_view field);

}  // namespace uvdro::csv
