#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace bundleseg::csv {

using Row = std::vector<std::string>;

/// Minimal reader for the comma-separated tables this project writes:
/// no quoting, first row is the header.
struct Table {
  Row header;
  std::vector<Row> rows;

  /// Column index of `name`; throws ErrorKind::format when missing.
  std::size_t column(const std::string& name) const;
};

Table read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Table& table);

std::string format_optional(const std::optional<double>& v);
std::optional<double> parse_optional(const std::string& cell);

}  // namespace bundleseg::csv
