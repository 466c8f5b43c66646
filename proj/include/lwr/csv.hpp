#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lwr::csv {

/// Shortest round-trip decimal representation.
std::string format(double v);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column; throws DataError when absent.
  std::size_t column(std::string_view name) const;
};

/// Reads a comma-separated file with one header row. Blank lines and lines
/// starting with '#' are skipped. Throws DataError on I/O failure.
Table read(const std::filesystem::path& path);

double to_double(std::string_view field);
long to_long(std::string_view field);

/// Writes rows of numbers under a header.
void write(const std::filesystem::path& path, const std::vector<std::string>& header,
           const std::vector<std::vector<double>>& rows);

/// Single-column numeric series with a one-line header.
std::vector<double> read_series(const std::filesystem::path& path);
void write_series(const std::filesystem::path& path, std::string_view name, const std::vector<double>& values);

}  // namespace lwr::csv
