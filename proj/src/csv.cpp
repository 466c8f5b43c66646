#include "lwr/csv.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "lwr/errors.hpp"

namespace lwr::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::string format(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw DataError("missing CSV column '" + std::string(name) + "'");
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  Table table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    const std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    if (!have_header) {
      table.header = split(view);
      have_header = true;
      continue;
    }
    auto fields = split(view);
    if (fields.size() != table.header.size()) {
      std::ostringstream msg;
      msg << path.string() << ": row " << table.rows.size() + 1 << " has " << fields.size() << " fields, expected "
          << table.header.size();
      throw DataError(msg.str());
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) throw DataError("'" + path.string() + "' is empty");
  return table;
}

double to_double(std::string_view field) {
  double v = 0.0;
  field = trim(field);
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw DataError("not a number: '" + std::string(field) + "'");
  }
  return v;
}

long to_long(std::string_view field) {
  long v = 0;
  field = trim(field);
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw DataError("not an integer: '" + std::string(field) + "'");
  }
  return v;
}

void write(const std::filesystem::path& path, const std::vector<std::string>& header,
           const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format(row[i]);
    out << '\n';
  }
}

std::vector<double> read_series(const std::filesystem::path& path) {
  const Table t = read(path);
  if (t.header.size() != 1) throw DataError("'" + path.string() + "' must have exactly one column");
  std::vector<double> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) out.push_back(to_double(row[0]));
  return out;
}

void write_series(const std::filesystem::path& path, std::string_view name, const std::vector<double>& values) {
  std::vector<std::vector<double>> rows;
  rows.reserve(values.size());
  for (double v : values) rows.push_back({v});
  write(path, {std::string(name)}, rows);
}

}  // namespace lwr::csv
