#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ilio {

// Plain comma-separated table; fields never contain commas or quotes here.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const;
  // Throws FormatError naming the missing column.
  std::size_t require_column(const std::string& name) const;
  std::vector<double> numeric_column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);
std::string format_csv(const CsvTable& table);
void write_csv(const CsvTable& table, const std::filesystem::path& path);

// Shortest decimal form that round-trips.
std::string format_double(double v);
double parse_double(const std::string& s);

}  // namespace ilio
