#pragma once

// Comma-separated tables: header row, LF line endings, '.' decimal point,
// numbers in shortest round-trip form. No quoting: cells must not contain
// commas or newlines.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace advbench {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
  std::size_t column(const std::string& name) const;  // throws if absent
  std::string text() const;
};

std::string csv_num(double v);
std::string csv_num(std::uint64_t v);

void write_csv(const CsvTable& table, const std::filesystem::path& path);
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text, const std::string& what = "csv");

}  // namespace advbench
