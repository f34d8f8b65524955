#include "advbench/csv.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "advbench/binary_io.hpp"
#include "advbench/error.hpp"

namespace advbench {

void CsvTable::add(std::vector<std::string> row) {
  if (row.size() != header.size()) {
    throw ShapeError("csv: row has " + std::to_string(row.size()) + " cells, header has " + std::to_string(header.size()));
  }
  for (const auto& cell : row) {
    if (cell.find_first_of(",\n\r") != std::string::npos) throw FormatError("csv: cell contains a separator: " + cell, 0);
  }
  rows.push_back(std::move(row));
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw FormatError("csv: missing column \"" + name + "\"", 0);
}

std::string CsvTable::text() const {
  std::string out;
  auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

std::string csv_num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_num(std::uint64_t v) { return std::to_string(v); }

void write_csv(const CsvTable& table, const std::filesystem::path& path) { write_text_file(path, table.text()); }

CsvTable parse_csv(const std::string& text, const std::string& what) {
  CsvTable t;
  std::istringstream is(text);
  std::string line;
  bool first = true;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!l.empty() && l.back() == ',') cells.emplace_back();
    return cells;
  };
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (first) {
      t.header = split(line);
      first = false;
      continue;
    }
    auto cells = split(line);
    if (cells.size() != t.header.size()) {
      throw FormatError(what + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                            " cells, got " + std::to_string(cells.size()),
                        0);
    }
    t.rows.push_back(std::move(cells));
  }
  if (first) throw FormatError(what + ": empty csv", 0);
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_csv(std::string(bytes.begin(), bytes.end()), path.string());
}

}  // namespace advbench
