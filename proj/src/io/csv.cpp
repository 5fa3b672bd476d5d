#include "phm/io/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "phm/errors.hpp"

namespace phm::io {

std::size_t CsvTable::col_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  throw IoError("csv column not found: " + name);
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) throw IoError("failed to format double");
  return std::string(buf, res.ptr);
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    if (i) out << ',';
    out << table.columns[i];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size())
      throw IoError("csv row width mismatch in " + path);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << format_double(row[i]);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty csv: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::stringstream header(line);
  std::string field;
  while (std::getline(header, field, ',')) table.columns.push_back(field);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(table.columns.size());
    const char* p = line.data();
    const char* end = p + line.size();
    while (p <= end) {
      const char* comma = p;
      while (comma < end && *comma != ',') ++comma;
      double v = 0.0;
      auto res = std::from_chars(p, comma, v);
      if (res.ec != std::errc())
        throw IoError("bad numeric field in " + path + ": " +
                      std::string(p, comma));
      row.push_back(v);
      if (comma == end) break;
      p = comma + 1;
    }
    if (row.size() != table.columns.size())
      throw IoError("csv row width mismatch in " + path);
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_kv_csv(const std::string& path, const std::vector<KvRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "var,value\n";
  for (const auto& row : rows)
    out << row.key << ',' << format_double(row.value) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<KvRow> read_kv_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty csv: " + path);
  std::vector<KvRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw IoError("malformed var,value row in " + path);
    double v = 0.0;
    auto res = std::from_chars(line.data() + comma + 1,
                               line.data() + line.size(), v);
    if (res.ec != std::errc())
      throw IoError("bad numeric value in " + path + ": " + line);
    rows.push_back({line.substr(0, comma), v});
  }
  return rows;
}

}  // namespace phm::io
