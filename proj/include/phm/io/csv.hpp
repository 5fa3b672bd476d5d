#pragma once

#include <string>
#include <vector>

namespace phm::io {

// Minimal numeric CSV table. All values are doubles; integer-valued columns
// (unit, cycle, sample) survive the round trip exactly because the writer
// emits shortest-round-trip decimal forms.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t col_index(const std::string& name) const;  // throws IoError if absent
};

std::string format_double(double v);

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

// Two-column "var,value" files keyed by a string identifier.
struct KvRow {
  std::string key;
  double value;
};
void write_kv_csv(const std::string& path, const std::vector<KvRow>& rows);
std::vector<KvRow> read_kv_csv(const std::string& path);

}  // namespace phm::io
