#pragma once

#include <string>
#include <vector>

#include "htru/common.hpp"

namespace htru {

// Minimal CSV table: first row is the header. Values are pre-formatted
// strings (numeric cells use the 2-decimal round-half-up rule).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_csv(const std::string& path, const CsvTable& table);
CsvTable parse_csv(const std::string& path);

// Table cell for a metric value; negative sentinel renders as empty.
std::string metric_cell(double value);

}  // namespace htru
