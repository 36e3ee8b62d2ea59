#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace featureness {

/// Per-epoch training log, written as CSV.
struct MetricsLog {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write metrics CSV: " + path);
    for (size_t i = 0; i < columns.size(); ++i) {
      out << (i ? "," : "") << columns[i];
    }
    out << '\n';
    out.precision(10);
    for (const auto& row : rows) {
      for (size_t i = 0; i < row.size(); ++i) {
        out << (i ? "," : "") << row[i];
      }
      out << '\n';
    }
  }
};

}  // namespace featureness
