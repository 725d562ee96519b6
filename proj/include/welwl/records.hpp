#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "welwl/error.hpp"

namespace welwl {

using Cell = std::variant<std::int64_t, double, std::string>;

/// A persisted experiment result: the echoed configuration (sufficient for
/// exact reproduction), one row per trial, summary statistics, and timing.
/// CSV and JSON emissions carry identical values; doubles are printed with
/// shortest round-trip decimals in both.
struct RunRecord {
  std::string experiment;
  nlohmann::json config;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  std::map<std::string, double> summary;
  double wall_seconds = 0.0;

  void add_row(std::vector<Cell> row) {
    if (row.size() != columns.size())
      throw DimensionError("RunRecord: row width " + std::to_string(row.size()) + " vs " +
                           std::to_string(columns.size()) + " columns");
    rows.push_back(std::move(row));
  }
};

namespace detail {

// nlohmann's shortest-round-trip printer, reused for CSV cells so the two
// formats agree byte for byte on every number.
inline std::string cell_to_string(const Cell& cell) {
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return nlohmann::json(*i).dump();
  if (const auto* d = std::get_if<double>(&cell)) return nlohmann::json(*d).dump();
  return std::get<std::string>(cell);
}

inline nlohmann::json cell_to_json(const Cell& cell) {
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return *i;
  if (const auto* d = std::get_if<double>(&cell)) return *d;
  return std::get<std::string>(cell);
}

}  // namespace detail

inline nlohmann::json to_json(const RunRecord& record) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : record.rows) {
    nlohmann::json jrow = nlohmann::json::object();
    for (std::size_t c = 0; c < record.columns.size(); ++c) jrow[record.columns[c]] = detail::cell_to_json(row[c]);
    rows.push_back(std::move(jrow));
  }
  return nlohmann::json{{"experiment", record.experiment}, {"config", record.config},
                        {"columns", record.columns},       {"rows", rows},
                        {"summary", record.summary},       {"wall_seconds", record.wall_seconds}};
}

/// CSV layout: `# config <json>` and `# summary <json>` comment lines, a
/// fixed header row, then one line per trial.
inline void write_csv(const RunRecord& record, std::ostream& out) {
  out << "# experiment " << record.experiment << "\n";
  out << "# config " << record.config.dump() << "\n";
  out << "# summary " << nlohmann::json(record.summary).dump() << "\n";
  for (std::size_t c = 0; c < record.columns.size(); ++c) {
    if (c) out << ",";
    out << record.columns[c];
  }
  out << "\n";
  for (const auto& row : record.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ",";
      out << detail::cell_to_string(row[c]);
    }
    out << "\n";
  }
}

inline void save_record(const RunRecord& record, const std::string& path, const std::string& format) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  if (format == "csv") {
    write_csv(record, out);
  } else if (format == "json") {
    out << to_json(record).dump(2) << "\n";
  } else {
    throw ConfigError("unknown output format '" + format + "' (use csv or json)");
  }
}

}  // namespace welwl
