#include "udss/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "udss/error.hpp"

namespace udss {

using nlohmann::json;

ScalingReport scaling_report(std::vector<ScalingRecord> series, std::optional<unsigned> baseline_nodes) {
  if (series.empty()) {
    if (baseline_nodes) {
      throw Error(Errc::MissingBaseline, "series is empty; baseline " + std::to_string(*baseline_nodes) + " absent");
    }
    throw Error(Errc::NoMeasurements, "empty scaling series");
  }
  std::sort(series.begin(), series.end(),
            [](const ScalingRecord& a, const ScalingRecord& b) { return a.nodes < b.nodes; });
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& r = series[i];
    if (r.nodes == 0 || !(r.epoch_time_s > 0) || !std::isfinite(r.epoch_time_s)) {
      throw Error(Errc::InvalidRecord, "nodes and epoch time must be positive (nodes=" +
                                           std::to_string(r.nodes) + ")");
    }
    if (i > 0 && series[i - 1].nodes == r.nodes) {
      throw Error(Errc::DuplicateNodeCount, "node count " + std::to_string(r.nodes) + " appears twice");
    }
  }
  const unsigned base = baseline_nodes.value_or(series.front().nodes);
  auto it = std::find_if(series.begin(), series.end(), [&](const ScalingRecord& r) { return r.nodes == base; });
  if (it == series.end()) {
    throw Error(Errc::MissingBaseline, "baseline node count " + std::to_string(base) + " not in series");
  }
  const double t_base = it->epoch_time_s;

  ScalingReport report;
  report.baseline_nodes = base;
  for (const auto& r : series) {
    ScalingRow row;
    row.nodes = r.nodes;
    row.epoch_time_s = r.epoch_time_s;
    row.linear_speedup = static_cast<double>(r.nodes) / base;
    row.speedup = t_base / r.epoch_time_s;
    row.efficiency = row.speedup / row.linear_speedup;
    report.rows.push_back(row);
  }
  return report;
}

bool OverheadReport::any_significant() const noexcept {
  return std::any_of(rows.begin(), rows.end(), [](const OverheadRow& r) { return r.significant; });
}

OverheadReport overhead_report(const std::vector<OverheadRecord>& records, double threshold) {
  OverheadReport report;
  report.threshold = threshold;
  bool any_pair = false;
  for (const auto& rec : records) {
    for (auto v : {rec.throughput_with, rec.throughput_without, rec.free_mem_with_gb, rec.free_mem_without_gb}) {
      if (v && (!(*v >= 0) || !std::isfinite(*v))) {
        throw Error(Errc::InvalidRecord, rec.benchmark_name + ": measurements must be non-negative");
      }
    }
    OverheadRow row;
    row.benchmark_name = rec.benchmark_name;
    if (rec.throughput_with && rec.throughput_without) {
      if (*rec.throughput_without == 0) {
        throw Error(Errc::InvalidRecord, rec.benchmark_name + ": native throughput is zero");
      }
      row.throughput_delta = (*rec.throughput_with - *rec.throughput_without) / *rec.throughput_without;
      row.significant = std::abs(*row.throughput_delta) > threshold;
    }
    if (rec.free_mem_with_gb && rec.free_mem_without_gb) {
      row.mem_delta_gb = *rec.free_mem_without_gb - *rec.free_mem_with_gb;
    }
    if (row.throughput_delta || row.mem_delta_gb) any_pair = true;
    report.rows.push_back(std::move(row));
  }
  if (!any_pair) throw Error(Errc::NoMeasurements, "no record has a with/without measurement pair");
  return report;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(Errc::NoMeasurements, "median of nothing");
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2;
}

// ---------------------------------------------------------------------- CSV

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  cells.push_back(std::move(cell));
  for (auto& c : cells) {
    auto first = c.find_first_not_of(" \t\r");
    auto last = c.find_last_not_of(" \t\r");
    c = first == std::string::npos ? std::string() : c.substr(first, last - first + 1);
  }
  return cells;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

struct CsvTable {
  std::map<std::string, std::size_t> columns;
  std::vector<std::vector<std::string>> rows;

  const std::string& at(const std::vector<std::string>& row, const std::string& col) const {
    static const std::string empty;
    auto it = columns.find(col);
    if (it == columns.end() || it->second >= row.size()) return empty;
    return row[it->second];
  }
};

CsvTable read_csv(std::string_view text, const std::vector<std::string>& required) {
  CsvTable t;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r" || line.front() == '#') continue;
    auto cells = split_csv_line(line);
    if (header) {
      for (std::size_t i = 0; i < cells.size(); ++i) t.columns[cells[i]] = i;
      for (const auto& col : required) {
        if (!t.columns.count(col)) throw Error(Errc::InvalidRecord, "CSV header lacks column '" + col + "'");
      }
      header = false;
      continue;
    }
    t.rows.push_back(std::move(cells));
  }
  if (header) throw Error(Errc::InvalidRecord, "CSV input has no header");
  return t;
}

double parse_double(const std::string& cell, const std::string& what) {
  if (cell.empty()) throw Error(Errc::InvalidRecord, "missing value for " + what);
  char* end = nullptr;
  double v = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0') throw Error(Errc::InvalidRecord, "bad number '" + cell + "' for " + what);
  return v;
}

std::optional<double> parse_optional(const std::string& cell, const std::string& what) {
  if (cell.empty()) return std::nullopt;
  return parse_double(cell, what);
}

unsigned parse_count(const std::string& cell, const std::string& what) {
  double v = parse_double(cell, what);
  if (v < 0 || v != std::floor(v) || v > 4294967295.0) {
    throw Error(Errc::InvalidRecord, "bad count '" + cell + "' for " + what);
  }
  return static_cast<unsigned>(v);
}

bool parse_bool(const std::string& cell) { return cell == "true" || cell == "1"; }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from_json(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

json parse_report_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidRecord, std::string("report is not valid JSON: ") + e.what());
  }
}

}  // namespace

std::vector<ScalingRecord> parse_scaling_csv(std::string_view text) {
  auto t = read_csv(text, {"nodes", "epoch_time_s"});
  std::vector<ScalingRecord> out;
  for (const auto& row : t.rows) {
    out.push_back({parse_count(t.at(row, "nodes"), "nodes"), parse_double(t.at(row, "epoch_time_s"), "epoch_time_s")});
  }
  return out;
}

std::vector<OverheadRecord> parse_overhead_csv(std::string_view text) {
  auto t = read_csv(text, {"benchmark", "tp_with", "tp_without", "mem_with", "mem_without"});
  std::vector<OverheadRecord> out;
  for (const auto& row : t.rows) {
    OverheadRecord r;
    r.benchmark_name = t.at(row, "benchmark");
    r.throughput_with = parse_optional(t.at(row, "tp_with"), "tp_with");
    r.throughput_without = parse_optional(t.at(row, "tp_without"), "tp_without");
    r.free_mem_with_gb = parse_optional(t.at(row, "mem_with"), "mem_with");
    r.free_mem_without_gb = parse_optional(t.at(row, "mem_without"), "mem_without");
    out.push_back(std::move(r));
  }
  return out;
}

std::string to_csv(const std::vector<OverheadRecord>& records) {
  std::string out = "benchmark,tp_with,tp_without,mem_with,mem_without\n";
  for (const auto& r : records) {
    out += csv_cell(r.benchmark_name) + "," + num(r.throughput_with) + "," + num(r.throughput_without) + "," +
           num(r.free_mem_with_gb) + "," + num(r.free_mem_without_gb) + "\n";
  }
  return out;
}

std::string to_csv(const ScalingReport& report) {
  std::string out = "baseline_nodes,nodes,epoch_time_s,speedup,efficiency,linear_speedup\n";
  for (const auto& r : report.rows) {
    out += std::to_string(report.baseline_nodes) + "," + std::to_string(r.nodes) + "," + num(r.epoch_time_s) +
           "," + num(r.speedup) + "," + num(r.efficiency) + "," + num(r.linear_speedup) + "\n";
  }
  return out;
}

ScalingReport scaling_report_from_csv(std::string_view text) {
  auto t = read_csv(text, {"baseline_nodes", "nodes", "epoch_time_s", "speedup", "efficiency", "linear_speedup"});
  ScalingReport report;
  for (const auto& row : t.rows) {
    report.baseline_nodes = parse_count(t.at(row, "baseline_nodes"), "baseline_nodes");
    ScalingRow r;
    r.nodes = parse_count(t.at(row, "nodes"), "nodes");
    r.epoch_time_s = parse_double(t.at(row, "epoch_time_s"), "epoch_time_s");
    r.speedup = parse_double(t.at(row, "speedup"), "speedup");
    r.efficiency = parse_double(t.at(row, "efficiency"), "efficiency");
    r.linear_speedup = parse_double(t.at(row, "linear_speedup"), "linear_speedup");
    report.rows.push_back(r);
  }
  return report;
}

std::string to_json(const ScalingReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"nodes", r.nodes},
                    {"epoch_time_s", r.epoch_time_s},
                    {"speedup", r.speedup},
                    {"efficiency", r.efficiency},
                    {"linear_speedup", r.linear_speedup}});
  }
  return json{{"baseline_nodes", report.baseline_nodes}, {"rows", rows}}.dump(2) + "\n";
}

ScalingReport scaling_report_from_json(std::string_view text) {
  json j = parse_report_json(text);
  ScalingReport report;
  try {
    report.baseline_nodes = j.at("baseline_nodes").get<unsigned>();
    for (const auto& r : j.at("rows")) {
      report.rows.push_back({r.at("nodes").get<unsigned>(), r.at("epoch_time_s").get<double>(),
                             r.at("speedup").get<double>(), r.at("efficiency").get<double>(),
                             r.at("linear_speedup").get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidRecord, std::string("malformed scaling report: ") + e.what());
  }
  return report;
}

std::string to_csv(const OverheadReport& report) {
  std::string out = "benchmark,throughput_delta,mem_delta_gb,significant,threshold\n";
  for (const auto& r : report.rows) {
    out += csv_cell(r.benchmark_name) + "," + num(r.throughput_delta) + "," + num(r.mem_delta_gb) + "," +
           (r.significant ? "true" : "false") + "," + num(report.threshold) + "\n";
  }
  return out;
}

OverheadReport overhead_report_from_csv(std::string_view text) {
  auto t = read_csv(text, {"benchmark", "throughput_delta", "mem_delta_gb", "significant", "threshold"});
  OverheadReport report;
  for (const auto& row : t.rows) {
    report.threshold = parse_double(t.at(row, "threshold"), "threshold");
    OverheadRow r;
    r.benchmark_name = t.at(row, "benchmark");
    r.throughput_delta = parse_optional(t.at(row, "throughput_delta"), "throughput_delta");
    r.mem_delta_gb = parse_optional(t.at(row, "mem_delta_gb"), "mem_delta_gb");
    r.significant = parse_bool(t.at(row, "significant"));
    report.rows.push_back(std::move(r));
  }
  return report;
}

std::string to_json(const OverheadReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"benchmark", r.benchmark_name},
                    {"throughput_delta", optional_json(r.throughput_delta)},
                    {"mem_delta_gb", optional_json(r.mem_delta_gb)},
                    {"significant", r.significant}});
  }
  return json{{"threshold", report.threshold},
              {"any_significant", report.any_significant()},
              {"rows", rows}}
             .dump(2) +
         "\n";
}

OverheadReport overhead_report_from_json(std::string_view text) {
  json j = parse_report_json(text);
  OverheadReport report;
  try {
    report.threshold = j.at("threshold").get<double>();
    for (const auto& r : j.at("rows")) {
      OverheadRow row;
      row.benchmark_name = r.at("benchmark").get<std::string>();
      row.throughput_delta = optional_from_json(r, "throughput_delta");
      row.mem_delta_gb = optional_from_json(r, "mem_delta_gb");
      row.significant = r.at("significant").get<bool>();
      report.rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidRecord, std::string("malformed overhead report: ") + e.what());
  }
  return report;
}

std::string plot_data_csv(const ScalingReport& report) {
  std::string out = "nodes,measured_speedup,linear_speedup\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.nodes) + "," + num(r.speedup) + "," + num(r.linear_speedup) + "\n";
  }
  return out;
}

}  // namespace udss
