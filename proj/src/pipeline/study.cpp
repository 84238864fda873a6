#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "evk/error.hpp"
#include "evk/maskvote.hpp"
#include "evk/pipeline.hpp"
#include "evk/reduce.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace evk {

std::vector<RobustnessRow> robustness_study(const VoxelGrid& mask, std::vector<double> percents) {
  if (mask.count() == 0) throw Error(ErrorKind::EmptyMask, "robustness study needs a non-empty mask");
  std::sort(percents.begin(), percents.end());
  std::vector<RobustnessRow> rows;
  rows.reserve(percents.size());
  for (double p : percents) {
    const VoxelGrid d = dilate_mask(mask, p);
    rows.push_back({p, d.count(), mask_iou(d, mask)});
  }
  return rows;
}

const std::vector<MetricSpec>& table_metrics() {
  static const std::vector<MetricSpec> m{
      {"cd_x1000", true, true}, {"nc", false, true},     {"f1_at_001", false, true}, {"psnr", false, false},
      {"ssim", false, false},   {"lpips", true, false},  {"embed-I", false, false},  {"DINO-I", false, false},
  };
  return m;
}

double relative_gain(double value, double base, bool lower_is_better) {
  if (base == 0 || !std::isfinite(base) || !std::isfinite(value)) return std::numeric_limits<double>::quiet_NaN();
  return 100.0 * (lower_is_better ? (base - value) : (value - base)) / std::abs(base);
}

namespace {

// First numeric value stored under `key`, searching the top level before
// nested objects (breadth first). Arrays are not entered.
std::optional<double> find_metric(const json& j, const std::string& key) {
  std::vector<const json*> level{&j};
  while (!level.empty()) {
    std::vector<const json*> next;
    for (const json* o : level) {
      if (!o->is_object()) continue;
      auto it = o->find(key);
      if (it != o->end() && it->is_number()) return it->get<double>();
      for (const auto& [k, v] : o->items())
        if (v.is_object()) next.push_back(&v);
    }
    level = std::move(next);
  }
  return std::nullopt;
}

std::optional<double> family_impro(const MethodRow& row, const MethodRow& base, bool is_3d) {
  std::vector<double> gains;
  for (const auto& m : table_metrics()) {
    if (m.is_3d != is_3d) continue;
    auto a = row.means.find(m.key), b = base.means.find(m.key);
    if (a == row.means.end() || b == base.means.end()) continue;
    const double g = relative_gain(a->second, b->second, m.lower_is_better);
    if (std::isfinite(g)) gains.push_back(g);
  }
  if (gains.empty()) return std::nullopt;
  return pairwise_sum(gains) / static_cast<double>(gains.size());
}

}  // namespace

ReportTables report_tables(const std::vector<json>& reports, const std::string& baseline) {
  std::map<std::string, std::map<std::string, std::vector<double>>> values;
  std::map<std::string, std::size_t> counts;
  for (const auto& r : reports) {
    if (!r.is_object() || !r.contains("method") || !r["method"].is_string()) continue;
    const std::string method = r["method"].get<std::string>();
    ++counts[method];
    for (const auto& m : table_metrics())
      if (auto v = find_metric(r, m.key)) values[method][m.key].push_back(*v);
  }
  if (counts.empty()) throw Error(ErrorKind::NoReports, "no report with a \"method\" field");

  ReportTables t;
  for (const auto& [method, n] : counts) {
    MethodRow row;
    row.method = method;
    row.count = n;
    for (const auto& [key, v] : values[method]) row.means[key] = pairwise_sum(v) / static_cast<double>(v.size());
    t.rows.push_back(std::move(row));
  }
  t.baseline = baseline.empty() ? t.rows.front().method : baseline;
  auto base = std::find_if(t.rows.begin(), t.rows.end(), [&](const MethodRow& r) { return r.method == t.baseline; });
  if (base == t.rows.end()) throw Error(ErrorKind::InvalidArgument, "baseline method '" + t.baseline + "' not found");
  const MethodRow base_row = *base;
  for (auto& row : t.rows) {
    row.impro_3d = family_impro(row, base_row, true);
    row.impro_2d = family_impro(row, base_row, false);
  }
  return t;
}

ReportTables report_tables(const fs::path& dir, const std::string& baseline) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorKind::NoReports, "no report directory at " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<json> reports;
  for (const auto& f : files) {
    std::ifstream in(f);
    json j = json::parse(in, nullptr, false);
    if (!j.is_discarded()) reports.push_back(std::move(j));
  }
  return report_tables(reports, baseline);
}

json ReportTables::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    json e{{"method", r.method}, {"count", r.count}, {"means", r.means}};
    e["impro_3d"] = r.impro_3d ? json(*r.impro_3d) : json(nullptr);
    e["impro_2d"] = r.impro_2d ? json(*r.impro_2d) : json(nullptr);
    rows_j.push_back(e);
  }
  return {{"baseline", baseline}, {"rows", rows_j}};
}

std::string ReportTables::to_text() const {
  std::vector<std::string> cols;
  for (const auto& m : table_metrics())
    for (const auto& r : rows)
      if (r.means.count(m.key)) {
        cols.emplace_back(m.key);
        break;
      }
  std::string out;
  char buf[64];
  auto cell = [&](const std::string& s, int w) {
    std::snprintf(buf, sizeof buf, "%*s", w, s.c_str());
    out += buf;
  };
  std::size_t name_w = 6;
  for (const auto& r : rows) name_w = std::max(name_w, r.method.size());
  std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(name_w), "method");
  out += buf;
  cell("n", 6);
  for (const auto& c : cols) cell(c, 11);
  cell("Impro.3D", 11);
  cell("Impro.2D", 11);
  out += "\n";
  auto num = [](std::optional<double> v, const char* fmt) {
    if (!v) return std::string("-");
    char b[32];
    std::snprintf(b, sizeof b, fmt, *v);
    return std::string(b);
  };
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(name_w), r.method.c_str());
    out += buf;
    cell(std::to_string(r.count), 6);
    for (const auto& c : cols) {
      auto it = r.means.find(c);
      cell(num(it == r.means.end() ? std::nullopt : std::optional<double>(it->second), "%.4f"), 11);
    }
    cell(num(r.impro_3d, "%+.1f%%"), 11);
    cell(num(r.impro_2d, "%+.1f%%"), 11);
    out += "\n";
  }
  out += "baseline: " + baseline + "\n";
  return out;
}

}  // namespace evk
