#include "tfo/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tfo/dataset.hpp"
#include "tfo/errors.hpp"

namespace tfo {

double improvement_percent(double baseline, double candidate, bool higher_is_better) {
  if (baseline == 0.0) throw DomainError("improvement relative to a zero baseline");
  const double change = higher_is_better ? candidate - baseline : baseline - candidate;
  return 100.0 * change / std::abs(baseline);
}

namespace {

constexpr const char* kMetricsHeader =
    "scenario,feature,split,trial,n,mae,abs_error_std,pearson_r,p_value,seed,config_hash";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("metrics line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << kMetricsHeader << "\n";
  for (const auto& r : records) {
    out << r.scenario << "," << r.feature << "," << r.split << "," << r.trial << "," << r.metrics.n
        << "," << format_double(r.metrics.mae) << "," << format_double(r.metrics.abs_error_std)
        << "," << format_double(r.metrics.pearson_r) << "," << format_double(r.metrics.p_value)
        << "," << r.seed << "," << r.config_hash << "\n";
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics file '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  std::vector<MetricsRecord> out;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != kMetricsHeader) throw DataError("'" + path + "' is not a metrics file");
      header_seen = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 11) throw DataError("metrics line " + std::to_string(line_no) + ": expected 11 fields");
    MetricsRecord r;
    r.scenario = f[0];
    r.feature = f[1];
    r.split = f[2];
    r.trial = static_cast<int>(to_double(f[3], line_no));
    r.metrics.n = static_cast<std::size_t>(to_double(f[4], line_no));
    r.metrics.mae = to_double(f[5], line_no);
    r.metrics.abs_error_std = to_double(f[6], line_no);
    r.metrics.pearson_r = to_double(f[7], line_no);
    r.metrics.p_value = to_double(f[8], line_no);
    r.seed = f[9];
    r.config_hash = f[10];
    out.push_back(std::move(r));
  }
  if (!header_seen) throw DataError("'" + path + "' has no metrics header");
  return out;
}

std::map<std::pair<std::string, std::string>, MetricSummary> summarize(
    const std::vector<MetricsRecord>& records) {
  std::map<std::pair<std::string, std::string>, MetricSummary> cells;
  for (const auto& r : records) {
    auto& c = cells[{r.scenario, r.feature}];
    ++c.count;
    c.mae += r.metrics.mae;
    c.abs_error_std += r.metrics.abs_error_std;
    c.pearson_r += r.metrics.pearson_r;
  }
  for (auto& [key, c] : cells) {
    const auto n = static_cast<double>(c.count);
    c.mae /= n;
    c.abs_error_std /= n;
    c.pearson_r /= n;
  }
  return cells;
}

Report build_report(const std::vector<MetricsRecord>& records) {
  const auto cells = summarize(records);
  std::vector<std::string> scenarios;
  for (const char* s : {"clean", "shot", "combined"}) scenarios.emplace_back(s);
  for (const auto& [key, c] : cells) {
    if (std::find(scenarios.begin(), scenarios.end(), key.first) == scenarios.end())
      scenarios.push_back(key.first);
  }
  auto find = [&](const std::string& scenario, const std::string& feature) -> const MetricSummary* {
    const auto it = cells.find({scenario, feature});
    return it == cells.end() ? nullptr : &it->second;
  };

  std::ostringstream md;
  std::ostringstream csv;
  csv << "table,row,column,value\n";
  bool missing = false;
  auto cell = [&](const MetricSummary* s, double MetricSummary::*field, bool percent) {
    if (!s) {
      missing = true;
      return std::string();
    }
    const double v = s->*field;
    return percent ? fixed(100.0 * v, 2) + "%" : fixed(v, 3);
  };

  md << "## EPR vs RoR features\n\n";
  md << "| Scenario | Metric | RoR | EPR | Improvement |\n|---|---|---|---|---|\n";
  struct MetricDef {
    const char* name;
    double MetricSummary::*field;
    bool percent;
    bool higher_better;
  };
  const MetricDef metrics[] = {{"MAE", &MetricSummary::mae, true, false},
                               {"Std", &MetricSummary::abs_error_std, true, false},
                               {"Pearson r", &MetricSummary::pearson_r, false, true}};
  for (const auto& sc : scenarios) {
    const auto* ror = find(sc, "ror");
    const auto* epr = find(sc, "epr");
    if (!ror && !epr) continue;
    for (const auto& m : metrics) {
      std::string imp;
      if (ror && epr && ror->*m.field != 0.0) {
        imp = fixed(improvement_percent(ror->*m.field, epr->*m.field, m.higher_better), 2) + "%";
        csv << "epr_vs_ror," << sc << "/" << m.name << ",improvement_percent,"
            << format_double(improvement_percent(ror->*m.field, epr->*m.field, m.higher_better)) << "\n";
      } else {
        missing = true;
      }
      md << "| " << sc << " | " << m.name << " | " << cell(ror, m.field, m.percent) << " | "
         << cell(epr, m.field, m.percent) << " | " << imp << " |\n";
      if (ror) csv << "epr_vs_ror," << sc << "/" << m.name << ",ror," << format_double(ror->*m.field) << "\n";
      if (epr) csv << "epr_vs_ror," << sc << "/" << m.name << ",epr," << format_double(epr->*m.field) << "\n";
    }
  }

  md << "\n## Clean vs noisy data\n\n";
  md << "| Scenario | EPR MAE | EPR Std | RoR MAE | RoR Std |\n|---|---|---|---|---|\n";
  for (const auto& sc : scenarios) {
    const auto* epr = find(sc, "epr");
    const auto* ror = find(sc, "ror");
    if (!ror && !epr) continue;
    md << "| " << sc << " | " << cell(epr, &MetricSummary::mae, true) << " | "
       << cell(epr, &MetricSummary::abs_error_std, true) << " | " << cell(ror, &MetricSummary::mae, true)
       << " | " << cell(ror, &MetricSummary::abs_error_std, true) << " |\n";
    for (const auto& [feat, s] : {std::pair{"epr", epr}, std::pair{"ror", ror}}) {
      if (!s) continue;
      csv << "noise," << sc << "," << feat << "_mae," << format_double(s->mae) << "\n";
      csv << "noise," << sc << "," << feat << "_std," << format_double(s->abs_error_std) << "\n";
    }
  }
  if (missing) md << "\nBlank cells: no metrics were supplied for that combination.\n";
  return {md.str(), csv.str()};
}

}  // namespace tfo
