#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tfo/evaluation.hpp"

namespace tfo {

/// Relative change from baseline to candidate, in percent, signed so that positive means
/// better: (base - cand) / base for error metrics, (cand - base) / base for correlations.
double improvement_percent(double baseline, double candidate, bool higher_is_better);

/// One evaluated model, as stored in a metrics CSV.
struct MetricsRecord {
  std::string scenario = "clean";
  std::string feature = "epr";
  std::string split = "random";
  int trial = 0;
  RegressionMetrics metrics;
  std::string seed;
  std::string config_hash;
};

/// Header: scenario,feature,split,trial,n,mae,abs_error_std,pearson_r,p_value,seed,config_hash
void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

struct MetricSummary {
  std::size_t count = 0;
  double mae = 0.0;
  double abs_error_std = 0.0;
  double pearson_r = 0.0;
};

/// Mean of each metric over all records of a (scenario, feature) cell.
std::map<std::pair<std::string, std::string>, MetricSummary> summarize(
    const std::vector<MetricsRecord>& records);

struct Report {
  std::string markdown;
  /// Tidy rows: table,row,column,value
  std::string csv;
};

/// EPR-vs-RoR comparison per scenario (with improvement percentages) and a clean-vs-noisy
/// table per feature kind. Absent cells are left blank and footnoted.
Report build_report(const std::vector<MetricsRecord>& records);

}  // namespace tfo
