#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tfo/config.hpp"
#include "tfo/dataset.hpp"
#include "tfo/evaluation.hpp"
#include "tfo/report.hpp"
#include "tfo/sweep.hpp"

namespace tfo {

inline constexpr const char* kToolVersion = "1.0.0";

std::string hex64(std::uint64_t v);

/// "table_d8_w735.bin"
std::string table_file_name(double d_m_mm, double wavelength_nm);

enum class CvMode { Random, Temporal };
std::string_view to_string(CvMode m);
CvMode cv_mode_from_string(std::string_view name);

struct PredictionRow {
  std::string feature;
  int trial = 0;
  std::size_t row = 0;
  double label = 0.0;
  double prediction = 0.0;
};

struct HistoryRow {
  std::string feature;
  int trial = 0;
  std::size_t epoch = 0;
  EpochStats stats;
};

struct TrainingOutput {
  std::vector<MetricsRecord> metrics;
  std::vector<PredictionRow> predictions;
  std::vector<HistoryRow> history;
  /// Model of the first trial (or fold) for each requested feature kind.
  std::vector<Mlp> models;
};

/// Trains every (feature kind, trial) combination. Random mode splits each maternal wall
/// thickness 80/20 with seed split_seed + t; temporal mode runs the k contiguous folds of
/// every round with inverse-round-size weights. Model seeds are mlp.seed + t. Jobs run in
/// parallel; results are ordered by feature then trial.
TrainingOutput run_training(const FeatureDataset& ds, const TrainingSettings& settings, CvMode mode,
                            const std::string& scenario, const std::string& config_hash,
                            unsigned workers = 0);

void write_predictions_csv(const std::string& path, const TrainingOutput& out,
                           const std::string& scenario, const std::string& provenance);
void write_history_csv(const std::string& path, const TrainingOutput& out,
                       const std::string& scenario, const std::string& provenance);

/// Synthetic monitoring rounds: in each round the fetal saturation dips and recovers,
/// replayed intensities drive a synthesized dual-wavelength PPG per selected detector,
/// and the demodulate / envelope / lock-in / EPR chain yields one feature row every
/// sample_interval_s. Round r uses geometry r mod (number of geometries).
FeatureDataset build_ppg_rounds(const Config& cfg, const TissueModel& base_model,
                                const std::vector<GeometryTables>& geometries,
                                std::size_t* dropped_rows = nullptr);

/// Fetal saturation of a round at time t: a raised-cosine dip from high to low and back.
double round_saturation(double high, double low, double t_s, double duration_s);

struct StageRecord {
  std::string name;
  std::uint64_t hash = 0;
  std::vector<std::string> outputs;
  bool executed = false;
};

struct PipelineOptions {
  /// Overrides cfg.output_dir when non-empty.
  std::string out_dir;
  std::ostream* log = nullptr;
};

struct PipelineResult {
  std::vector<StageRecord> stages;
  std::string manifest_path;

  const StageRecord* find(const std::string& name) const;
  std::size_t executed_count() const;
};

/// Runs simulate -> sweep -> noise -> train -> report (plus the PPG rounds and their
/// temporal training when enabled). A stage whose stamp under <out>/stages matches its
/// content hash and whose outputs all exist is skipped. The manifest lists every stage
/// with its hash and outputs, the seeds and the configuration hash.
PipelineResult run_pipeline(const Config& cfg, const PipelineOptions& options = {});

}  // namespace tfo
