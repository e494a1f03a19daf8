#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tfo/evaluation.hpp"
#include "tfo/mlp.hpp"
#include "tfo/noise.hpp"
#include "tfo/ppg.hpp"
#include "tfo/sweep.hpp"
#include "tfo/tissue.hpp"

namespace tfo {

inline constexpr int kConfigFormatVersion = 1;

struct SimulationSettings {
  std::uint64_t photons = 1000000;
  std::uint64_t seed = 1;
  unsigned workers = 0;
};

struct TrainingSettings {
  std::vector<FeatureKind> features{FeatureKind::Epr, FeatureKind::Ror};
  double val_fraction = 0.2;
  std::size_t trials = 5;
  std::size_t folds = 5;
  /// Split seed of trial t is split_seed + t; the model seed is mlp.seed + t.
  std::uint64_t split_seed = 11;
  MlpConfig mlp;
};

/// Synthetic monitoring rounds pushed through the PPG chain (temporal evaluation).
struct PpgRoundSettings {
  bool enabled = true;
  std::size_t rounds = 4;
  double duration_s = 300.0;
  /// Spacing of the replayed intensity control points.
  double control_interval_s = 5.0;
  /// Spacing of the EPR samples taken from each round.
  double sample_interval_s = 5.0;
  /// Fetal saturation dips from a value in s_f_high to one in s_f_low and recovers.
  std::vector<double> s_f_high{0.55, 0.7};
  std::vector<double> s_f_low{0.2, 0.4};
  std::vector<double> fhr_hz{2.0, 2.6};
  std::vector<double> mhr_hz{1.2, 1.6};
  std::vector<double> mrr_hz{0.22, 0.3};
  /// Maternal, respiratory and white-noise amplitudes relative to each channel's DC.
  double maternal_ac_fraction = 0.01;
  double resp_ac_fraction = 0.005;
  double noise_fraction = 0.0;
  Hemodynamics nominal;
  std::uint64_t seed = 5;
  PpgSettings dsp;
};

struct Config {
  TissueModel model;
  ExtinctionTable extinction;
  AbsorptionModel absorption;
  std::vector<double> d_m_mm;
  SimulationSettings simulation;
  HemoGrid grid;
  SweepOptions sweep;
  NoiseConfig noise;
  std::vector<NoiseScenario> noise_scenarios;
  TrainingSettings training;
  PpgRoundSettings ppg;
  std::string output_dir = "run";

  /// Canonical JSON text of each section after defaults are filled in; stage hashes are
  /// computed from these so that formatting and key order do not matter.
  std::map<std::string, std::string> canonical;

  std::uint64_t section_hash(const std::string& section) const;
  /// Hash over every section.
  std::uint64_t hash() const;
};

/// Parses a configuration document. Throws ConfigError for malformed JSON, unknown keys,
/// a missing or unsupported format_version, or values that fail validation.
Config parse_config(const std::string& json_text);
Config load_config(const std::string& path);

/// Fully populated default configuration as JSON text.
std::string default_config_json();

}  // namespace tfo
