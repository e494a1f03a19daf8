#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "tfo/dataset.hpp"
#include "tfo/rng.hpp"

namespace tfo {

inline constexpr double kElementaryCharge = 1.602176634e-19;  // C
inline constexpr double kBoltzmann = 1.380649e-23;            // J/K

enum class NoiseScenario { ShotOnly, ShotAndMeasurement };

std::string_view to_string(NoiseScenario s);
/// Accepts "shot" / "ShotOnly" and "combined" / "ShotAndMeasurement".
NoiseScenario noise_scenario_from_string(std::string_view name);

struct NoiseConfig {
  NoiseScenario scenario = NoiseScenario::ShotOnly;
  double bandwidth_hz = 40.0;
  double temperature_k = 300.0;
  double gain_resistor_ohm = 1.0e6;
  double responsivity_a_per_w = 0.60;
  /// Optical power that a normalised intensity of 1 corresponds to.
  double source_power_w = 1.0e-3;
  std::uint64_t seed = 7;

  void validate() const;
};

/// sqrt(2 q B i)
double shot_sigma(double photocurrent_a, double bandwidth_hz);

/// sqrt(4 k T B / R)
double thermal_sigma(double temperature_k, double resistance_ohm, double bandwidth_hz);

/// Standard deviation, in watts of optical power, of the noise added to a received power
/// under the configured scenario (before any gain).
double noise_sigma_w(double power_w, const NoiseConfig& cfg);

/// One noisy reading of the received optical power. Scenario 2 multiplies signal plus
/// noise by the detector gain; Scenario 1 ignores it.
double inject(double power_w, const NoiseConfig& cfg, double gain, RngStream& rng);

/// Per-ring gains that bring every ring's mean received power to the first ring's.
std::vector<double> compute_gains(const std::vector<double>& mean_power_w);

struct NoisyDataset {
  FeatureDataset dataset;
  std::vector<double> gains;
  /// Rows dropped because a noisy intensity was not positive.
  std::size_t excluded_rows = 0;
};

/// Adds detector noise to the systole/diastole intensities of every row and recomputes
/// EPR (and RoR) features with the dataset's smoothing setting. Row k draws from
/// RngStream(cfg.seed, k, rng_domain::kNoise) in the order wavelength, ring, systole then
/// diastole. Gains are computed once from the dataset-wide mean power of each ring.
NoisyDataset add_noise(const FeatureDataset& clean, const NoiseConfig& cfg);

}  // namespace tfo
