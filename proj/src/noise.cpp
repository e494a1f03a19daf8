#include "tfo/noise.hpp"

#include <cmath>
#include <iostream>

#include "tfo/errors.hpp"
#include "tfo/features.hpp"

namespace tfo {

std::string_view to_string(NoiseScenario s) {
  return s == NoiseScenario::ShotOnly ? "shot" : "combined";
}

NoiseScenario noise_scenario_from_string(std::string_view name) {
  if (name == "shot" || name == "ShotOnly") return NoiseScenario::ShotOnly;
  if (name == "combined" || name == "ShotAndMeasurement") return NoiseScenario::ShotAndMeasurement;
  throw ConfigError("unknown noise scenario '" + std::string(name) + "'");
}

void NoiseConfig::validate() const {
  if (!(bandwidth_hz >= 0.0)) throw ConfigError("noise bandwidth must be >= 0");
  if (!(temperature_k > 0.0)) throw ConfigError("noise temperature must be > 0");
  if (!(gain_resistor_ohm > 0.0)) throw ConfigError("gain resistor must be > 0");
  if (!(responsivity_a_per_w > 0.0)) throw ConfigError("responsivity must be > 0");
  if (!(source_power_w > 0.0)) throw ConfigError("source power must be > 0");
}

double shot_sigma(double photocurrent_a, double bandwidth_hz) {
  if (photocurrent_a < 0.0) throw DomainError("photocurrent must be >= 0");
  return std::sqrt(2.0 * kElementaryCharge * bandwidth_hz * photocurrent_a);
}

double thermal_sigma(double temperature_k, double resistance_ohm, double bandwidth_hz) {
  if (std::isinf(resistance_ohm)) return 0.0;
  return std::sqrt(4.0 * kBoltzmann * temperature_k * bandwidth_hz / resistance_ohm);
}

double noise_sigma_w(double power_w, const NoiseConfig& cfg) {
  if (power_w < 0.0) throw DomainError("received power must be >= 0");
  const double current = cfg.responsivity_a_per_w * power_w;
  double var = std::pow(shot_sigma(current, cfg.bandwidth_hz), 2);
  if (cfg.scenario == NoiseScenario::ShotAndMeasurement)
    var += std::pow(thermal_sigma(cfg.temperature_k, cfg.gain_resistor_ohm, cfg.bandwidth_hz), 2);
  return std::sqrt(var) / cfg.responsivity_a_per_w;
}

double inject(double power_w, const NoiseConfig& cfg, double gain, RngStream& rng) {
  const double noisy = power_w + noise_sigma_w(power_w, cfg) * rng.normal();
  return cfg.scenario == NoiseScenario::ShotAndMeasurement ? gain * noisy : noisy;
}

std::vector<double> compute_gains(const std::vector<double>& mean_power_w) {
  if (mean_power_w.empty()) throw DomainError("no ring powers to normalise");
  std::vector<double> gains;
  gains.reserve(mean_power_w.size());
  for (double p : mean_power_w) {
    if (!(p > 0.0)) throw DataError("ring mean power must be positive to compute a gain");
    gains.push_back(mean_power_w.front() / p);
  }
  return gains;
}

NoisyDataset add_noise(const FeatureDataset& clean, const NoiseConfig& cfg) {
  cfg.validate();
  if (!clean.has_intensities) throw DataError("noise injection needs intensity columns");
  const std::size_t nw = clean.n_wavelengths();
  const std::size_t nr = clean.n_rings();
  if (clean.rows.empty()) throw DataError("dataset has no rows");

  std::vector<double> mean_power(nr, 0.0);
  for (const auto& row : clean.rows) {
    for (std::size_t w = 0; w < nw; ++w)
      for (std::size_t r = 0; r < nr; ++r)
        mean_power[r] += row.i_systole[w * nr + r] + row.i_diastole[w * nr + r];
  }
  for (double& p : mean_power)
    p *= cfg.source_power_w / static_cast<double>(2 * nw * clean.rows.size());

  NoisyDataset out;
  out.gains = compute_gains(mean_power);
  out.dataset = clean;
  out.dataset.rows.clear();
  out.dataset.provenance["noise_scenario"] = std::string(to_string(cfg.scenario));
  out.dataset.provenance["noise_seed"] = std::to_string(cfg.seed);

  const std::vector<double>* sdd = clean.smoothed ? &clean.sdd_mm : nullptr;
  for (std::size_t k = 0; k < clean.rows.size(); ++k) {
    const auto& row = clean.rows[k];
    RngStream rng(cfg.seed, k, rng_domain::kNoise);
    FeatureRow noisy = row;
    std::vector<std::vector<IntensityPair>> pairs(nw, std::vector<IntensityPair>(nr));
    for (std::size_t w = 0; w < nw; ++w) {
      for (std::size_t r = 0; r < nr; ++r) {
        const std::size_t i = w * nr + r;
        const double g = out.gains[r];
        const double sys = inject(row.i_systole[i] * cfg.source_power_w, cfg, g, rng);
        const double dia = inject(row.i_diastole[i] * cfg.source_power_w, cfg, g, rng);
        noisy.i_systole[i] = sys / cfg.source_power_w;
        noisy.i_diastole[i] = dia / cfg.source_power_w;
        pairs[w][r] = {sys, dia};
      }
    }
    auto fv = feature_vector(pairs, clean.has_ror, sdd);
    if (!fv) {
      ++out.excluded_rows;
      continue;
    }
    noisy.epr = std::move(fv->epr);
    noisy.ror = std::move(fv->ror);
    out.dataset.rows.push_back(std::move(noisy));
  }
  if (out.excluded_rows > 0)
    std::cerr << "warning: noise injection excluded " << out.excluded_rows
              << " rows with non-positive intensities\n";
  return out;
}

}  // namespace tfo
