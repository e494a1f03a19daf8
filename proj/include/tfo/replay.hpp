#pragma once

#include <cstddef>
#include <vector>

#include "tfo/tissue.hpp"
#include "tfo/transport.hpp"

namespace tfo {

/// Normalised intensity I/I0 per ring: (1/n_launched) * sum over the ring's photons of
/// exp(-sum_j mu_a[j] * L_j), accumulated in photon-index order.
std::vector<double> replay_intensity(const PathlengthTable& table, const AbsorptionVector& mu_a);

/// Same as replay_intensity but only over photons with a nonzero fetal pathlength.
std::vector<double> fetal_sensitive_intensity(const PathlengthTable& table,
                                              const AbsorptionVector& mu_a);

/// Share of the absorption-change signal owed to the fetal layer, per ring:
/// sum(L_f w) / (sum(L_f w) + sum(L_m w)). Empty rings yield NaN.
std::vector<double> fetal_sensitivity(const PathlengthTable& table, const AbsorptionVector& mu_a);

struct IntensityProfile {
  std::vector<double> total;
  std::vector<double> fetal_sensitive;
  std::vector<double> sensitivity;
};

IntensityProfile intensity_profile(const PathlengthTable& table, const AbsorptionVector& mu_a);

/// Replay restricted to a subset of rings, factorised for sweeping the two pulsatile
/// layers. The uterus and amniotic-fluid absorption are folded into a per-photon
/// constant, so each evaluation costs one exponential per photon and layer value.
class SweepKernel {
 public:
  SweepKernel(const PathlengthTable& table, std::vector<std::size_t> rings, double mu_uterus,
              double mu_amniotic);

  std::size_t n_rings() const { return rings_.size(); }
  std::size_t n_photons(std::size_t k) const { return l_m_[k].size(); }

  /// exp(-mu_static*L - mu_m * L_m) per photon, grouped by selected ring.
  std::vector<std::vector<double>> maternal_factors(double mu_m) const;
  /// exp(-mu_f * L_f) per photon, grouped by selected ring.
  std::vector<std::vector<double>> fetal_factors(double mu_f) const;

  /// Per selected ring: (1/n_launched) * sum maternal * fetal, in photon-index order.
  std::vector<double> combine(const std::vector<std::vector<double>>& maternal,
                              const std::vector<std::vector<double>>& fetal) const;

 private:
  std::vector<std::size_t> rings_;
  double inv_launched_;
  std::vector<std::vector<double>> static_log_;
  std::vector<std::vector<double>> l_m_;
  std::vector<std::vector<double>> l_f_;
};

}  // namespace tfo
