#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace tfo {

/// Exponential pulsation ratio I2/I1 of diastolic peak over systolic trough intensity.
double epr(double i_trough, double i_peak);

/// Ratio of ratios (ac1/dc1) / (ac2/dc2).
double ror(double ac1, double dc1, double ac2, double dc2);

struct EprCurve {
  std::vector<double> sdd_mm;
  std::vector<double> epr;
  double wavelength_nm = 0.0;
};

/// Smooths y(x): central differences (one-sided at the ends), a 2-point moving average of
/// consecutive differences, then cumulative reintegration anchored at y[0]. Affine curves
/// pass through unchanged. Curves with fewer than 3 points are returned as-is.
std::vector<double> smooth_curve(const std::vector<double>& x, const std::vector<double>& y);

/// smooth_curve applied to an EPR-vs-SDD curve; validates sdd ordering and epr > 0.
EprCurve smooth_epr_curve(const EprCurve& curve);

/// Trough/peak intensities for one ring at one wavelength.
struct IntensityPair {
  double trough = 0.0;  // I1, systole
  double peak = 0.0;    // I2, diastole
};

struct FeatureVector {
  /// [wavelength 1 rings 1..R, wavelength 2 rings 1..R]
  std::vector<double> epr;
  /// One RoR per ring, wavelength 1 over wavelength 2; empty unless requested.
  std::vector<double> ror;
};

/// Builds the EPR (and optionally RoR) features from pairs[wavelength][ring].
/// Returns nullopt when any intensity is non-positive (row invalid).
/// When sdd_mm is given, each per-wavelength EPR curve and the RoR curve are smoothed.
std::optional<FeatureVector> feature_vector(const std::vector<std::vector<IntensityPair>>& pairs,
                                            bool with_ror,
                                            const std::vector<double>* sdd_mm = nullptr);

}  // namespace tfo
