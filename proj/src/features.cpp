#include "tfo/features.hpp"

#include <cmath>
#include <iostream>

#include "tfo/errors.hpp"

namespace tfo {

double epr(double i_trough, double i_peak) {
  if (!(i_trough > 0.0) || !(i_peak > 0.0)) throw DomainError("EPR needs positive intensities");
  return i_peak / i_trough;
}

double ror(double ac1, double dc1, double ac2, double dc2) {
  if (!(dc1 > 0.0) || !(dc2 > 0.0)) throw DomainError("RoR needs positive DC terms");
  return (ac1 / dc1) / (ac2 / dc2);
}

std::vector<double> smooth_curve(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DomainError("curve abscissa and ordinate differ in length");
  const std::size_t n = y.size();
  if (n < 3) return y;

  std::vector<double> slope(n);
  slope[0] = (y[1] - y[0]) / (x[1] - x[0]);
  slope[n - 1] = (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2]);
  for (std::size_t i = 1; i + 1 < n; ++i) slope[i] = (y[i + 1] - y[i - 1]) / (x[i + 1] - x[i - 1]);

  std::vector<double> out(n);
  out[0] = y[0];
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double avg = 0.5 * (slope[i] + slope[i + 1]);
    out[i + 1] = out[i] + avg * (x[i + 1] - x[i]);
  }
  return out;
}

EprCurve smooth_epr_curve(const EprCurve& curve) {
  if (curve.sdd_mm.size() != curve.epr.size()) throw DomainError("EPR curve length mismatch");
  for (std::size_t i = 1; i < curve.sdd_mm.size(); ++i) {
    if (!(curve.sdd_mm[i] > curve.sdd_mm[i - 1])) throw DomainError("SDDs must increase strictly");
  }
  for (double e : curve.epr) {
    if (!(e > 0.0)) throw DomainError("EPR values must be positive");
  }
  if (curve.epr.size() < 3) {
    std::cerr << "warning: EPR curve has fewer than 3 points; smoothing skipped\n";
    return curve;
  }
  return {curve.sdd_mm, smooth_curve(curve.sdd_mm, curve.epr), curve.wavelength_nm};
}

std::optional<FeatureVector> feature_vector(const std::vector<std::vector<IntensityPair>>& pairs,
                                            bool with_ror, const std::vector<double>* sdd_mm) {
  if (pairs.empty()) throw DomainError("no wavelengths in feature input");
  const std::size_t n_rings = pairs.front().size();
  for (const auto& w : pairs) {
    if (w.size() != n_rings) throw DomainError("ring count differs across wavelengths");
    for (const auto& p : w) {
      if (!(p.trough > 0.0) || !(p.peak > 0.0)) return std::nullopt;
    }
  }
  if (with_ror && pairs.size() != 2) throw DomainError("RoR features need exactly 2 wavelengths");
  if (sdd_mm && sdd_mm->size() != n_rings) throw DomainError("SDD list does not match rings");

  FeatureVector fv;
  fv.epr.reserve(pairs.size() * n_rings);
  for (const auto& w : pairs) {
    std::vector<double> curve;
    curve.reserve(n_rings);
    for (const auto& p : w) curve.push_back(epr(p.trough, p.peak));
    if (sdd_mm) curve = smooth_curve(*sdd_mm, curve);
    fv.epr.insert(fv.epr.end(), curve.begin(), curve.end());
  }
  if (with_ror) {
    for (std::size_t r = 0; r < n_rings; ++r) {
      const auto& a = pairs[0][r];
      const auto& b = pairs[1][r];
      const double v = ror(0.5 * (a.peak - a.trough), a.trough, 0.5 * (b.peak - b.trough), b.trough);
      if (!std::isfinite(v)) return std::nullopt;
      fv.ror.push_back(v);
    }
    if (sdd_mm) fv.ror = smooth_curve(*sdd_mm, fv.ror);
  }
  return fv;
}

}  // namespace tfo
