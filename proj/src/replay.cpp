#include "tfo/replay.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "tfo/errors.hpp"

namespace tfo {

namespace {

void check_absorption(const AbsorptionVector& mu_a) {
  for (double m : mu_a) {
    if (!(m >= 0.0)) throw DomainError("absorption coefficients must be >= 0");
  }
}

double attenuation(const PhotonRecord& row, const AbsorptionVector& mu) {
  return std::exp(-(mu[0] * row.pathlength[0] + mu[1] * row.pathlength[1] +
                    mu[2] * row.pathlength[2] + mu[3] * row.pathlength[3]));
}

double inverse_launched(const PathlengthTable& table) {
  if (table.meta.n_launched == 0) throw DataError("pathlength table has n_launched = 0");
  return 1.0 / static_cast<double>(table.meta.n_launched);
}

}  // namespace

std::vector<double> replay_intensity(const PathlengthTable& table, const AbsorptionVector& mu_a) {
  check_absorption(mu_a);
  const double inv = inverse_launched(table);
  std::vector<double> sum(table.n_rings(), 0.0);
  for (const auto& row : table.rows) sum[row.detector_id] += attenuation(row, mu_a);
  for (double& s : sum) s *= inv;
  return sum;
}

std::vector<double> fetal_sensitive_intensity(const PathlengthTable& table,
                                              const AbsorptionVector& mu_a) {
  check_absorption(mu_a);
  const double inv = inverse_launched(table);
  std::vector<double> sum(table.n_rings(), 0.0);
  for (const auto& row : table.rows) {
    if (row.fetal_sensitive()) sum[row.detector_id] += attenuation(row, mu_a);
  }
  for (double& s : sum) s *= inv;
  return sum;
}

std::vector<double> fetal_sensitivity(const PathlengthTable& table, const AbsorptionVector& mu_a) {
  check_absorption(mu_a);
  const std::size_t n = table.n_rings();
  std::vector<double> fetal(n, 0.0);
  std::vector<double> maternal(n, 0.0);
  std::vector<std::size_t> counts(n, 0);
  for (const auto& row : table.rows) {
    const double w = attenuation(row, mu_a);
    fetal[row.detector_id] += row.pathlength[3] * w;
    maternal[row.detector_id] += row.pathlength[0] * w;
    counts[row.detector_id] += 1;
  }
  std::vector<double> out(n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < n; ++k) {
    if (counts[k] == 0) continue;
    const double denom = fetal[k] + maternal[k];
    if (!(denom > 0.0))
      throw std::logic_error("fetal sensitivity: ring has photons but no maternal or fetal path");
    out[k] = fetal[k] / denom;
  }
  return out;
}

IntensityProfile intensity_profile(const PathlengthTable& table, const AbsorptionVector& mu_a) {
  return {replay_intensity(table, mu_a), fetal_sensitive_intensity(table, mu_a),
          fetal_sensitivity(table, mu_a)};
}

SweepKernel::SweepKernel(const PathlengthTable& table, std::vector<std::size_t> rings,
                         double mu_uterus, double mu_amniotic)
    : rings_(std::move(rings)), inv_launched_(inverse_launched(table)) {
  if (!(mu_uterus >= 0.0) || !(mu_amniotic >= 0.0))
    throw DomainError("absorption coefficients must be >= 0");
  std::vector<int> slot(table.n_rings(), -1);
  for (std::size_t k = 0; k < rings_.size(); ++k) {
    if (rings_[k] >= table.n_rings()) throw ConfigError("selected ring index out of range");
    slot[rings_[k]] = static_cast<int>(k);
  }
  static_log_.resize(rings_.size());
  l_m_.resize(rings_.size());
  l_f_.resize(rings_.size());
  for (const auto& row : table.rows) {
    const int k = slot[row.detector_id];
    if (k < 0) continue;
    static_log_[k].push_back(mu_uterus * row.pathlength[1] + mu_amniotic * row.pathlength[2]);
    l_m_[k].push_back(row.pathlength[0]);
    l_f_[k].push_back(row.pathlength[3]);
  }
}

std::vector<std::vector<double>> SweepKernel::maternal_factors(double mu_m) const {
  std::vector<std::vector<double>> out(rings_.size());
  for (std::size_t k = 0; k < rings_.size(); ++k) {
    const auto& lm = l_m_[k];
    const auto& st = static_log_[k];
    out[k].resize(lm.size());
    for (std::size_t i = 0; i < lm.size(); ++i) out[k][i] = std::exp(-(st[i] + mu_m * lm[i]));
  }
  return out;
}

std::vector<std::vector<double>> SweepKernel::fetal_factors(double mu_f) const {
  std::vector<std::vector<double>> out(rings_.size());
  for (std::size_t k = 0; k < rings_.size(); ++k) {
    const auto& lf = l_f_[k];
    out[k].resize(lf.size());
    for (std::size_t i = 0; i < lf.size(); ++i) out[k][i] = std::exp(-mu_f * lf[i]);
  }
  return out;
}

std::vector<double> SweepKernel::combine(const std::vector<std::vector<double>>& maternal,
                                         const std::vector<std::vector<double>>& fetal) const {
  std::vector<double> out(rings_.size(), 0.0);
  for (std::size_t k = 0; k < rings_.size(); ++k) {
    const auto& a = maternal[k];
    const auto& b = fetal[k];
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    out[k] = s * inv_launched_;
  }
  return out;
}

}  // namespace tfo
