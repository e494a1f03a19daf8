#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tfo/tissue.hpp"

namespace tfo {

/// One sample: features plus ground-truth labels. Vectors indexed [wavelength][ring]
/// are flattened wavelength-major.
struct FeatureRow {
  double d_m_mm = 0.0;
  Hemodynamics hemo;
  std::vector<double> epr;
  std::vector<double> ror;
  std::vector<double> i_systole;
  std::vector<double> i_diastole;
  std::optional<int> round_id;
  std::optional<double> time_s;
};

struct FeatureDataset {
  std::vector<double> wavelengths_nm;
  std::vector<double> sdd_mm;
  bool smoothed = true;
  bool has_ror = false;
  bool has_intensities = true;
  /// Free-form provenance (seed, config hash, stage) written as header comments.
  std::map<std::string, std::string> provenance;
  std::vector<FeatureRow> rows;

  std::size_t n_rings() const { return sdd_mm.size(); }
  std::size_t n_wavelengths() const { return wavelengths_nm.size(); }
  std::vector<std::string> column_names() const;
};

/// CSV with '#'-prefixed header comments carrying wavelengths, SDDs and provenance.
/// Columns: d_m, hb_m, s_m, hb_f, s_f, epr_w1_r1.., [ror_r1..], [isys_*, idia_*],
/// [round_id, time_s].
void write_dataset_csv(const std::string& path, const FeatureDataset& ds);
FeatureDataset read_dataset_csv(const std::string& path);

/// Formats a double so that parsing it back yields the same value.
std::string format_double(double v);

}  // namespace tfo
