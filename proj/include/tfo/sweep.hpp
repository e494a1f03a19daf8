#pragma once

#include <cstddef>
#include <vector>

#include "tfo/dataset.hpp"
#include "tfo/tissue.hpp"
#include "tfo/transport.hpp"

namespace tfo {

/// Cartesian grid of hemodynamic parameters. Enumeration is row-major over
/// (hb_m, s_m, hb_f, s_f), with s_f varying fastest.
struct HemoGrid {
  std::vector<double> hb_m;
  std::vector<double> s_m;
  std::vector<double> hb_f;
  std::vector<double> s_f;

  std::size_t size() const { return hb_m.size() * s_m.size() * hb_f.size() * s_f.size(); }
  Hemodynamics at(std::size_t index) const;
  void validate() const;
};

/// Tables of one geometry, one per wavelength in the model's wavelength order.
struct GeometryTables {
  double d_m_mm = 0.0;
  std::vector<const PathlengthTable*> by_wavelength;
};

struct SweepOptions {
  std::vector<double> selected_sdd_mm{15.0, 33.0, 46.0, 68.0, 94.0};
  bool smooth = true;
  bool with_ror = true;
  unsigned workers = 0;
};

struct SweepResult {
  FeatureDataset dataset;
  std::size_t invalid_rows = 0;
  /// Ring indices (into the table's ring list) matched to selected_sdd_mm.
  std::vector<std::size_t> rings;
};

/// Replays every grid point against each geometry's tables and emits one FeatureRow per
/// (geometry, grid point), geometry-major then grid order. Rows with an empty selected
/// ring or a non-positive intensity are dropped and counted.
SweepResult sweep(const TissueModel& base_model, const std::vector<GeometryTables>& geometries,
                  const HemoGrid& grid, const ExtinctionTable& ext,
                  const AbsorptionModel& absorption, const SweepOptions& options);

}  // namespace tfo
