#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>

#include "tfo/rng.hpp"
#include "tfo/tissue.hpp"
#include "tfo/transport.hpp"

namespace fixtures {

/// Small four-layer slab with distinct refractive indices and anisotropic scattering,
/// cheap enough for brute-force comparisons.
inline tfo::TissueModel tiny_model() {
  using tfo::LayerKind;
  tfo::TissueModel m;
  m.wavelengths_nm = {735.0, 850.0};
  m.layers = {
      {LayerKind::MaternalWall, 1.0, {{0.01, 3.0, 0.5, 1.40}, {0.008, 2.5, 0.5, 1.40}}},
      {LayerKind::Uterus, 0.8, {{0.02, 2.0, 0.3, 1.36}, {0.015, 1.8, 0.3, 1.36}}},
      {LayerKind::AmnioticFluid, 0.5, {{0.003, 0.2, 0.0, 1.33}, {0.004, 0.2, 0.0, 1.33}}},
      {LayerKind::FetalTissue, std::numeric_limits<double>::infinity(),
       {{0.02, 2.5, 0.6, 1.45}, {0.015, 2.2, 0.6, 1.45}}},
  };
  m.rings = {{1.0, 0.5}, {2.0, 0.5}, {3.0, 0.5}, {4.0, 0.5}};
  m.lateral_half_width_mm = 6.0;
  m.volume_depth_mm = 6.0;
  m.cutoff_factor = 30.0;
  return m;
}

/// Random absorption-free table: every row has a positive maternal-wall path, roughly
/// half the rows reach the fetal layer.
inline tfo::PathlengthTable random_table(std::size_t n_rows, std::size_t n_rings, std::uint64_t seed) {
  tfo::PathlengthTable t;
  tfo::RngStream rng(seed, 0, 99);
  t.meta.n_launched = 3 * n_rows;
  t.meta.wavelength_nm = 735.0;
  for (std::size_t r = 0; r < n_rings; ++r) t.meta.rings.push_back({10.0 + 10.0 * r, 1.0});
  t.ring_counts.assign(n_rings, 0);
  t.direct_tally.assign(n_rings, 0.0);
  for (std::size_t i = 0; i < n_rows; ++i) {
    tfo::PhotonRecord rec;
    rec.photon_index = 3 * i + rng.below(3);
    rec.detector_id = static_cast<std::int32_t>(rng.below(n_rings));
    rec.pathlength[0] = 1.0 + 20.0 * rng.uniform();
    rec.pathlength[1] = 10.0 * rng.uniform();
    rec.pathlength[2] = 3.0 * rng.uniform();
    rec.pathlength[3] = rng.uniform() < 0.5 ? 0.0 : 15.0 * rng.uniform();
    t.ring_counts[rec.detector_id] += 1;
    t.rows.push_back(rec);
  }
  return t;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tfo_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
