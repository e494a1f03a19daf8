#include "tfo/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <thread>

#include "tfo/errors.hpp"
#include "tfo/features.hpp"
#include "tfo/replay.hpp"

namespace tfo {

Hemodynamics HemoGrid::at(std::size_t index) const {
  const std::size_t nsf = s_f.size();
  const std::size_t nhf = hb_f.size();
  const std::size_t nsm = s_m.size();
  Hemodynamics h;
  h.s_f = s_f[index % nsf];
  index /= nsf;
  h.hb_f = hb_f[index % nhf];
  index /= nhf;
  h.s_m = s_m[index % nsm];
  index /= nsm;
  h.hb_m = hb_m.at(index);
  return h;
}

void HemoGrid::validate() const {
  if (size() == 0) throw ConfigError("hemodynamic grid has an empty axis");
  for (std::size_t i = 0; i < size(); ++i) at(i).validate();
}

namespace {

struct WavelengthIntensities {
  // [grid index][selected ring]
  std::vector<std::vector<double>> systole;
  std::vector<std::vector<double>> diastole;
};

WavelengthIntensities replay_grid(const PathlengthTable& table, const TissueModel& model,
                                  double wavelength_nm, const std::vector<std::size_t>& rings,
                                  const HemoGrid& grid, const ExtinctionTable& ext,
                                  const AbsorptionModel& absorption, unsigned workers) {
  const std::size_t w = model.wavelength_index(wavelength_nm);
  const SweepKernel kernel(table, rings, model.layers[1].optics[w].mu_a,
                           model.layers[2].optics[w].mu_a);

  const std::size_t n_maternal = grid.hb_m.size() * grid.s_m.size();
  const std::size_t n_fetal = grid.hb_f.size() * grid.s_f.size();
  std::vector<std::vector<std::vector<double>>> maternal(n_maternal);
  for (std::size_t m = 0; m < n_maternal; ++m) {
    const Hemodynamics h = grid.at(m * n_fetal);
    maternal[m] = kernel.maternal_factors(
        pulsatile_tissue_mu_a(h, LayerKind::MaternalWall, wavelength_nm, ext, absorption));
  }

  WavelengthIntensities out;
  out.systole.resize(grid.size());
  out.diastole.resize(grid.size());
  auto run = [&](unsigned worker, unsigned n_workers) {
    for (std::size_t f = worker; f < n_fetal; f += n_workers) {
      const Hemodynamics h = grid.at(f);
      Hemodynamics relaxed = h;
      relaxed.hb_f = h.hb_f * (1.0 - absorption.pulsation_delta);
      const auto sys = kernel.fetal_factors(
          pulsatile_tissue_mu_a(h, LayerKind::FetalTissue, wavelength_nm, ext, absorption));
      const auto dia = kernel.fetal_factors(
          pulsatile_tissue_mu_a(relaxed, LayerKind::FetalTissue, wavelength_nm, ext, absorption));
      for (std::size_t m = 0; m < n_maternal; ++m) {
        const std::size_t idx = m * n_fetal + f;
        out.systole[idx] = kernel.combine(maternal[m], sys);
        out.diastole[idx] = kernel.combine(maternal[m], dia);
      }
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n_fetal)));
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < workers; ++k) pool.emplace_back(run, k, workers);
  }
  return out;
}

}  // namespace

SweepResult sweep(const TissueModel& base_model, const std::vector<GeometryTables>& geometries,
                  const HemoGrid& grid, const ExtinctionTable& ext,
                  const AbsorptionModel& absorption, const SweepOptions& options) {
  grid.validate();
  if (options.with_ror && base_model.wavelengths_nm.size() != 2)
    throw ConfigError("RoR features need exactly two wavelengths");
  unsigned workers = options.workers;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());

  SweepResult result;
  auto& ds = result.dataset;
  ds.wavelengths_nm = base_model.wavelengths_nm;
  ds.smoothed = options.smooth;
  ds.has_ror = options.with_ror;
  ds.has_intensities = true;
  for (double sdd : options.selected_sdd_mm)
    result.rings.push_back(nearest_ring(base_model.rings, sdd));
  for (std::size_t k = 1; k < result.rings.size(); ++k) {
    if (result.rings[k] <= result.rings[k - 1])
      throw ConfigError("selected SDDs must map to distinct, increasing rings");
  }
  for (std::size_t r : result.rings) ds.sdd_mm.push_back(base_model.rings[r].sdd_mm);
  const std::size_t nw = ds.wavelengths_nm.size();
  const std::size_t nr = result.rings.size();

  for (const auto& geo : geometries) {
    const TissueModel model = base_model.with_maternal_thickness(geo.d_m_mm);
    model.validate();
    if (geo.by_wavelength.size() != nw)
      throw DataError("geometry needs one table per configured wavelength");

    std::vector<WavelengthIntensities> per_wl;
    std::vector<bool> ring_empty(nr, false);
    for (std::size_t w = 0; w < nw; ++w) {
      const PathlengthTable& table = *geo.by_wavelength[w];
      if (table.meta.model_hash != model.hash())
        throw DataError("pathlength table does not match the tissue model for d_m = " +
                        format_double(geo.d_m_mm));
      if (std::abs(table.meta.wavelength_nm - ds.wavelengths_nm[w]) > 1e-6)
        throw DataError("pathlength table wavelength mismatch");
      for (std::size_t k = 0; k < nr; ++k) ring_empty[k] = ring_empty[k] || table.ring_empty(result.rings[k]);
      per_wl.push_back(replay_grid(table, model, ds.wavelengths_nm[w], result.rings, grid, ext,
                                   absorption, workers));
    }

    const bool any_empty = std::find(ring_empty.begin(), ring_empty.end(), true) != ring_empty.end();
    for (std::size_t g = 0; g < grid.size(); ++g) {
      if (any_empty) {
        ++result.invalid_rows;
        continue;
      }
      std::vector<std::vector<IntensityPair>> pairs(nw, std::vector<IntensityPair>(nr));
      FeatureRow row;
      row.d_m_mm = geo.d_m_mm;
      row.hemo = grid.at(g);
      for (std::size_t w = 0; w < nw; ++w) {
        for (std::size_t k = 0; k < nr; ++k) {
          pairs[w][k] = {per_wl[w].systole[g][k], per_wl[w].diastole[g][k]};
          row.i_systole.push_back(pairs[w][k].trough);
          row.i_diastole.push_back(pairs[w][k].peak);
        }
      }
      auto fv = feature_vector(pairs, options.with_ror, options.smooth ? &ds.sdd_mm : nullptr);
      if (!fv) {
        ++result.invalid_rows;
        continue;
      }
      row.epr = std::move(fv->epr);
      row.ror = std::move(fv->ror);
      ds.rows.push_back(std::move(row));
    }
  }
  if (result.invalid_rows > 0)
    std::cerr << "warning: sweep dropped " << result.invalid_rows << " invalid rows\n";
  return result;
}

}  // namespace tfo
