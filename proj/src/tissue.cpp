#include "tfo/tissue.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "tfo/errors.hpp"
#include "tfo/hash.hpp"

namespace tfo {

namespace {

constexpr double kWavelengthTol = 1e-6;
constexpr double kHemoglobinMolarMass = 64500.0;  // g/mol

bool same_wavelength(double a, double b) { return std::abs(a - b) < kWavelengthTol; }

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::MaternalWall:
      return "MaternalWall";
    case LayerKind::Uterus:
      return "Uterus";
    case LayerKind::AmnioticFluid:
      return "AmnioticFluid";
    case LayerKind::FetalTissue:
      return "FetalTissue";
  }
  return "?";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (auto kind : {LayerKind::MaternalWall, LayerKind::Uterus, LayerKind::AmnioticFluid,
                    LayerKind::FetalTissue}) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown layer name '" + std::string(name) + "'");
}

void Hemodynamics::validate() const {
  if (!(hb_m > 0.0) || !(hb_f > 0.0)) throw DomainError("hemoglobin concentrations must be > 0");
  if (!(s_m >= 0.0 && s_m <= 1.0) || !(s_f >= 0.0 && s_f <= 1.0))
    throw DomainError("saturations must lie in [0, 1]");
}

void ExtinctionTable::add(double wavelength_nm, double eps_hbo, double eps_hhb) {
  if (!(eps_hbo > 0.0) || !(eps_hhb > 0.0))
    throw ConfigError("extinction coefficients must be strictly positive");
  for (auto& e : entries_) {
    if (same_wavelength(e.wavelength_nm, wavelength_nm)) {
      e = {wavelength_nm, eps_hbo, eps_hhb};
      return;
    }
  }
  entries_.push_back({wavelength_nm, eps_hbo, eps_hhb});
}

void ExtinctionTable::add_molar_decadic(double wavelength_nm, double eps_hbo_molar,
                                        double eps_hhb_molar) {
  // cm^-1 = ln(10) * eps * c[g/L] / M ; mm^-1 = cm^-1 / 10
  const double k = std::numbers::ln10 / kHemoglobinMolarMass / 10.0;
  add(wavelength_nm, eps_hbo_molar * k, eps_hhb_molar * k);
}

const ExtinctionTable::Entry& ExtinctionTable::lookup(double wavelength_nm) const {
  for (const auto& e : entries_) {
    if (same_wavelength(e.wavelength_nm, wavelength_nm)) return e;
  }
  std::ostringstream os;
  os << "no extinction coefficients for wavelength " << wavelength_nm << " nm";
  throw ConfigError(os.str());
}

bool ExtinctionTable::contains(double wavelength_nm) const {
  for (const auto& e : entries_) {
    if (same_wavelength(e.wavelength_nm, wavelength_nm)) return true;
  }
  return false;
}

double TissueModel::layer_top(std::size_t i) const {
  double z = 0.0;
  for (std::size_t k = 0; k < i; ++k) z += layers.at(k).thickness_mm;
  return z;
}

double TissueModel::layer_bottom(std::size_t i) const {
  if (i + 1 == layers.size()) return volume_depth_mm;
  return std::min(layer_top(i) + layers.at(i).thickness_mm, volume_depth_mm);
}

double TissueModel::fetal_depth() const { return layer_top(kNumLayers - 1); }

std::size_t TissueModel::wavelength_index(double wavelength_nm) const {
  for (std::size_t i = 0; i < wavelengths_nm.size(); ++i) {
    if (same_wavelength(wavelengths_nm[i], wavelength_nm)) return i;
  }
  std::ostringstream os;
  os << "wavelength " << wavelength_nm << " nm is not configured in the tissue model";
  throw ConfigError(os.str());
}

const OpticalProps& TissueModel::optics(std::size_t layer, double wavelength_nm) const {
  return layers.at(layer).optics.at(wavelength_index(wavelength_nm));
}

TissueModel TissueModel::with_maternal_thickness(double d_m_mm) const {
  TissueModel copy = *this;
  copy.layers.at(0).thickness_mm = d_m_mm;
  return copy;
}

void TissueModel::validate() const {
  if (layers.size() != kNumLayers) throw ConfigError("tissue model must have exactly 4 layers");
  const LayerKind expected[kNumLayers] = {LayerKind::MaternalWall, LayerKind::Uterus,
                                          LayerKind::AmnioticFluid, LayerKind::FetalTissue};
  if (wavelengths_nm.empty()) throw ConfigError("no wavelengths configured");
  for (std::size_t i = 0; i < wavelengths_nm.size(); ++i) {
    if (!(wavelengths_nm[i] > 0.0)) throw ConfigError("wavelengths must be positive");
    for (std::size_t j = 0; j < i; ++j) {
      if (same_wavelength(wavelengths_nm[i], wavelengths_nm[j]))
        throw ConfigError("duplicate wavelength");
    }
  }
  for (std::size_t i = 0; i < kNumLayers; ++i) {
    const auto& layer = layers[i];
    if (layer.kind != expected[i])
      throw ConfigError("layers must be ordered MaternalWall, Uterus, AmnioticFluid, FetalTissue");
    if (!(layer.thickness_mm > 0.0)) throw ConfigError("layer thickness must be > 0");
    if (layer.semi_infinite() && i + 1 != kNumLayers)
      throw ConfigError("only the fetal layer may be semi-infinite");
    if (layer.optics.size() != wavelengths_nm.size())
      throw ConfigError("each layer needs exactly one optics entry per wavelength");
    for (const auto& op : layer.optics) {
      if (!(op.mu_a >= 0.0) || !(op.mu_s >= 0.0))
        throw ConfigError("mu_a and mu_s must be >= 0");
      if (!(op.g > -1.0 && op.g < 1.0)) throw ConfigError("anisotropy g must lie in (-1, 1)");
      if (!(op.n >= 1.0)) throw ConfigError("refractive index must be >= 1");
    }
  }
  if (!(volume_depth_mm > fetal_depth()))
    throw ConfigError("volume depth must exceed the fetal layer's top depth");
  if (!(lateral_half_width_mm > 0.0)) throw ConfigError("lateral half width must be > 0");
  if (!(cutoff_factor > 0.0)) throw ConfigError("path cutoff factor must be > 0");
  if (rings.empty()) throw ConfigError("no detector rings configured");
  for (std::size_t i = 0; i < rings.size(); ++i) {
    const auto& r = rings[i];
    if (!(r.half_width_mm > 0.0)) throw ConfigError("ring half width must be > 0");
    if (!(r.sdd_mm - r.half_width_mm >= 0.0)) throw ConfigError("ring inner radius must be >= 0");
    if (i > 0) {
      const auto& prev = rings[i - 1];
      if (!(r.sdd_mm > prev.sdd_mm)) throw ConfigError("ring SDDs must be strictly increasing");
      if (!(r.sdd_mm - r.half_width_mm >= prev.sdd_mm + prev.half_width_mm))
        throw ConfigError("detector annuli must not overlap");
    }
  }
  const double reach = rings.back().sdd_mm + rings.back().half_width_mm +
                       std::max(std::abs(source.x_mm), std::abs(source.y_mm));
  if (!(reach <= lateral_half_width_mm))
    throw ConfigError("outermost detector ring exceeds the lateral volume bounds");
}

std::uint64_t TissueModel::hash() const {
  Fnv1a h;
  h.str("tfo.tissue.v1");
  h.u64(wavelengths_nm.size());
  for (double w : wavelengths_nm) h.f64(w);
  h.u64(layers.size());
  for (const auto& layer : layers) {
    h.u64(static_cast<std::uint64_t>(layer.kind));
    h.f64(layer.thickness_mm);
    for (const auto& op : layer.optics) h.f64(op.mu_a).f64(op.mu_s).f64(op.g).f64(op.n);
  }
  h.f64(source.x_mm).f64(source.y_mm);
  h.u64(rings.size());
  for (const auto& r : rings) h.f64(r.sdd_mm).f64(r.half_width_mm);
  h.f64(lateral_half_width_mm).f64(volume_depth_mm).f64(cutoff_factor);
  return h.value();
}

double blood_mu_a(double hb, double sat, const ExtinctionTable& ext, double wavelength_nm) {
  if (!(hb >= 0.0)) throw DomainError("hemoglobin concentration must be >= 0");
  if (!(sat >= 0.0 && sat <= 1.0)) throw DomainError("saturation must lie in [0, 1]");
  const auto& e = ext.lookup(wavelength_nm);
  return hb * (sat * e.eps_hbo + (1.0 - sat) * e.eps_hhb);
}

double baseline_mu_a(double wavelength_nm) {
  if (!(wavelength_nm > 0.0)) throw DomainError("wavelength must be positive");
  const double per_cm = 7.84e7 * std::pow(wavelength_nm, -3.255);
  return 0.1 * per_cm;
}

double pulsatile_tissue_mu_a(const Hemodynamics& hemo, LayerKind layer, double wavelength_nm,
                             const ExtinctionTable& ext, const AbsorptionModel& model) {
  double hb = 0.0;
  double sat = 0.0;
  switch (layer) {
    case LayerKind::MaternalWall:
      hb = hemo.hb_m;
      sat = hemo.s_m;
      break;
    case LayerKind::FetalTissue:
      hb = hemo.hb_f;
      sat = hemo.s_f;
      break;
    default:
      throw UsageError("layer " + std::string(to_string(layer)) + " does not pulsate");
  }
  const double venous_sat = std::min(1.0, model.venous_saturation_factor * sat);
  const double arterial = blood_mu_a(hb, sat, ext, wavelength_nm);
  const double venous = blood_mu_a(hb, venous_sat, ext, wavelength_nm);
  return model.blood_fraction_each * (arterial + venous) + baseline_mu_a(wavelength_nm);
}

PulsationPair systole_diastole_pair(const TissueModel& model, const Hemodynamics& hemo,
                                    double wavelength_nm, const ExtinctionTable& ext,
                                    const AbsorptionModel& absorption) {
  hemo.validate();
  const std::size_t w = model.wavelength_index(wavelength_nm);
  AbsorptionVector systole{};
  for (std::size_t i = 0; i < kNumLayers; ++i) systole[i] = model.layers.at(i).optics.at(w).mu_a;
  systole[0] = pulsatile_tissue_mu_a(hemo, LayerKind::MaternalWall, wavelength_nm, ext, absorption);
  systole[3] = pulsatile_tissue_mu_a(hemo, LayerKind::FetalTissue, wavelength_nm, ext, absorption);

  AbsorptionVector diastole = systole;
  Hemodynamics relaxed = hemo;
  relaxed.hb_f = hemo.hb_f * (1.0 - absorption.pulsation_delta);
  diastole[3] = pulsatile_tissue_mu_a(relaxed, LayerKind::FetalTissue, wavelength_nm, ext, absorption);
  return {systole, diastole};
}

ExtinctionTable default_extinction_table() {
  ExtinctionTable t;
  // Prahl's compilation; 735 nm linearly interpolated from the 730/740 nm entries.
  t.add_molar_decadic(735.0, 418.0, 1109.04);
  t.add_molar_decadic(850.0, 1058.0, 691.32);
  return t;
}

TissueModel default_tissue_model() {
  TissueModel m;
  m.wavelengths_nm = {735.0, 850.0};
  const auto ext = default_extinction_table();
  const Hemodynamics nominal{};

  auto pulsatile = [&](LayerKind kind, double wl) {
    return pulsatile_tissue_mu_a(nominal, kind, wl, ext);
  };

  m.layers = {
      {LayerKind::MaternalWall,
       8.0,
       {{pulsatile(LayerKind::MaternalWall, 735.0), 1.0, 0.0, 1.4},
        {pulsatile(LayerKind::MaternalWall, 850.0), 0.88, 0.0, 1.4}}},
      {LayerKind::Uterus, 4.0, {{0.025, 0.9, 0.0, 1.4}, {0.020, 0.8, 0.0, 1.4}}},
      {LayerKind::AmnioticFluid, 2.0, {{0.0028, 0.05, 0.0, 1.33}, {0.0043, 0.045, 0.0, 1.33}}},
      {LayerKind::FetalTissue,
       std::numeric_limits<double>::infinity(),
       {{pulsatile(LayerKind::FetalTissue, 735.0), 1.1, 0.0, 1.4},
        {pulsatile(LayerKind::FetalTissue, 850.0), 0.96, 0.0, 1.4}}},
  };

  // 20 rings from 10 mm to 95 mm, evenly spaced.
  for (int i = 0; i < 20; ++i) m.rings.push_back({10.0 + 85.0 * i / 19.0, 1.0});
  return m;
}

}  // namespace tfo
