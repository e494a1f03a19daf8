#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace tfo {

inline constexpr std::size_t kNumLayers = 4;

enum class LayerKind { MaternalWall = 0, Uterus = 1, AmnioticFluid = 2, FetalTissue = 3 };

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

/// Optical properties of one layer at one wavelength. Lengths in mm.
struct OpticalProps {
  double mu_a = 0.0;  // mm^-1
  double mu_s = 0.0;  // mm^-1
  double g = 0.0;
  double n = 1.4;
};

struct LayerSpec {
  LayerKind kind = LayerKind::MaternalWall;
  /// mm; +infinity marks a semi-infinite layer that extends to the volume bottom.
  double thickness_mm = 1.0;
  /// One entry per configured wavelength, in the order of TissueModel::wavelengths_nm.
  std::vector<OpticalProps> optics;

  bool semi_infinite() const { return thickness_mm == std::numeric_limits<double>::infinity(); }
};

/// Hemoglobin concentrations in g/L, saturations as fractions.
struct Hemodynamics {
  double hb_m = 120.0;
  double s_m = 0.98;
  double hb_f = 110.0;
  double s_f = 0.5;

  void validate() const;
};

/// Per-wavelength extinction coefficients, stored pre-converted so that
/// hb [g/L] * eps gives an absorption coefficient in mm^-1.
class ExtinctionTable {
 public:
  struct Entry {
    double wavelength_nm;
    double eps_hbo;
    double eps_hhb;
  };

  void add(double wavelength_nm, double eps_hbo, double eps_hhb);

  /// Converts decadic molar coefficients (cm^-1 / (mol/L), as tabulated by Prahl)
  /// for hemoglobin (64500 g/mol) to the mm^-1 per g/L convention used here.
  void add_molar_decadic(double wavelength_nm, double eps_hbo_molar, double eps_hhb_molar);

  const Entry& lookup(double wavelength_nm) const;
  bool contains(double wavelength_nm) const;
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

struct DetectorRing {
  double sdd_mm;
  double half_width_mm;
};

/// Pencil beam entering the top surface, pointing straight down (+z).
struct PencilBeam {
  double x_mm = 0.0;
  double y_mm = 0.0;
};

/// Flat four-layer slab. z grows downward from the top surface at z = 0; the volume is
/// the box |x|,|y| <= lateral_half_width_mm, 0 <= z <= volume_depth_mm.
struct TissueModel {
  std::vector<LayerSpec> layers;
  std::vector<double> wavelengths_nm;
  PencilBeam source;
  std::vector<DetectorRing> rings;
  double lateral_half_width_mm = 100.0;
  double volume_depth_mm = 40.0;
  /// Photons whose total path exceeds cutoff_factor * volume_depth_mm are discarded.
  double cutoff_factor = 30.0;

  /// Maternal abdominal wall thickness (thickness of layer 1).
  double d_m() const { return layers.at(0).thickness_mm; }
  /// Depth of the fetal layer's top surface.
  double fetal_depth() const;
  double layer_top(std::size_t i) const;
  double layer_bottom(std::size_t i) const;
  double path_cutoff_mm() const { return cutoff_factor * volume_depth_mm; }

  std::size_t wavelength_index(double wavelength_nm) const;
  const OpticalProps& optics(std::size_t layer, double wavelength_nm) const;

  /// Copy of this model with a different maternal wall thickness.
  TissueModel with_maternal_thickness(double d_m_mm) const;

  /// Rejects malformed geometry; throws ConfigError.
  void validate() const;

  /// Stable 64-bit hash of geometry and optical properties.
  std::uint64_t hash() const;
};

using AbsorptionVector = std::array<double, kNumLayers>;

/// Blood and pulsation assumptions behind the pulsatile-layer absorption model.
struct AbsorptionModel {
  /// Volume fraction of arterial blood, and separately of venous blood.
  double blood_fraction_each = 0.05;
  /// Venous saturation as a multiple of arterial saturation.
  double venous_saturation_factor = 0.75;
  /// Fractional drop in fetal hemoglobin concentration from systole to diastole.
  double pulsation_delta = 0.025;
};

/// hb * (sat * eps_HbO + (1 - sat) * eps_HHb), mm^-1.
double blood_mu_a(double hb, double sat, const ExtinctionTable& ext, double wavelength_nm);

/// Non-blood background absorption 7.84e7 * lambda^-3.255, treated as cm^-1 and
/// returned in mm^-1.
double baseline_mu_a(double wavelength_nm);

/// Absorption of a pulsatile layer (maternal wall or fetal tissue): blood-weighted
/// arterial + venous terms plus the non-blood baseline.
double pulsatile_tissue_mu_a(const Hemodynamics& hemo, LayerKind layer, double wavelength_nm,
                             const ExtinctionTable& ext, const AbsorptionModel& model = {});

struct PulsationPair {
  AbsorptionVector systole;
  AbsorptionVector diastole;
};

/// Per-layer absorption at fetal systole (full hb_f) and diastole (hb_f reduced by the
/// pulsation delta). Uterus and amniotic fluid keep their configured static mu_a.
PulsationPair systole_diastole_pair(const TissueModel& model, const Hemodynamics& hemo,
                                    double wavelength_nm, const ExtinctionTable& ext,
                                    const AbsorptionModel& absorption = {});

/// Default four-layer model with literature-magnitude placeholder optics at 735/850 nm.
TissueModel default_tissue_model();

/// Prahl's hemoglobin coefficients at 735 and 850 nm, converted.
ExtinctionTable default_extinction_table();

}  // namespace tfo
