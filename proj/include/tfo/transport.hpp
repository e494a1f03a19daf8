#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "tfo/rng.hpp"
#include "tfo/tissue.hpp"

namespace tfo {

inline constexpr std::int32_t kNoDetector = -1;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// One detected photon: ring index and geometric pathlength spent in each layer (mm).
struct PhotonRecord {
  std::uint64_t photon_index = 0;
  std::int32_t detector_id = kNoDetector;
  std::array<double, kNumLayers> pathlength{};

  double total() const { return pathlength[0] + pathlength[1] + pathlength[2] + pathlength[3]; }
  bool fetal_sensitive() const { return pathlength[3] > 0.0; }
};

struct TableMetadata {
  std::uint64_t model_hash = 0;
  double wavelength_nm = 0.0;
  std::uint64_t n_launched = 0;
  std::uint64_t seed = 0;
  double d_m_mm = 0.0;
  /// Layer absorption the model carried when the table was generated.
  AbsorptionVector generating_mu_a{};
  std::vector<DetectorRing> rings;
};

/// Detected photons of one simulation run, sorted by photon index. Absorption-free:
/// intensities for any absorption vector are recovered by replay.
struct PathlengthTable {
  TableMetadata meta;
  std::vector<PhotonRecord> rows;
  std::vector<std::uint64_t> ring_counts;
  /// Per-ring intensity accumulated along each walk with the generating absorption,
  /// normalised by n_launched.
  std::vector<double> direct_tally;

  std::size_t n_rings() const { return meta.rings.size(); }
  bool ring_empty(std::size_t ring) const { return ring_counts.at(ring) == 0; }
};

/// Free path for scattering coefficient mu_s given u in (0,1): -ln(u)/mu_s.
/// mu_s == 0 yields +infinity (the photon flies ballistically to the next boundary).
double sample_free_path(double mu_s, double u);

/// Henyey-Greenstein deflection cosine for anisotropy g.
double sample_hg_cosine(double g, double u);

/// New propagation direction after a Henyey-Greenstein scatter; u1 drives the
/// deflection cosine and u2 the azimuth. Output is renormalised to unit length.
Vec3 sample_scatter_direction(double g, double u1, double u2, const Vec3& incoming);

struct FresnelResult {
  double reflectance;
  /// Cosine of the transmission angle (0 under total internal reflection).
  double cos_transmit;
};

/// Unpolarised Fresnel reflectance going from index n1 to n2 at incidence cosine cos_in >= 0.
FresnelResult fresnel(double n1, double n2, double cos_in);

struct SimulateOptions {
  /// 0 selects std::thread::hardware_concurrency().
  unsigned workers = 0;
};

/// Monte Carlo random walk of n_photons pencil-beam photons through the slab.
///
/// Free paths are sampled from mu_s only; absorption never terminates a photon and is
/// applied later by replay. Random numbers for photon i come from
/// RngStream(seed, i, rng_domain::kTransport) and are consumed in this order:
///   1. one draw for specular reflection at entry,
///   2. per flight: one draw for the optical depth to the next scatter,
///      one draw at every z-interface hit (reflect when u < R),
///   3. per scatter: two draws (deflection cosine, azimuth).
/// The output is a pure function of (model, wavelength, n_photons, seed).
PathlengthTable simulate(const TissueModel& model, double wavelength_nm, std::uint64_t n_photons,
                         std::uint64_t seed, const SimulateOptions& options = {});

struct DistributionSummary {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

struct PathlengthStats {
  std::size_t n = 0;
  DistributionSummary total;
  DistributionSummary fetal;
};

/// Quartile boundaries (linear-interpolated quantiles) and mean of the total and fetal
/// partial pathlength over the photons detected at one ring.
PathlengthStats pathlength_stats(const PathlengthTable& table, std::size_t ring);

/// Index of the ring whose SDD is closest to sdd_mm.
std::size_t nearest_ring(const std::vector<DetectorRing>& rings, double sdd_mm);

}  // namespace tfo
