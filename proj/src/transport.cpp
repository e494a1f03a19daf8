#include "tfo/transport.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include "tfo/errors.hpp"

namespace tfo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kCosZero = 1.0 - 1.0e-12;
constexpr double kNearVertical = 0.99999;

struct LayerSlab {
  double z_top;
  double z_bottom;
  double mu_s;
  double mu_a;
  double g;
  double n;
};

struct Detection {
  std::int32_t ring;
  std::array<double, kNumLayers> pathlength;
  double log_weight;
};

/// Walks single photons through the slab; holds only read-only geometry.
class PhotonWalker {
 public:
  PhotonWalker(const TissueModel& model, double wavelength_nm, std::uint64_t seed)
      : seed_(seed),
        half_width_(model.lateral_half_width_mm),
        cutoff_(model.path_cutoff_mm()),
        source_(model.source),
        rings_(model.rings) {
    const std::size_t w = model.wavelength_index(wavelength_nm);
    for (std::size_t i = 0; i < kNumLayers; ++i) {
      const auto& op = model.layers[i].optics[w];
      slabs_[i] = {model.layer_top(i), model.layer_bottom(i), op.mu_s, op.mu_a, op.g, op.n};
    }
  }

  bool walk(std::uint64_t photon_index, Detection& out) const {
    RngStream rng(seed_, photon_index, rng_domain::kTransport);

    // Specular reflection off the top surface: the photon never enters.
    const double r_spec = fresnel(1.0, slabs_[0].n, 1.0).reflectance;
    if (rng.uniform() < r_spec) return false;

    Vec3 pos{source_.x_mm, source_.y_mm, 0.0};
    Vec3 dir{0.0, 0.0, 1.0};
    std::size_t layer = 0;
    std::array<double, kNumLayers> path{};
    double total = 0.0;
    double log_weight = 0.0;

    for (;;) {
      double tau = -std::log(rng.uniform());
      for (;;) {
        const LayerSlab& s = slabs_[layer];
        const double step = s.mu_s > 0.0 ? tau / s.mu_s : kInf;

        double dz = kInf;
        if (dir.z > 0.0) {
          dz = std::max(0.0, (s.z_bottom - pos.z) / dir.z);
        } else if (dir.z < 0.0) {
          dz = std::max(0.0, (s.z_top - pos.z) / dir.z);
        }
        const double dlat = lateral_distance(pos, dir);

        if (step <= dz && step <= dlat) {
          advance(pos, dir, step);
          path[layer] += step;
          total += step;
          log_weight += s.mu_a * step;
          if (total > cutoff_) return false;
          break;
        }
        if (dlat < dz) return false;  // leaves through a side wall

        advance(pos, dir, dz);
        path[layer] += dz;
        total += dz;
        log_weight += s.mu_a * dz;
        if (total > cutoff_) return false;
        if (s.mu_s > 0.0) tau -= dz * s.mu_s;

        const bool going_down = dir.z > 0.0;
        pos.z = going_down ? s.z_bottom : s.z_top;
        const bool at_top_surface = !going_down && layer == 0;
        const bool at_bottom = going_down && layer + 1 == kNumLayers;
        if (at_bottom) return false;

        const double n_next = at_top_surface ? 1.0 : slabs_[going_down ? layer + 1 : layer - 1].n;
        const FresnelResult fr = fresnel(s.n, n_next, std::abs(dir.z));
        if (rng.uniform() < fr.reflectance) {
          dir.z = -dir.z;
          continue;
        }
        if (at_top_surface) {
          const std::int32_t ring = ring_of(pos);
          if (ring == kNoDetector) return false;
          out = {ring, path, log_weight};
          return true;
        }
        if (s.n != n_next) {
          const double ratio = s.n / n_next;
          dir.x *= ratio;
          dir.y *= ratio;
          dir.z = std::copysign(fr.cos_transmit, dir.z);
        }
        layer = going_down ? layer + 1 : layer - 1;
      }
      const double u1 = rng.uniform();
      const double u2 = rng.uniform();
      dir = sample_scatter_direction(slabs_[layer].g, u1, u2, dir);
    }
  }

 private:
  static void advance(Vec3& pos, const Vec3& dir, double s) {
    pos.x += s * dir.x;
    pos.y += s * dir.y;
    pos.z += s * dir.z;
  }

  double lateral_distance(const Vec3& pos, const Vec3& dir) const {
    double d = kInf;
    if (dir.x > 0.0) d = std::min(d, (half_width_ - pos.x) / dir.x);
    if (dir.x < 0.0) d = std::min(d, (-half_width_ - pos.x) / dir.x);
    if (dir.y > 0.0) d = std::min(d, (half_width_ - pos.y) / dir.y);
    if (dir.y < 0.0) d = std::min(d, (-half_width_ - pos.y) / dir.y);
    return std::max(0.0, d);
  }

  std::int32_t ring_of(const Vec3& pos) const {
    const double r = std::hypot(pos.x - source_.x_mm, pos.y - source_.y_mm);
    // Rings are sorted and disjoint.
    auto it = std::lower_bound(rings_.begin(), rings_.end(), r, [](const DetectorRing& ring, double v) {
      return ring.sdd_mm + ring.half_width_mm < v;
    });
    if (it == rings_.end() || r < it->sdd_mm - it->half_width_mm) return kNoDetector;
    return static_cast<std::int32_t>(it - rings_.begin());
  }

  std::uint64_t seed_;
  double half_width_;
  double cutoff_;
  PencilBeam source_;
  std::vector<DetectorRing> rings_;
  std::array<LayerSlab, kNumLayers> slabs_{};
};

struct WorkerOutput {
  std::vector<PhotonRecord> rows;
  std::vector<double> log_weights;
};

}  // namespace

double sample_free_path(double mu_s, double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("free-path sample requires u in (0, 1)");
  if (mu_s < 0.0) throw DomainError("mu_s must be >= 0");
  if (mu_s == 0.0) return kInf;
  return -std::log(u) / mu_s;
}

double sample_hg_cosine(double g, double u) {
  if (g == 0.0) return 2.0 * u - 1.0;
  const double t = (1.0 - g * g) / (1.0 - g + 2.0 * g * u);
  const double c = (1.0 + g * g - t * t) / (2.0 * g);
  return std::clamp(c, -1.0, 1.0);
}

Vec3 sample_scatter_direction(double g, double u1, double u2, const Vec3& in) {
  const double cos_t = sample_hg_cosine(g, u1);
  const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
  const double phi = 2.0 * std::numbers::pi * u2;
  const double cos_p = std::cos(phi);
  const double sin_p = std::sin(phi);

  Vec3 out;
  if (std::abs(in.z) > kNearVertical) {
    out = {sin_t * cos_p, sin_t * sin_p, in.z >= 0.0 ? cos_t : -cos_t};
  } else {
    const double tmp = std::sqrt(1.0 - in.z * in.z);
    out.x = sin_t * (in.x * in.z * cos_p - in.y * sin_p) / tmp + in.x * cos_t;
    out.y = sin_t * (in.y * in.z * cos_p + in.x * sin_p) / tmp + in.y * cos_t;
    out.z = -sin_t * cos_p * tmp + in.z * cos_t;
  }
  const double norm = std::sqrt(out.x * out.x + out.y * out.y + out.z * out.z);
  return {out.x / norm, out.y / norm, out.z / norm};
}

FresnelResult fresnel(double n1, double n2, double cos_in) {
  if (n1 == n2) return {0.0, cos_in};
  if (cos_in > kCosZero) {
    const double r = (n2 - n1) / (n2 + n1);
    return {r * r, cos_in};
  }
  if (cos_in < 1.0e-6) return {1.0, 0.0};
  const double sin_in = std::sqrt(1.0 - cos_in * cos_in);
  const double sin_t = n1 * sin_in / n2;
  if (sin_t >= 1.0) return {1.0, 0.0};
  const double cos_t = std::sqrt(1.0 - sin_t * sin_t);

  // sin/cos of (a1 + a2) and (a1 - a2)
  const double cap = cos_in * cos_t - sin_in * sin_t;
  const double cam = cos_in * cos_t + sin_in * sin_t;
  const double sap = sin_in * cos_t + cos_in * sin_t;
  const double sam = sin_in * cos_t - cos_in * sin_t;
  const double r = 0.5 * sam * sam * (cam * cam + cap * cap) / (sap * sap * cam * cam);
  return {r, cos_t};
}

PathlengthTable simulate(const TissueModel& model, double wavelength_nm, std::uint64_t n_photons,
                         std::uint64_t seed, const SimulateOptions& options) {
  model.validate();
  if (n_photons == 0) throw DomainError("n_photons must be >= 1");
  const PhotonWalker walker(model, wavelength_nm, seed);

  unsigned workers = options.workers;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, n_photons));

  std::vector<WorkerOutput> outputs(workers);
  auto run = [&](unsigned w) {
    const std::uint64_t begin = n_photons * w / workers;
    const std::uint64_t end = n_photons * (w + 1) / workers;
    auto& out = outputs[w];
    Detection det{};
    for (std::uint64_t i = begin; i < end; ++i) {
      if (walker.walk(i, det)) {
        out.rows.push_back({i, det.ring, det.pathlength});
        out.log_weights.push_back(det.log_weight);
      }
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }

  PathlengthTable table;
  table.meta.model_hash = model.hash();
  table.meta.wavelength_nm = wavelength_nm;
  table.meta.n_launched = n_photons;
  table.meta.seed = seed;
  table.meta.d_m_mm = model.d_m();
  const std::size_t wi = model.wavelength_index(wavelength_nm);
  for (std::size_t i = 0; i < kNumLayers; ++i) table.meta.generating_mu_a[i] = model.layers[i].optics[wi].mu_a;
  table.meta.rings = model.rings;

  std::size_t total_rows = 0;
  for (const auto& o : outputs) total_rows += o.rows.size();
  table.rows.reserve(total_rows);
  table.ring_counts.assign(model.rings.size(), 0);
  table.direct_tally.assign(model.rings.size(), 0.0);
  // Worker blocks are contiguous and ordered, so concatenation keeps photon-index order.
  for (auto& o : outputs) {
    for (std::size_t k = 0; k < o.rows.size(); ++k) {
      const auto& row = o.rows[k];
      table.ring_counts[row.detector_id] += 1;
      table.direct_tally[row.detector_id] += std::exp(-o.log_weights[k]);
      table.rows.push_back(row);
    }
    o = {};
  }
  const double inv = 1.0 / static_cast<double>(n_photons);
  for (double& t : table.direct_tally) t *= inv;
  return table;
}

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

DistributionSummary summarize(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  DistributionSummary s;
  s.min = v.front();
  s.q1 = quantile_sorted(v, 0.25);
  s.median = quantile_sorted(v, 0.5);
  s.q3 = quantile_sorted(v, 0.75);
  s.max = v.back();
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  return s;
}

}  // namespace

PathlengthStats pathlength_stats(const PathlengthTable& table, std::size_t ring) {
  if (ring >= table.n_rings()) throw DomainError("ring index out of range");
  std::vector<double> totals;
  std::vector<double> fetal;
  for (const auto& row : table.rows) {
    if (row.detector_id != static_cast<std::int32_t>(ring)) continue;
    totals.push_back(row.total());
    fetal.push_back(row.pathlength[3]);
  }
  if (totals.empty()) throw DataError("ring " + std::to_string(ring) + " detected no photons");
  PathlengthStats stats;
  stats.n = totals.size();
  stats.total = summarize(std::move(totals));
  stats.fetal = summarize(std::move(fetal));
  return stats;
}

std::size_t nearest_ring(const std::vector<DetectorRing>& rings, double sdd_mm) {
  if (rings.empty()) throw ConfigError("no rings to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rings.size(); ++i) {
    if (std::abs(rings[i].sdd_mm - sdd_mm) < std::abs(rings[best].sdd_mm - sdd_mm)) best = i;
  }
  return best;
}

}  // namespace tfo
