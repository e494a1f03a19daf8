#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "tfo/config.hpp"
#include "tfo/evaluation.hpp"
#include "tfo/features.hpp"
#include "tfo/mlp.hpp"
#include "tfo/noise.hpp"
#include "tfo/pipeline.hpp"
#include "tfo/ppg.hpp"
#include "tfo/replay.hpp"
#include "tfo/report.hpp"
#include "tfo/rng.hpp"
#include "tfo/sweep.hpp"
#include "tfo/table_io.hpp"
#include "tfo/transport.hpp"

using namespace tfo;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSmallTablePhotons = 1000000;
constexpr std::uint64_t kLargeTablePhotons = 10000000;
const std::vector<double> kDepths{4.0, 8.0, 12.0};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Config acceptance_config() {
  return parse_config(R"({"format_version": 1,
    "geometry": {"d_m_mm": [4.0, 8.0, 12.0]},
    "simulation": {"photons": 10000000, "seed": 21}})");
}

/// Simulates a table or reuses one from an earlier run when its metadata matches.
PathlengthTable cached_table(const fs::path& dir, const TissueModel& model, double wl, std::uint64_t photons,
                             std::uint64_t seed) {
  fs::create_directories(dir);
  const fs::path p = dir / (std::to_string(photons) + "_" + table_file_name(model.d_m(), wl));
  if (fs::exists(p)) {
    PathlengthTable t = read_table(p.string());
    if (t.meta.model_hash == model.hash() && t.meta.n_launched == photons && t.meta.seed == seed &&
        t.meta.wavelength_nm == wl)
      return t;
  }
  const auto t0 = std::chrono::steady_clock::now();
  PathlengthTable t = simulate(model, wl, photons, seed);
  std::cerr << "  simulated " << p.filename().string() << " in " << fmt("%.0f", seconds_since(t0)) << " s\n";
  write_table(p.string(), t);
  return t;
}

struct Tables {
  Config cfg;
  std::vector<std::vector<PathlengthTable>> by_depth;

  std::vector<GeometryTables> geometries() const {
    std::vector<GeometryTables> out;
    for (std::size_t d = 0; d < by_depth.size(); ++d) {
      GeometryTables g{kDepths[d], {}};
      for (const auto& t : by_depth[d]) g.by_wavelength.push_back(&t);
      out.push_back(g);
    }
    return out;
  }
};

Tables& large_tables(const fs::path& workdir) {
  static Tables tables;
  if (!tables.by_depth.empty()) return tables;
  tables.cfg = acceptance_config();
  for (std::size_t d = 0; d < kDepths.size(); ++d) {
    const TissueModel m = tables.cfg.model.with_maternal_thickness(kDepths[d]);
    std::vector<PathlengthTable> per_wl;
    for (std::size_t w = 0; w < m.wavelengths_nm.size(); ++w)
      per_wl.push_back(cached_table(workdir / "tables", m, m.wavelengths_nm[w], kLargeTablePhotons,
                                    tables.cfg.simulation.seed + 10 * d + w));
    tables.by_depth.push_back(std::move(per_wl));
  }
  return tables;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::map<std::string, double> mean_mae(const TrainingOutput& out) {
  std::map<std::string, double> sum;
  std::map<std::string, int> n;
  for (const auto& m : out.metrics) {
    sum[m.feature] += m.metrics.mae;
    ++n[m.feature];
  }
  for (auto& [k, v] : sum) v /= n[k];
  return sum;
}

// 1
Outcome replay_correctness(const fs::path& workdir) {
  const Config cfg = acceptance_config();
  const TissueModel model = cfg.model.with_maternal_thickness(4.0);
  const PathlengthTable t = cached_table(workdir / "tables", model, 735.0, kSmallTablePhotons, 5);
  const auto replayed = replay_intensity(t, t.meta.generating_mu_a);
  double worst = 0.0;
  std::size_t used = 0;
  for (std::size_t r = 0; r < t.n_rings(); ++r) {
    if (t.ring_empty(r)) continue;
    ++used;
    worst = std::max(worst, std::abs(replayed[r] - t.direct_tally[r]) / t.direct_tally[r]);
  }

  PathlengthTable sub = t;
  sub.rows.resize(std::min<std::size_t>(100, t.rows.size()));
  sub.ring_counts.assign(t.n_rings(), 0);
  for (const auto& row : sub.rows) ++sub.ring_counts[row.detector_id];
  RngStream rng(17, 0, 123);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 20; ++trial) {
    AbsorptionVector mu{};
    for (double& m : mu) m = trial == 0 ? 0.0 : 0.05 * rng.uniform();
    if (trial == 1) mu = t.meta.generating_mu_a;
    std::vector<double> naive(t.n_rings(), 0.0);
    for (const auto& row : sub.rows) {
      double s = 0.0;
      for (std::size_t j = 0; j < kNumLayers; ++j) s += mu[j] * row.pathlength[j];
      naive[row.detector_id] += std::exp(-s);
    }
    for (double& v : naive) v *= 1.0 / static_cast<double>(t.meta.n_launched);
    const auto got = replay_intensity(sub, mu);
    for (std::size_t r = 0; r < naive.size(); ++r) mismatches += got[r] != naive[r];
  }
  const bool pass = used > 0 && worst <= 1e-12 && mismatches == 0 && sub.rows.size() == 100;
  return {pass, "max rel diff vs in-walk tally " + fmt("%.2e", worst) + " over " + std::to_string(used) +
                    " rings; 100-row naive mismatches " + std::to_string(mismatches)};
}

// 2
Outcome beer_lambert_structure() {
  std::size_t monotone_viol = 0, convex_viol = 0, checks = 0;
  RngStream rng(31, 0, 124);
  for (int ray = 0; ray < 1000; ++ray) {
    const auto t = fixtures::random_table(200, 4, 1000 + ray);
    AbsorptionVector a{}, d{};
    for (std::size_t j = 0; j < kNumLayers; ++j) {
      a[j] = 0.05 * rng.uniform();
      d[j] = 0.05 * (rng.uniform() - 0.5);
    }
    auto at = [&](double s) {
      AbsorptionVector m{};
      for (std::size_t j = 0; j < kNumLayers; ++j) m[j] = std::max(0.0, a[j] + s * d[j]);
      return m;
    };
    // keep the whole ray in the non-negative orthant
    double s_max = 1.0;
    for (std::size_t j = 0; j < kNumLayers; ++j)
      if (d[j] < 0.0) s_max = std::min(s_max, a[j] / -d[j]);
    const auto i0 = replay_intensity(t, at(0.0));
    const auto i1 = replay_intensity(t, at(s_max));
    const auto im = replay_intensity(t, at(0.5 * s_max));
    for (std::size_t r = 0; r < t.n_rings(); ++r) {
      if (t.ring_empty(r)) continue;
      ++checks;
      if (std::log(im[r]) > 0.5 * (std::log(i0[r]) + std::log(i1[r])) + 1e-12) ++convex_viol;
    }
    const auto base = replay_intensity(t, a);
    for (std::size_t j = 0; j < kNumLayers; ++j) {
      AbsorptionVector up = a;
      up[j] += 0.01 + 0.05 * rng.uniform();
      const auto bumped = replay_intensity(t, up);
      for (std::size_t r = 0; r < t.n_rings(); ++r) {
        bool has_path = false;
        for (const auto& row : t.rows) has_path |= row.detector_id == static_cast<int>(r) && row.pathlength[j] > 0.0;
        if (has_path ? !(bumped[r] < base[r]) : bumped[r] != base[r]) ++monotone_viol;
      }
    }
  }
  return {monotone_viol == 0 && convex_viol == 0,
          std::to_string(checks) + " midpoint checks on 1000 rays: " + std::to_string(convex_viol) +
              " log-convexity and " + std::to_string(monotone_viol) + " monotonicity violations"};
}

// 3
Outcome sensitivity_saturation(const fs::path& workdir) {
  const Tables& tabs = large_tables(workdir);
  const PathlengthTable& t = tabs.by_depth.front().front();
  const TissueModel model = tabs.cfg.model.with_maternal_thickness(kDepths.front());
  const auto pair = systole_diastole_pair(model, tabs.cfg.ppg.nominal, t.meta.wavelength_nm, tabs.cfg.extinction,
                                          tabs.cfg.absorption);
  const auto prof = intensity_profile(t, pair.systole);
  std::vector<double> sdd, sens;
  for (std::size_t r = 0; r < t.n_rings(); ++r) {
    if (!std::isfinite(prof.sensitivity[r])) continue;
    sdd.push_back(t.meta.rings[r].sdd_mm);
    sens.push_back(prof.sensitivity[r]);
  }
  std::size_t last = t.n_rings();
  while (last > 0 && t.ring_empty(last - 1)) --last;
  const double rho = sdd.size() >= 3 ? spearman(sdd, sens) : 0.0;
  const double share = last ? prof.fetal_sensitive[last - 1] / prof.total[last - 1] : 0.0;
  std::size_t insensitive = 0;
  for (const auto& row : t.rows)
    if (last && row.detector_id == static_cast<int>(last - 1) && !row.fetal_sensitive()) ++insensitive;
  std::ostringstream s;
  s << "d_m " << kDepths.front() << " mm, " << kLargeTablePhotons << " photons: spearman rho " << fmt("%.3f", rho)
    << " over " << sdd.size() << " rings (sensitivity " << fmt("%.3f", sens.front()) << " -> "
    << fmt("%.3f", sens.back()) << "); fetal-sensitive share at " << t.meta.rings[last - 1].sdd_mm << " mm "
    << fmt("%.4f", share) << " (" << insensitive << " of " << t.ring_counts[last - 1]
    << " detected photons there miss the fetal layer)";
  return {rho >= 0.95 && share >= 0.99 && last == t.n_rings(), s.str()};
}

// 4
Outcome epr_sign(const fs::path& workdir) {
  const Tables& tabs = large_tables(workdir);
  HemoGrid grid{{110.0, 130.0}, {0.9, 1.0}, {110.0, 170.0}, {0.1, 0.45, 0.8}};
  std::size_t rows = 0, below = 0;
  double min_epr = 1e300;
  for (bool smooth : {true, false}) {
    SweepOptions so = tabs.cfg.sweep;
    so.smooth = smooth;
    const auto res = sweep(tabs.cfg.model, tabs.geometries(), grid, tabs.cfg.extinction, tabs.cfg.absorption, so);
    for (const auto& row : res.dataset.rows) {
      ++rows;
      if (row.epr.size() != 10) ++below;
      for (double e : row.epr) {
        min_epr = std::min(min_epr, e);
        below += e < 1.0;
      }
    }
  }
  return {rows == 2 * grid.size() * kDepths.size() && below == 0,
          std::to_string(rows) + " rows (smoothed and raw), " + std::to_string(below) + " features below 1, min EPR " +
              fmt("%.8f", min_epr)};
}

// 5
Outcome ambiguity(const fs::path& workdir) {
  const Tables& tabs = large_tables(workdir);
  const Hemodynamics nom = tabs.cfg.ppg.nominal;
  HemoGrid grid{{nom.hb_m}, {nom.s_m}, {nom.hb_f}, {0.2, 0.45, 0.7}};
  const auto res = sweep(tabs.cfg.model, tabs.geometries(), grid, tabs.cfg.extinction, tabs.cfg.absorption,
                         tabs.cfg.sweep);
  const auto& rows = res.dataset.rows;
  const std::size_t n_rings = res.dataset.n_rings();
  double best = 1e300;
  std::string where;
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = a + 1; b < rows.size(); ++b) {
      if (rows[a].d_m_mm == rows[b].d_m_mm || rows[a].hemo.s_f == rows[b].hemo.s_f) continue;
      for (std::size_t w = 0; w < res.dataset.n_wavelengths(); ++w) {
        double norm = 0.0, closest = 1e300;
        std::size_t ring = 0;
        for (std::size_t r = 0; r < n_rings; ++r) {
          const double diff = rows[a].epr[w * n_rings + r] - rows[b].epr[w * n_rings + r];
          norm += diff * diff;
          if (std::abs(diff) < closest) {
            closest = std::abs(diff);
            ring = r;
          }
        }
        const double ratio = closest / std::sqrt(norm);
        if (ratio < best) {
          best = ratio;
          std::ostringstream s;
          s << "(d_m " << rows[a].d_m_mm << ", s_f " << rows[a].hemo.s_f << ") vs (d_m " << rows[b].d_m_mm
            << ", s_f " << rows[b].hemo.s_f << ") at " << res.dataset.sdd_mm[ring] << " mm, "
            << res.dataset.wavelengths_nm[w] << " nm";
          where = s.str();
        }
      }
    }
  return {best < 0.1, "smallest single-ring / 5-ring distance ratio " + fmt("%.4f", best) + " for " + where};
}

struct ScaledStudy {
  FeatureDataset clean;
  std::map<std::string, double> clean_mae;
  std::map<std::string, std::map<std::string, double>> noisy_mae;
};

ScaledStudy& scaled_study(const fs::path& workdir) {
  static ScaledStudy study;
  static bool done = false;
  if (done) return study;
  const Tables& tabs = large_tables(workdir);
  const auto res = sweep(tabs.cfg.model, tabs.geometries(), tabs.cfg.grid, tabs.cfg.extinction, tabs.cfg.absorption,
                         tabs.cfg.sweep);
  study.clean = res.dataset;
  study.clean_mae = mean_mae(run_training(study.clean, tabs.cfg.training, CvMode::Random, "clean", "acceptance"));
  for (auto scenario : {NoiseScenario::ShotOnly, NoiseScenario::ShotAndMeasurement}) {
    NoiseConfig nc = tabs.cfg.noise;
    nc.scenario = scenario;
    const auto noisy = add_noise(study.clean, nc);
    study.noisy_mae[std::string(to_string(scenario))] =
        mean_mae(run_training(noisy.dataset, tabs.cfg.training, CvMode::Random, std::string(to_string(scenario)),
                              "acceptance"));
  }
  done = true;
  return study;
}

// 6
Outcome epr_vs_ror(const fs::path& workdir) {
  const ScaledStudy& s = scaled_study(workdir);
  const double epr = s.clean_mae.at("epr");
  const double ror = s.clean_mae.at("ror");
  std::ostringstream d;
  d << s.clean.rows.size() << " rows, " << kDepths.size() << " depths, 5 seeds: mean MAE EPR "
    << fmt("%.2f", 100 * epr) << "% vs RoR " << fmt("%.2f", 100 * ror) << "% (improvement "
    << fmt("%.2f", improvement_percent(ror, epr, false)) << "%)";
  return {epr <= ror && epr <= 0.10 && s.clean.rows.size() >= 1800, d.str()};
}

// 7
Outcome noise_model(const fs::path& workdir) {
  const Tables& tabs = large_tables(workdir);
  const ScaledStudy& s = scaled_study(workdir);
  std::size_t n_wl = s.clean.n_wavelengths(), n_r = s.clean.n_rings();
  std::vector<double> mean_power(n_r, 0.0);
  for (const auto& row : s.clean.rows)
    for (std::size_t w = 0; w < n_wl; ++w)
      for (std::size_t r = 0; r < n_r; ++r)
        mean_power[r] += tabs.cfg.noise.source_power_w * (row.i_systole[w * n_r + r] + row.i_diastole[w * n_r + r]);
  for (double& p : mean_power) p /= static_cast<double>(2 * n_wl * s.clean.rows.size());
  const auto gains = compute_gains(mean_power);

  double worst = 0.0;
  for (auto scenario : {NoiseScenario::ShotOnly, NoiseScenario::ShotAndMeasurement}) {
    NoiseConfig nc = tabs.cfg.noise;
    nc.scenario = scenario;
    const bool combined = scenario == NoiseScenario::ShotAndMeasurement;
    for (std::size_t r : {std::size_t{0}, n_r - 1}) {
      const double p = mean_power[r];
      const double g = combined ? gains[r] : 1.0;
      const double current = nc.responsivity_a_per_w * p;
      double var = 2.0 * 1.602176634e-19 * nc.bandwidth_hz * current;
      if (combined) var += 4.0 * 1.380649e-23 * nc.temperature_k * nc.bandwidth_hz / nc.gain_resistor_ohm;
      const double analytic = g * std::sqrt(var) / nc.responsivity_a_per_w;
      RngStream rng(99, r, 7);
      double sum = 0.0, sum2 = 0.0;
      const int n = 100000;
      for (int i = 0; i < n; ++i) {
        const double e = inject(p, nc, gains[r], rng) - g * p;
        sum += e;
        sum2 += e * e;
      }
      const double mean = sum / n;
      const double sd = std::sqrt((sum2 - n * mean * mean) / (n - 1));
      worst = std::max(worst, std::abs(sd / analytic - 1.0));
    }
  }
  const double clean = s.clean_mae.at("epr");
  const double shot = s.noisy_mae.at("shot").at("epr");
  const double comb = s.noisy_mae.at("combined").at("epr");
  std::ostringstream d;
  d << "worst empirical/analytic sigma deviation " << fmt("%.2f", 100 * worst) << "%; EPR MAE clean "
    << fmt("%.2f", 100 * clean) << "% <= shot " << fmt("%.2f", 100 * shot) << "% <= combined "
    << fmt("%.2f", 100 * comb) << "% (RoR: " << fmt("%.2f", 100 * s.clean_mae.at("ror")) << "%, "
    << fmt("%.2f", 100 * s.noisy_mae.at("shot").at("ror")) << "%, "
    << fmt("%.2f", 100 * s.noisy_mae.at("combined").at("ror")) << "%)";
  return {worst < 0.05 && comb >= shot && shot >= clean, d.str()};
}

// 8
Outcome dsp_roundtrip() {
  PpgSettings s;
  s.epr_window_s = 20.0;
  PhysioParams physio;
  physio.fhr_hz = {2.3, 2.35, 2.25, 2.3, 2.4};
  physio.fhr_fs_hz = 1.0 / 30.0;
  physio.mhr_hz = 1.35;
  physio.mrr_hz = 0.25;
  ChannelAmplitudes a1, a2;
  a1.dc = {1.0};
  a1.fetal_ac = {0.01};
  a1.maternal_ac = 0.01;
  a1.resp_ac = 0.005;
  a2.dc = {0.5};
  a2.fetal_ac = {0.002};
  a2.maternal_ac = 0.005;
  const auto demod = demodulate(synthesize_ppg({{a1, a2}}, physio, 120.0, 3, s), s);
  const auto ch = extract_epr(demod, s);
  const double expect[2] = {1.02, 1.008};
  double epr_err = 0.0;
  for (int w = 0; w < 2; ++w)
    for (std::size_t i = 40 * 80; i < 80 * 80; i += 8)
      epr_err = std::max(epr_err, std::abs(ch[w].epr.epr[i] / expect[w] - 1.0));

  const double fs = 80.0;
  const std::size_t n = 80 * 120;
  const auto fhr = resample_fhr(physio, fs, n);
  const auto phase = fetal_phase(fhr, fs);
  double lock_err = 0.0;
  for (double offset : {0.0, 0.7, 2.0}) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 + 0.37 * std::cos(phase[i] + offset);
    const auto amp = lock_in(x, fhr, fs);
    for (std::size_t i = 30 * 80; i < 90 * 80; ++i) lock_err = std::max(lock_err, std::abs(amp[i] / 0.37 - 1.0));
  }

  ChannelAmplitudes on, off;
  on.dc = {1.0};
  off.dc = {0.0};
  const auto cross = demodulate(synthesize_ppg({{on, off}, {off, on}}, {}, 4.0, 1, s), s);
  double xt = 0.0;
  for (std::size_t i = 80; i < cross.n_samples() - 80; ++i)
    xt = std::max({xt, std::abs(cross.channel("det1_w2")[i]), std::abs(cross.channel("det2_w1")[i])});
  return {epr_err < 0.02 && lock_err < 0.01 && xt < 0.01,
          "EPR rel err " + fmt("%.2e", epr_err) + ", lock-in rel err " + fmt("%.2e", lock_err) + ", crosstalk " +
              fmt("%.2e", xt)};
}

TrainData random_batch(std::size_t n, std::size_t dim, std::uint64_t seed) {
  RngStream rng(seed, 0, 77);
  TrainData d;
  d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  d.y.resize(static_cast<Eigen::Index>(n));
  d.w.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) d.x(i, j) = rng.normal();
    d.y[i] = rng.uniform();
    d.w[i] = 0.2 + rng.uniform();
  }
  return d;
}

TrainData linear_data(std::size_t n, std::uint64_t seed) {
  RngStream rng(seed, 0, 78);
  TrainData d;
  d.x.resize(static_cast<Eigen::Index>(n), 10);
  d.y.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < 10; ++j) d.x(i, j) = rng.uniform();
    d.y[i] = 0.1 + 0.7 * (0.3 * d.x(i, 0) + 0.5 * d.x(i, 3) + 0.2 * d.x(i, 7));
  }
  return d;
}

// 9
Outcome estimator() {
  double grad = 0.0;
  std::size_t models = 0;
  for (std::uint64_t seed = 1; seed <= 20 && models < 6; ++seed) {
    MlpConfig c;
    c.input_dim = 5;
    c.first_hidden = seed % 2 ? 16 : 8;
    c.init_sigma = 0.5;
    c.seed = seed;
    Mlp m(c);
    const auto batch = random_batch(16, 5, seed);
    if (m.min_abs_preactivation(batch.x) < 1e-4) continue;
    grad = std::max(grad, gradcheck(m, batch, 1e-6).max_rel_error);
    ++models;
  }

  const auto tr = linear_data(1000, 1);
  const auto va = linear_data(250, 2);
  MlpConfig c;
  c.input_dim = 10;
  c.first_hidden = 32;
  c.max_epochs = 200;
  c.patience = 30;
  Mlp m(c);
  m.fit_standardizer(tr.x);
  train(m, tr, va);
  const double mae = (m.predict(va.x) - va.y).cwiseAbs().mean();
  const double range = va.y.maxCoeff() - va.y.minCoeff();

  bool protocol = true;
  EarlyStopping es(3);
  const std::vector<double> losses{5.0, 4.0, 4.5, 3.0, 3.0, 3.2, 3.1, 1.0};
  std::size_t stopped = 0;
  for (std::size_t e = 0; e < losses.size() && !stopped; ++e)
    if (es.update(e + 1, losses[e])) stopped = e + 1;
  protocol &= stopped == 7 && es.best_epoch() == 4;

  std::vector<int> rounds;
  std::vector<double> times;
  for (int r = 0; r < 4; ++r)
    for (int i = 0; i < 12 + 3 * r; ++i) {
      rounds.push_back(r);
      times.push_back(7.0 * i);
    }
  const auto folds = temporal_cv(rounds, times, 5);
  std::vector<int> seen(rounds.size(), 0);
  for (const auto& f : folds) {
    for (std::size_t v : f.val) ++seen[v];
    protocol &= f.train.size() + f.val.size() == rounds.size();
    std::map<int, double> wsum;
    for (std::size_t k = 0; k < f.train.size(); ++k) wsum[rounds[f.train[k]]] += f.train_weights[k];
    for (auto& [r, w] : wsum) protocol &= std::abs(w - 1.0) < 1e-12;
  }
  protocol &= std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; });
  std::vector<double> keys;
  for (int g = 0; g < 3; ++g)
    for (int i = 0; i < 40; ++i) keys.push_back(g);
  const auto split = random_group_split(keys, 0.2, 4);
  std::vector<int> cover(keys.size(), 0);
  for (auto v : split.train) ++cover[v];
  for (auto v : split.val) ++cover[v];
  protocol &= std::all_of(cover.begin(), cover.end(), [](int v) { return v == 1; }) && split.val.size() == 24;

  return {models >= 5 && grad < 1e-4 && mae < 0.01 * range && protocol,
          "gradcheck max rel err " + fmt("%.2e", grad) + " over " + std::to_string(models) +
              " models; linear MAE " + fmt("%.3f", 100 * mae / range) + "% of range; protocol " +
              (protocol ? "exact" : "MISMATCH")};
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = ss.str();
  }
  return files;
}

std::string tiny_pipeline_config(unsigned workers) {
  return R"({"format_version": 1,
  "geometry": {"d_m_mm": [4.0, 8.0]},
  "simulation": {"photons": 40000, "seed": 8, "workers": )" +
         std::to_string(workers) + R"(},
  "sweep": {"grid": {"hb_m": [115.0], "s_m": [0.98], "hb_f": [110.0, 140.0],
                     "s_f": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]}},
  "training": {"trials": 2, "mlp": {"first_hidden": 8, "max_epochs": 20, "patience": 5}},
  "ppg": {"rounds": 2, "duration_s": 40.0, "sample_interval_s": 2.0, "control_interval_s": 4.0,
          "dsp": {"epr_window_s": 10.0}}})";
}

// 10
Outcome determinism(const fs::path& workdir) {
  std::vector<std::string> broken;
  const TissueModel model = default_tissue_model().with_maternal_thickness(4.0);
  SimulateOptions one{1}, three{3};
  const auto a = simulate(model, 850.0, 50000, 3, one);
  const auto b = simulate(model, 850.0, 50000, 3, three);
  const auto c = simulate(model, 850.0, 50000, 3, one);
  const auto same_table = [](const PathlengthTable& x, const PathlengthTable& y) {
    if (x.rows.size() != y.rows.size() || x.direct_tally != y.direct_tally || x.ring_counts != y.ring_counts)
      return false;
    for (std::size_t i = 0; i < x.rows.size(); ++i)
      if (x.rows[i].photon_index != y.rows[i].photon_index || x.rows[i].detector_id != y.rows[i].detector_id ||
          x.rows[i].pathlength != y.rows[i].pathlength)
        return false;
    return true;
  };
  if (!same_table(a, b) || !same_table(a, c)) broken.push_back("simulate");

  const fs::path root = workdir / "determinism";
  fs::remove_all(root);
  std::ostringstream quiet;
  PipelineOptions opt;
  opt.log = &quiet;
  opt.out_dir = (root / "w1").string();
  run_pipeline(parse_config(tiny_pipeline_config(1)), opt);
  opt.out_dir = (root / "w3").string();
  run_pipeline(parse_config(tiny_pipeline_config(3)), opt);
  opt.out_dir = (root / "w1_again").string();
  run_pipeline(parse_config(tiny_pipeline_config(1)), opt);
  const auto s1 = snapshot(root / "w1");
  const auto s3 = snapshot(root / "w3");
  const auto s1b = snapshot(root / "w1_again");
  for (const auto& [name, bytes] : s1) {
    if (!s3.count(name) || s3.at(name) != bytes) broken.push_back(name + " (workers)");
    if (!s1b.count(name) || s1b.at(name) != bytes) broken.push_back(name + " (rerun)");
  }
  if (s1.size() != s3.size() || s1.size() != s1b.size()) broken.push_back("file sets differ");
  opt.out_dir = (root / "w1").string();
  const auto cached = run_pipeline(parse_config(tiny_pipeline_config(1)), opt);
  if (cached.executed_count() != 0 || snapshot(root / "w1") != s1) broken.push_back("cached rerun");

  std::string detail = "simulate (workers 1/3, rerun) and " + std::to_string(s1.size()) +
                       " pipeline artifacts (workers 1/3, fresh rerun, cached rerun with " +
                       std::to_string(cached.executed_count()) + " stages executed): ";
  if (broken.empty()) return {true, detail + "bit-identical"};
  for (const auto& n : broken) detail += n + " ";
  return {false, detail + "differ"};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path workdir = fs::temp_directory_path() / "tfo_acceptance";
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--workdir" && i + 1 < argc) {
      workdir = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      only.push_back(std::stoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--workdir DIR] [--only N]...\n";
      return 2;
    }
  }
  fs::create_directories(workdir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"replay correctness", [&] { return replay_correctness(workdir); }},
      {"Beer-Lambert structure", [] { return beer_lambert_structure(); }},
      {"fetal sensitivity saturation", [&] { return sensitivity_saturation(workdir); }},
      {"EPR sign", [&] { return epr_sign(workdir); }},
      {"saturation-geometry ambiguity", [&] { return ambiguity(workdir); }},
      {"EPR vs RoR", [&] { return epr_vs_ror(workdir); }},
      {"noise model", [&] { return noise_model(workdir); }},
      {"DSP roundtrip", [] { return dsp_roundtrip(); }},
      {"estimator", [] { return estimator(); }},
      {"determinism", [&] { return determinism(workdir); }},
  };

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << criteria[k].first << ": " << o.detail << " ("
              << fmt("%.1f", seconds_since(t0)) << " s)" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
