#include "tfo/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "tfo/errors.hpp"
#include "tfo/hash.hpp"
#include "tfo/noise.hpp"
#include "tfo/ppg.hpp"
#include "tfo/replay.hpp"
#include "tfo/rng.hpp"
#include "tfo/table_io.hpp"
#include "tfo/transport.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tfo {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

std::string compact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < workers; ++k) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::string table_file_name(double d_m_mm, double wavelength_nm) {
  return "table_d" + compact(d_m_mm) + "_w" + compact(wavelength_nm) + ".bin";
}

std::string_view to_string(CvMode m) { return m == CvMode::Random ? "random" : "temporal"; }

CvMode cv_mode_from_string(std::string_view name) {
  if (name == "random") return CvMode::Random;
  if (name == "temporal") return CvMode::Temporal;
  throw ConfigError("unknown cross-validation mode '" + std::string(name) + "' (expected random or temporal)");
}

TrainingOutput run_training(const FeatureDataset& ds, const TrainingSettings& settings, CvMode mode,
                            const std::string& scenario, const std::string& config_hash,
                            unsigned workers) {
  if (ds.rows.empty()) throw DataError("training dataset has no rows");
  std::vector<Split> splits;
  if (mode == CvMode::Random) {
    std::vector<double> keys;
    for (const auto& r : ds.rows) keys.push_back(r.d_m_mm);
    for (std::size_t t = 0; t < settings.trials; ++t)
      splits.push_back(random_group_split(keys, settings.val_fraction, settings.split_seed + t));
  } else {
    std::vector<int> rounds;
    std::vector<double> times;
    for (const auto& r : ds.rows) {
      if (!r.round_id || !r.time_s) throw DataError("temporal cross-validation needs round_id and time_s columns");
      rounds.push_back(*r.round_id);
      times.push_back(*r.time_s);
    }
    splits = temporal_cv(rounds, times, settings.folds);
  }

  std::vector<DesignMatrix> matrices;
  for (FeatureKind k : settings.features) matrices.push_back(design_matrix(ds, k));

  const std::size_t n_jobs = matrices.size() * splits.size();
  std::vector<TrialResult> results(n_jobs);
  std::vector<std::optional<Mlp>> first_models(matrices.size());
  parallel_for(n_jobs, workers, [&](std::size_t job) {
    const std::size_t f = job / splits.size();
    const std::size_t t = job % splits.size();
    MlpConfig mc = settings.mlp;
    mc.seed = settings.mlp.seed + t;
    if (t == 0) {
      Mlp model(mc);
      results[job] = run_trial(matrices[f], splits[t], mc, &model);
      first_models[f] = std::move(model);
    } else {
      results[job] = run_trial(matrices[f], splits[t], mc);
    }
  });

  TrainingOutput out;
  for (std::size_t job = 0; job < n_jobs; ++job) {
    const std::size_t f = job / splits.size();
    const std::size_t t = job % splits.size();
    const std::string feature(to_string(settings.features[f]));
    const auto& res = results[job];
    MetricsRecord rec;
    rec.scenario = scenario;
    rec.feature = feature;
    rec.split = std::string(to_string(mode));
    rec.trial = static_cast<int>(t);
    rec.metrics = res.metrics;
    rec.seed = std::to_string(mode == CvMode::Random ? settings.split_seed + t : 0) + "/" +
               std::to_string(settings.mlp.seed + t);
    rec.config_hash = config_hash;
    out.metrics.push_back(rec);
    for (std::size_t i = 0; i < res.val_rows.size(); ++i) {
      out.predictions.push_back({feature, static_cast<int>(t), res.val_rows[i],
                                 matrices[f].y[static_cast<Eigen::Index>(res.val_rows[i])],
                                 res.predictions[static_cast<Eigen::Index>(i)]});
    }
    for (std::size_t e = 0; e < res.training.history.size(); ++e)
      out.history.push_back({feature, static_cast<int>(t), e + 1, res.training.history[e]});
  }
  for (auto& m : first_models) out.models.push_back(std::move(*m));
  return out;
}

void write_predictions_csv(const std::string& path, const TrainingOutput& out,
                           const std::string& scenario, const std::string& provenance) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << "# " << provenance << "\n";
  os << "scenario,feature,trial,row,label,prediction\n";
  for (const auto& p : out.predictions) {
    os << scenario << "," << p.feature << "," << p.trial << "," << p.row << "," << format_double(p.label)
       << "," << format_double(p.prediction) << "\n";
  }
}

void write_history_csv(const std::string& path, const TrainingOutput& out,
                       const std::string& scenario, const std::string& provenance) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << "# " << provenance << "\n";
  os << "scenario,feature,trial,epoch,train_mse,train_mae,val_mse,val_mae\n";
  for (const auto& h : out.history) {
    os << scenario << "," << h.feature << "," << h.trial << "," << h.epoch << ","
       << format_double(h.stats.train_mse) << "," << format_double(h.stats.train_mae) << ","
       << format_double(h.stats.val_mse) << "," << format_double(h.stats.val_mae) << "\n";
  }
}

double round_saturation(double high, double low, double t_s, double duration_s) {
  const double phase = 2.0 * std::numbers::pi * t_s / duration_s;
  return high - (high - low) * 0.5 * (1.0 - std::cos(phase));
}

FeatureDataset build_ppg_rounds(const Config& cfg, const TissueModel& base_model,
                                const std::vector<GeometryTables>& geometries,
                                std::size_t* dropped_rows) {
  const auto& pp = cfg.ppg;
  if (geometries.empty()) throw DataError("no geometries for the PPG rounds");
  const std::size_t n_wl = base_model.wavelengths_nm.size();

  FeatureDataset ds;
  ds.wavelengths_nm = base_model.wavelengths_nm;
  ds.smoothed = false;
  ds.has_ror = n_wl == 2;
  ds.has_intensities = false;
  std::size_t dropped = 0;

  for (std::size_t r = 0; r < pp.rounds; ++r) {
    const GeometryTables& geom = geometries[r % geometries.size()];
    RngStream rng(pp.seed, (std::uint64_t{1} << 32) + r, rng_domain::kPpg);
    auto draw = [&](const std::vector<double>& range) {
      return range[0] + (range[1] - range[0]) * rng.uniform();
    };
    const double s_hi = draw(pp.s_f_high);
    const double s_lo = draw(pp.s_f_low);
    const double fhr0 = draw(pp.fhr_hz);
    const double mhr = draw(pp.mhr_hz);
    const double mrr = draw(pp.mrr_hz);
    const double fhr_phase = 2.0 * std::numbers::pi * rng.uniform();

    const auto n_ctrl = static_cast<std::size_t>(std::ceil(pp.duration_s / pp.control_interval_s)) + 1;
    HemoGrid grid;
    grid.hb_m = {pp.nominal.hb_m};
    grid.s_m = {pp.nominal.s_m};
    grid.hb_f = {pp.nominal.hb_f};
    for (std::size_t k = 0; k < n_ctrl; ++k)
      grid.s_f.push_back(round_saturation(s_hi, s_lo, static_cast<double>(k) * pp.control_interval_s,
                                          pp.duration_s));
    SweepOptions so = cfg.sweep;
    so.smooth = false;
    so.with_ror = false;
    so.workers = cfg.simulation.workers;
    const SweepResult sr = sweep(base_model, {geom}, grid, cfg.extinction, cfg.absorption, so);
    if (sr.dataset.rows.size() != n_ctrl)
      throw DataError("PPG round " + std::to_string(r) + ": replay produced invalid intensities");
    const std::size_t n_det = sr.rings.size();
    if (ds.sdd_mm.empty()) ds.sdd_mm = sr.dataset.sdd_mm;

    std::vector<std::vector<ChannelAmplitudes>> amps(n_det, std::vector<ChannelAmplitudes>(n_wl));
    for (std::size_t d = 0; d < n_det; ++d) {
      for (std::size_t w = 0; w < n_wl; ++w) {
        auto& a = amps[d][w];
        a.control_fs_hz = 1.0 / pp.control_interval_s;
        a.dc.clear();
        a.fetal_ac.clear();
        double mean_dc = 0.0;
        for (const auto& row : sr.dataset.rows) {
          const double i1 = row.i_systole[w * n_det + d];
          const double i2 = row.i_diastole[w * n_det + d];
          a.dc.push_back(i1);
          a.fetal_ac.push_back(0.5 * (i2 - i1));
          mean_dc += i1;
        }
        mean_dc /= static_cast<double>(n_ctrl);
        a.maternal_ac = pp.maternal_ac_fraction * mean_dc;
        a.resp_ac = pp.resp_ac_fraction * mean_dc;
        a.noise_sigma = pp.noise_fraction * mean_dc;
      }
    }
    PhysioParams physio;
    physio.fhr_fs_hz = 1.0;
    physio.fhr_hz.clear();
    for (std::size_t s = 0; s <= static_cast<std::size_t>(std::ceil(pp.duration_s)); ++s) {
      const double f = fhr0 + 0.15 * std::sin(2.0 * std::numbers::pi * static_cast<double>(s) / 120.0 + fhr_phase);
      physio.fhr_hz.push_back(std::clamp(f, pp.fhr_hz[0], pp.fhr_hz[1]));
    }
    physio.mhr_hz = mhr;
    physio.mrr_hz = mrr;

    const std::uint64_t synth_seed = Fnv1a().u64(pp.seed).u64(r).value();
    PpgRecord demod;
    {
      const PpgRecord raw = synthesize_ppg(amps, physio, pp.duration_s, synth_seed, pp.dsp);
      demod = demodulate(raw, pp.dsp);
    }
    const auto channels = extract_epr(demod, pp.dsp);
    std::map<std::string, const ChannelEpr*> by_name;
    for (const auto& c : channels) by_name[c.name] = &c;

    const double half = 0.5 * pp.dsp.epr_window_s;
    for (double t = half; t <= pp.duration_s - half + 1e-9; t += pp.sample_interval_s) {
      const auto idx = std::min(static_cast<std::size_t>(std::llround(t * demod.fs_hz)), demod.n_samples() - 1);
      FeatureRow row;
      row.d_m_mm = geom.d_m_mm;
      row.hemo = pp.nominal;
      row.hemo.s_f = round_saturation(s_hi, s_lo, t, pp.duration_s);
      row.round_id = static_cast<int>(r);
      row.time_s = t;
      bool ok = true;
      for (std::size_t w = 0; w < n_wl; ++w) {
        for (std::size_t d = 0; d < n_det; ++d) {
          const auto it = by_name.find("det" + std::to_string(d + 1) + "_w" + std::to_string(w + 1));
          if (it == by_name.end()) throw DataError("demodulated channel missing");
          const double e = it->second->epr.epr[idx];
          ok = ok && std::isfinite(e) && e > 0.0;
          row.epr.push_back(e);
        }
      }
      if (ds.has_ror) {
        for (std::size_t d = 0; d < n_det; ++d) {
          const double v = (row.epr[d] - 1.0) / (row.epr[n_det + d] - 1.0);
          ok = ok && std::isfinite(v);
          row.ror.push_back(v);
        }
      }
      if (!ok) {
        ++dropped;
        continue;
      }
      ds.rows.push_back(std::move(row));
    }
  }
  if (dropped > 0) std::cerr << "warning: " << dropped << " PPG round samples dropped (invalid EPR)\n";
  if (dropped_rows) *dropped_rows = dropped;
  return ds;
}

const StageRecord* PipelineResult::find(const std::string& name) const {
  for (const auto& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::size_t PipelineResult::executed_count() const {
  return static_cast<std::size_t>(
      std::count_if(stages.begin(), stages.end(), [](const StageRecord& s) { return s.executed; }));
}

namespace {

class StageRunner {
 public:
  StageRunner(fs::path root, std::ostream& log) : root_(std::move(root)), log_(log) {
    fs::create_directories(root_ / "stages");
  }

  /// Runs body unless a matching stamp exists and every output is present.
  template <typename Body>
  const StageRecord& run(const std::string& name, std::uint64_t hash, std::vector<std::string> outputs,
                         Body&& body) {
    StageRecord rec{name, hash, std::move(outputs), false};
    if (!fresh(rec)) {
      log_ << "[run]    " << name << " (" << hex64(hash) << ")\n" << std::flush;
      for (const auto& o : rec.outputs) fs::create_directories((root_ / o).parent_path());
      body();
      for (const auto& o : rec.outputs) {
        if (!fs::exists(root_ / o)) throw DataError("stage " + name + " did not produce " + o);
      }
      write_stamp(rec);
      rec.executed = true;
    } else {
      log_ << "[cached] " << name << "\n";
    }
    records_.push_back(rec);
    return records_.back();
  }

  fs::path path(const std::string& rel) const { return root_ / rel; }
  std::vector<StageRecord>& records() { return records_; }

 private:
  fs::path stamp_path(const std::string& name) const { return root_ / "stages" / (name + ".json"); }

  bool fresh(const StageRecord& rec) const {
    std::ifstream in(stamp_path(rec.name));
    if (!in) return false;
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception&) {
      return false;
    }
    if (j.value("hash", std::string()) != hex64(rec.hash)) return false;
    for (const auto& o : rec.outputs) {
      if (!fs::exists(root_ / o)) return false;
    }
    return true;
  }

  void write_stamp(const StageRecord& rec) const {
    std::ofstream out(stamp_path(rec.name));
    out << json{{"name", rec.name}, {"hash", hex64(rec.hash)}, {"outputs", rec.outputs}}.dump(2) << "\n";
  }

  fs::path root_;
  std::ostream& log_;
  std::vector<StageRecord> records_;
};

void write_profiles(const std::string& path, const std::vector<const PathlengthTable*>& tables,
                    const TissueModel& model, const Config& cfg, const std::string& provenance) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << "# " << provenance << "\n";
  os << "d_m,wavelength_nm,ring,sdd_mm,n_detected,intensity,fetal_sensitive_intensity,sensitivity,"
        "lt_q1,lt_median,lt_q3,lt_mean,lf_q1,lf_median,lf_q3,lf_mean\n";
  const Hemodynamics nominal{};
  for (const auto* t : tables) {
    const auto pair = systole_diastole_pair(model.with_maternal_thickness(t->meta.d_m_mm), nominal,
                                            t->meta.wavelength_nm, cfg.extinction, cfg.absorption);
    const auto prof = intensity_profile(*t, pair.systole);
    for (std::size_t r = 0; r < t->n_rings(); ++r) {
      os << format_double(t->meta.d_m_mm) << "," << format_double(t->meta.wavelength_nm) << "," << r
         << "," << format_double(t->meta.rings[r].sdd_mm) << "," << t->ring_counts[r] << ","
         << format_double(prof.total[r]) << "," << format_double(prof.fetal_sensitive[r]) << ","
         << format_double(prof.sensitivity[r]);
      if (t->ring_empty(r)) {
        os << ",,,,,,,,\n";
        continue;
      }
      const auto st = pathlength_stats(*t, r);
      for (const auto* s : {&st.total, &st.fetal})
        os << "," << format_double(s->q1) << "," << format_double(s->median) << ","
           << format_double(s->q3) << "," << format_double(s->mean);
      os << "\n";
    }
  }
}

struct LoadedGeometry {
  std::vector<PathlengthTable> tables;
  GeometryTables view;
};

LoadedGeometry load_geometry(const StageRunner& runner, double d_m, const std::vector<double>& wavelengths) {
  LoadedGeometry g;
  g.tables.reserve(wavelengths.size());
  for (double wl : wavelengths)
    g.tables.push_back(read_table(runner.path("tables/" + table_file_name(d_m, wl)).string()));
  g.view.d_m_mm = d_m;
  for (const auto& t : g.tables) g.view.by_wavelength.push_back(&t);
  return g;
}

}  // namespace

PipelineResult run_pipeline(const Config& cfg, const PipelineOptions& options) {
  std::ostream& log = options.log ? *options.log : std::cerr;
  const fs::path root = options.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(options.out_dir);
  StageRunner runner(root, log);
  const auto& wls = cfg.model.wavelengths_nm;

  // simulate: one stage per (geometry, wavelength)
  std::vector<std::uint64_t> sim_hashes;
  for (double d : cfg.d_m_mm) {
    const TissueModel model = cfg.model.with_maternal_thickness(d);
    for (double wl : wls) {
      const std::uint64_t h = Fnv1a()
                                  .str("simulate")
                                  .u64(model.hash())
                                  .f64(wl)
                                  .u64(cfg.simulation.photons)
                                  .u64(cfg.simulation.seed)
                                  .value();
      sim_hashes.push_back(h);
      const std::string out = "tables/" + table_file_name(d, wl);
      runner.run("simulate_d" + compact(d) + "_w" + compact(wl), h, {out}, [&] {
        SimulateOptions so;
        so.workers = cfg.simulation.workers;
        const auto table = simulate(model, wl, cfg.simulation.photons, cfg.simulation.seed, so);
        write_table(runner.path(out).string(), table);
      });
    }
  }
  Fnv1a tables_hash;
  for (auto h : sim_hashes) tables_hash.u64(h);

  // sweep (+ per-ring profile plot data)
  const std::uint64_t sweep_hash = Fnv1a()
                                       .str("sweep")
                                       .u64(tables_hash.value())
                                       .u64(cfg.section_hash("tissue"))
                                       .u64(cfg.section_hash("absorption"))
                                       .u64(cfg.section_hash("sweep"))
                                       .value();
  runner.run("sweep", sweep_hash, {"datasets/clean.csv", "plots/profiles.csv"}, [&] {
    FeatureDataset all;
    std::size_t invalid = 0;
    std::vector<LoadedGeometry> loaded;
    std::vector<const PathlengthTable*> tables;
    for (double d : cfg.d_m_mm) {
      loaded.push_back(load_geometry(runner, d, wls));
      SweepResult sr = sweep(cfg.model, {loaded.back().view}, cfg.grid, cfg.extinction, cfg.absorption, cfg.sweep);
      invalid += sr.invalid_rows;
      if (all.rows.empty() && all.sdd_mm.empty()) {
        all = std::move(sr.dataset);
      } else {
        for (auto& row : sr.dataset.rows) all.rows.push_back(std::move(row));
      }
    }
    if (invalid > 0) log << "warning: " << invalid << " sweep rows excluded (empty ring or non-positive intensity)\n";
    all.provenance["stage"] = "sweep";
    all.provenance["config_hash"] = hex64(sweep_hash);
    all.provenance["seed"] = std::to_string(cfg.simulation.seed);
    all.provenance["photons"] = std::to_string(cfg.simulation.photons);
    write_dataset_csv(runner.path("datasets/clean.csv").string(), all);
    for (const auto& g : loaded)
      for (const auto& t : g.tables) tables.push_back(&t);
    write_profiles(runner.path("plots/profiles.csv").string(), tables, cfg.model, cfg,
                   "config_hash=" + hex64(sweep_hash) + " seed=" + std::to_string(cfg.simulation.seed));
  });

  const std::uint64_t train_section = cfg.section_hash("training");
  std::vector<std::string> metrics_files;
  std::vector<std::uint64_t> train_hashes;

  auto train_stage = [&](const std::string& scenario, const std::string& dataset_rel,
                         std::uint64_t upstream, CvMode mode) {
    const std::uint64_t h = Fnv1a()
                                .str("train")
                                .str(scenario)
                                .str(to_string(mode))
                                .u64(upstream)
                                .u64(train_section)
                                .value();
    const std::string dir = "train/" + scenario + "/";
    std::vector<std::string> outputs{dir + "metrics.csv", dir + "predictions.csv", dir + "history.csv"};
    for (FeatureKind k : cfg.training.features) outputs.push_back(dir + "model_" + std::string(to_string(k)) + ".bin");
    runner.run("train_" + scenario, h, outputs, [&] {
      const FeatureDataset ds = read_dataset_csv(runner.path(dataset_rel).string());
      const std::string hash_text = hex64(h);
      const auto out = run_training(ds, cfg.training, mode, scenario, hash_text, cfg.simulation.workers);
      write_metrics_csv(runner.path(dir + "metrics.csv").string(), out.metrics);
      const std::string prov = "config_hash=" + hash_text + " split_seed=" + std::to_string(cfg.training.split_seed) +
                               " mlp_seed=" + std::to_string(cfg.training.mlp.seed);
      write_predictions_csv(runner.path(dir + "predictions.csv").string(), out, scenario, prov);
      write_history_csv(runner.path(dir + "history.csv").string(), out, scenario, prov);
      for (std::size_t f = 0; f < out.models.size(); ++f)
        save_model(runner.path(dir + "model_" + std::string(to_string(cfg.training.features[f])) + ".bin").string(),
                   out.models[f]);
    });
    metrics_files.push_back(dir + "metrics.csv");
    train_hashes.push_back(h);
  };

  train_stage("clean", "datasets/clean.csv", sweep_hash, CvMode::Random);

  for (NoiseScenario s : cfg.noise_scenarios) {
    const std::string name(to_string(s));
    const std::uint64_t h = Fnv1a()
                                .str("noise")
                                .str(name)
                                .u64(sweep_hash)
                                .u64(cfg.section_hash("noise"))
                                .value();
    const std::string out = "datasets/" + name + ".csv";
    runner.run("noise_" + name, h, {out}, [&] {
      NoiseConfig nc = cfg.noise;
      nc.scenario = s;
      const FeatureDataset clean = read_dataset_csv(runner.path("datasets/clean.csv").string());
      NoisyDataset noisy = add_noise(clean, nc);
      if (noisy.excluded_rows > 0)
        log << "warning: " << noisy.excluded_rows << " rows excluded after " << name << " noise\n";
      noisy.dataset.provenance["stage"] = "noise";
      noisy.dataset.provenance["config_hash"] = hex64(h);
      write_dataset_csv(runner.path(out).string(), noisy.dataset);
    });
    train_stage(name, out, h, CvMode::Random);
  }

  if (cfg.ppg.enabled) {
    const std::uint64_t h = Fnv1a()
                                .str("ppg_rounds")
                                .u64(tables_hash.value())
                                .u64(cfg.section_hash("tissue"))
                                .u64(cfg.section_hash("absorption"))
                                .u64(cfg.section_hash("sweep"))
                                .u64(cfg.section_hash("ppg"))
                                .value();
    runner.run("ppg_rounds", h, {"datasets/rounds.csv"}, [&] {
      std::vector<LoadedGeometry> loaded;
      std::vector<GeometryTables> views;
      for (double d : cfg.d_m_mm) loaded.push_back(load_geometry(runner, d, wls));
      for (const auto& g : loaded) views.push_back(g.view);
      FeatureDataset ds = build_ppg_rounds(cfg, cfg.model, views);
      ds.provenance["stage"] = "ppg_rounds";
      ds.provenance["config_hash"] = hex64(h);
      ds.provenance["seed"] = std::to_string(cfg.ppg.seed);
      write_dataset_csv(runner.path("datasets/rounds.csv").string(), ds);
    });
    train_stage("rounds", "datasets/rounds.csv", h, CvMode::Temporal);
  }

  Fnv1a report_hash;
  report_hash.str("report");
  for (auto h : train_hashes) report_hash.u64(h);
  runner.run("report", report_hash.value(), {"report/report.md", "report/report.csv"}, [&] {
    std::vector<MetricsRecord> all;
    for (const auto& f : metrics_files) {
      auto recs = read_metrics_csv(runner.path(f).string());
      all.insert(all.end(), recs.begin(), recs.end());
    }
    const Report rep = build_report(all);
    std::ofstream md(runner.path("report/report.md"));
    md << "# fSpO2 estimation report\n\n" << rep.markdown << "\nconfig_hash " << hex64(report_hash.value()) << "\n";
    std::ofstream csv(runner.path("report/report.csv"));
    csv << rep.csv;
  });

  PipelineResult result;
  result.stages = runner.records();
  json stages = json::array();
  for (const auto& s : result.stages)
    stages.push_back({{"name", s.name}, {"hash", hex64(s.hash)}, {"outputs", s.outputs}});
  const json manifest{
      {"format_version", 1},
      {"tool_version", kToolVersion},
      {"config_hash", hex64(cfg.hash())},
      {"seeds",
       {{"simulation", cfg.simulation.seed},
        {"noise", cfg.noise.seed},
        {"split", cfg.training.split_seed},
        {"mlp", cfg.training.mlp.seed},
        {"ppg", cfg.ppg.seed}}},
      {"photons", cfg.simulation.photons},
      {"stages", stages},
  };
  result.manifest_path = (root / "manifest.json").string();
  const std::string text = manifest.dump(2) + "\n";
  std::string existing;
  if (std::ifstream in(result.manifest_path); in) {
    std::ostringstream os;
    os << in.rdbuf();
    existing = os.str();
  }
  if (existing != text) std::ofstream(result.manifest_path) << text;
  return result;
}

}  // namespace tfo
