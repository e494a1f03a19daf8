#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tfo/config.hpp"
#include "tfo/errors.hpp"
#include "tfo/evaluation.hpp"
#include "tfo/noise.hpp"
#include "tfo/pipeline.hpp"
#include "tfo/ppg.hpp"
#include "tfo/report.hpp"
#include "tfo/sweep.hpp"
#include "tfo/table_io.hpp"
#include "tfo/transport.hpp"

namespace fs = std::filesystem;
using namespace tfo;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

Config config_or_default(const std::string& path) {
  return path.empty() ? parse_config(R"({"format_version": 1})") : load_config(path);
}

void print_metrics(const RegressionMetrics& m) {
  std::cout << "n=" << m.n << " mae=" << m.mae << " abs_error_std=" << m.abs_error_std
            << " pearson_r=" << m.pearson_r << " p_value=" << m.p_value << "\n";
}

struct SimulateArgs {
  std::string config, out, csv;
  double wavelength = 735.0;
  double d_m = 0.0;
  std::uint64_t photons = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned workers = 0;
};

int cmd_simulate(const SimulateArgs& a) {
  Config cfg = config_or_default(a.config);
  const double d_m = a.d_m > 0.0 ? a.d_m : cfg.d_m_mm.front();
  const TissueModel model = cfg.model.with_maternal_thickness(d_m);
  model.validate();
  const std::uint64_t photons = a.photons ? a.photons : cfg.simulation.photons;
  const std::uint64_t seed = a.seed_set ? a.seed : cfg.simulation.seed;
  SimulateOptions so;
  so.workers = a.workers ? a.workers : cfg.simulation.workers;
  const auto table = simulate(model, a.wavelength, photons, seed, so);
  write_table(a.out, table);
  if (!a.csv.empty()) write_table_csv(a.csv, table);
  std::cout << "detected " << table.rows.size() << " of " << photons << " photons; seed " << seed
            << "; model " << hex64(table.meta.model_hash) << "\n";
  return 0;
}

int cmd_sweep(const std::string& config, const std::string& tables_dir, const std::string& out,
              unsigned workers) {
  Config cfg = config_or_default(config);
  FeatureDataset all;
  std::size_t invalid = 0;
  SweepOptions so = cfg.sweep;
  if (workers) so.workers = workers;
  for (double d : cfg.d_m_mm) {
    std::vector<PathlengthTable> tables;
    for (double wl : cfg.model.wavelengths_nm) {
      const fs::path p = fs::path(tables_dir) / table_file_name(d, wl);
      if (!fs::exists(p)) throw DataError("missing table " + p.string());
      tables.push_back(read_table(p.string()));
    }
    GeometryTables g{d, {}};
    for (const auto& t : tables) g.by_wavelength.push_back(&t);
    SweepResult sr = sweep(cfg.model, {g}, cfg.grid, cfg.extinction, cfg.absorption, so);
    invalid += sr.invalid_rows;
    if (all.sdd_mm.empty()) {
      all = std::move(sr.dataset);
    } else {
      for (auto& r : sr.dataset.rows) all.rows.push_back(std::move(r));
    }
  }
  all.provenance["config_hash"] = hex64(cfg.hash());
  all.provenance["seed"] = std::to_string(cfg.simulation.seed);
  write_dataset_csv(out, all);
  std::cout << all.rows.size() << " rows written; " << invalid << " excluded\n";
  return 0;
}

int cmd_noise(const std::string& config, const std::string& in, const std::string& scenario,
              const std::string& out, std::uint64_t seed, bool seed_set) {
  Config cfg = config_or_default(config);
  NoiseConfig nc = cfg.noise;
  nc.scenario = noise_scenario_from_string(scenario);
  if (seed_set) nc.seed = seed;
  const FeatureDataset clean = read_dataset_csv(in);
  NoisyDataset noisy = add_noise(clean, nc);
  noisy.dataset.provenance["config_hash"] = hex64(cfg.section_hash("noise"));
  write_dataset_csv(out, noisy.dataset);
  std::cout << noisy.dataset.rows.size() << " rows written; " << noisy.excluded_rows << " excluded\n";
  return 0;
}

struct PpgArgs {
  std::string config, in, out, csv;
  std::size_t row = 0;
  double duration = 120.0;
  double fhr = 2.3;
  std::uint64_t seed = 1;
};

int cmd_ppg_synth(const PpgArgs& a) {
  Config cfg = config_or_default(a.config);
  const FeatureDataset ds = read_dataset_csv(a.in);
  if (!ds.has_intensities) throw DataError("dataset carries no systole/diastole intensities");
  if (a.row >= ds.rows.size()) throw DataError("row index out of range");
  const auto& row = ds.rows[a.row];
  const std::size_t n_wl = ds.n_wavelengths();
  const std::size_t n_det = ds.n_rings();
  std::vector<std::vector<ChannelAmplitudes>> amps(n_det, std::vector<ChannelAmplitudes>(n_wl));
  for (std::size_t d = 0; d < n_det; ++d) {
    for (std::size_t w = 0; w < n_wl; ++w) {
      const double i1 = row.i_systole[w * n_det + d];
      const double i2 = row.i_diastole[w * n_det + d];
      amps[d][w].dc = {i1};
      amps[d][w].fetal_ac = {0.5 * (i2 - i1)};
      amps[d][w].maternal_ac = cfg.ppg.maternal_ac_fraction * i1;
      amps[d][w].resp_ac = cfg.ppg.resp_ac_fraction * i1;
      amps[d][w].noise_sigma = cfg.ppg.noise_fraction * i1;
    }
  }
  PhysioParams physio;
  physio.fhr_hz = {a.fhr};
  const PpgRecord raw = synthesize_ppg(amps, physio, a.duration, a.seed, cfg.ppg.dsp);
  write_ppg(a.out, raw);
  if (!a.csv.empty()) write_ppg_csv(a.csv, raw);
  std::cout << raw.channels.size() << " channels x " << raw.n_samples() << " samples at " << raw.fs_hz << " Hz\n";
  return 0;
}

int cmd_ppg_demod(const PpgArgs& a) {
  Config cfg = config_or_default(a.config);
  const PpgRecord demod = demodulate(read_ppg(a.in), cfg.ppg.dsp);
  write_ppg(a.out, demod);
  if (!a.csv.empty()) write_ppg_csv(a.csv, demod);
  std::cout << demod.channels.size() << " channels x " << demod.n_samples() << " samples at " << demod.fs_hz << " Hz\n";
  return 0;
}

int cmd_ppg_extract(const PpgArgs& a) {
  Config cfg = config_or_default(a.config);
  const PpgRecord demod = read_ppg(a.in);
  const auto channels = extract_epr(demod, cfg.ppg.dsp);
  std::ofstream os(a.out);
  if (!os) throw DataError("cannot open '" + a.out + "' for writing");
  os << "time_s";
  for (const auto& c : channels) os << "," << c.name << "_dc," << c.name << "_ac," << c.name << "_epr";
  os << "\n";
  for (std::size_t i = 0; i < demod.n_samples(); ++i) {
    os << format_double(static_cast<double>(i) / demod.fs_hz);
    for (const auto& c : channels)
      os << "," << format_double(c.dc[i]) << "," << format_double(c.ac[i]) << "," << format_double(c.epr.epr[i]);
    os << "\n";
  }
  for (const auto& c : channels) {
    const std::size_t mid = demod.n_samples() / 2;
    std::cout << c.name << ": epr(mid)=" << c.epr.epr[mid] << " gaps=" << c.epr.gap_samples << "\n";
  }
  return 0;
}

struct TrainArgs {
  std::string config, data, features = "epr", cv = "random", out, metrics, predictions, scenario = "clean";
  std::size_t trials = 0;
};

int cmd_train(const TrainArgs& a) {
  Config cfg = config_or_default(a.config);
  TrainingSettings ts = cfg.training;
  ts.features = {feature_kind_from_string(a.features)};
  if (a.trials) ts.trials = a.trials;
  const CvMode mode = cv_mode_from_string(a.cv);
  const FeatureDataset ds = read_dataset_csv(a.data);
  const std::string hash = hex64(cfg.section_hash("training"));
  const auto out = run_training(ds, ts, mode, a.scenario, hash, cfg.simulation.workers);
  save_model(a.out, out.models.front());
  if (!a.metrics.empty()) write_metrics_csv(a.metrics, out.metrics);
  if (!a.predictions.empty())
    write_predictions_csv(a.predictions, out, a.scenario, "config_hash=" + hash);
  for (const auto& m : out.metrics) {
    std::cout << m.feature << " " << m.split << " trial " << m.trial << ": ";
    print_metrics(m.metrics);
  }
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data, const std::string& features,
                 const std::string& out) {
  const Mlp model = load_model(model_path);
  const FeatureDataset ds = read_dataset_csv(data);
  const DesignMatrix dm = design_matrix(ds, feature_kind_from_string(features));
  if (static_cast<std::size_t>(dm.x.cols()) != model.config().input_dim)
    throw DataError("model expects " + std::to_string(model.config().input_dim) + " features, dataset has " +
                    std::to_string(dm.x.cols()));
  const Eigen::VectorXd pred = model.predict(dm.x);
  const RegressionMetrics m = evaluate(pred, dm.y);
  print_metrics(m);
  if (!out.empty()) {
    MetricsRecord rec;
    rec.feature = features;
    rec.split = "external";
    rec.metrics = m;
    rec.seed = std::to_string(model.config().seed);
    write_metrics_csv(out, {rec});
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& metrics, const std::string& md, const std::string& csv) {
  std::vector<MetricsRecord> all;
  for (const auto& f : metrics) {
    auto recs = read_metrics_csv(f);
    all.insert(all.end(), recs.begin(), recs.end());
  }
  const Report rep = build_report(all);
  if (md.empty()) {
    std::cout << rep.markdown;
  } else {
    std::ofstream(md) << rep.markdown;
  }
  if (!csv.empty()) std::ofstream(csv) << rep.csv;
  return 0;
}

int cmd_pipeline(const std::string& config, const std::string& out) {
  Config cfg = load_config(config);
  PipelineOptions opt;
  opt.out_dir = out;
  const auto res = run_pipeline(cfg, opt);
  std::cout << res.executed_count() << " of " << res.stages.size() << " stages executed; manifest "
            << res.manifest_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transabdominal fetal oximetry simulator and estimator"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Monte Carlo pathlength table for one geometry and wavelength");
  c_sim->add_option("--config", sim.config, "configuration file");
  c_sim->add_option("--wavelength", sim.wavelength, "wavelength in nm")->required();
  c_sim->add_option("--photons", sim.photons, "photons to launch (default from config)");
  auto* sim_seed = c_sim->add_option("--seed", sim.seed, "RNG seed (default from config)");
  c_sim->add_option("--d-m", sim.d_m, "maternal wall thickness in mm (default: first configured)");
  c_sim->add_option("--workers", sim.workers, "worker threads (0 = all cores)");
  c_sim->add_option("--out", sim.out, "output table")->required();
  c_sim->add_option("--csv", sim.csv, "optional CSV export");

  std::string sw_config, sw_tables, sw_out;
  unsigned sw_workers = 0;
  auto* c_sweep = app.add_subcommand("sweep", "Replay tables over the hemodynamic grid");
  c_sweep->add_option("--config,--grid", sw_config, "configuration with grid and ring selection");
  c_sweep->add_option("--tables", sw_tables, "directory of table_d*_w*.bin files")->required();
  c_sweep->add_option("--out", sw_out, "dataset CSV")->required();
  c_sweep->add_option("--workers", sw_workers, "worker threads");

  std::string nz_config, nz_in, nz_scenario, nz_out;
  std::uint64_t nz_seed = 0;
  auto* c_noise = app.add_subcommand("noise", "Inject photodetector noise into a clean dataset");
  c_noise->add_option("--config", nz_config, "configuration file");
  c_noise->add_option("--in", nz_in, "clean dataset CSV")->required();
  c_noise->add_option("--scenario", nz_scenario, "shot | combined")->required();
  auto* nz_seed_opt = c_noise->add_option("--seed", nz_seed, "noise seed");
  c_noise->add_option("--out", nz_out, "noisy dataset CSV")->required();

  PpgArgs ppg;
  auto* c_ppg = app.add_subcommand("ppg", "PPG synthesis and processing");
  c_ppg->require_subcommand(1);
  c_ppg->add_option("--config", ppg.config, "configuration file");
  auto* c_synth = c_ppg->add_subcommand("synth", "Synthesize raw modulated PPG from one dataset row");
  c_synth->add_option("--in,--data", ppg.in, "dataset CSV with intensities")->required();
  c_synth->add_option("--row", ppg.row, "row index");
  c_synth->add_option("--duration", ppg.duration, "seconds");
  c_synth->add_option("--fhr", ppg.fhr, "fetal heart rate in Hz");
  c_synth->add_option("--seed", ppg.seed, "noise seed");
  c_synth->add_option("--out", ppg.out, "raw waveform file")->required();
  c_synth->add_option("--csv", ppg.csv, "optional CSV export");
  auto* c_demod = c_ppg->add_subcommand("demod", "Demodulate a raw waveform to 80 Hz channels");
  c_demod->add_option("--in", ppg.in, "raw waveform file")->required();
  c_demod->add_option("--out", ppg.out, "demodulated waveform file")->required();
  c_demod->add_option("--csv", ppg.csv, "optional CSV export");
  auto* c_extract = c_ppg->add_subcommand("extract", "Envelope, lock-in and EPR series");
  c_extract->add_option("--in", ppg.in, "demodulated waveform file")->required();
  c_extract->add_option("--out", ppg.out, "EPR series CSV")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the MLP estimator");
  c_train->add_option("--config", tr.config, "configuration file");
  c_train->add_option("--data", tr.data, "dataset CSV")->required();
  c_train->add_option("--features", tr.features, "epr | ror");
  c_train->add_option("--cv", tr.cv, "random | temporal");
  c_train->add_option("--trials", tr.trials, "random-split trials (default from config)");
  c_train->add_option("--scenario", tr.scenario, "label written to the metrics");
  c_train->add_option("--out", tr.out, "model checkpoint of the first trial")->required();
  c_train->add_option("--metrics", tr.metrics, "metrics CSV");
  c_train->add_option("--predictions", tr.predictions, "validation predictions CSV");

  std::string ev_model, ev_data, ev_features = "epr", ev_out;
  auto* c_eval = app.add_subcommand("evaluate", "Evaluate a trained model on a dataset");
  c_eval->add_option("--model", ev_model, "model checkpoint")->required();
  c_eval->add_option("--data", ev_data, "dataset CSV")->required();
  c_eval->add_option("--features", ev_features, "epr | ror");
  c_eval->add_option("--out", ev_out, "metrics CSV");

  std::vector<std::string> rp_metrics;
  std::string rp_md, rp_csv;
  auto* c_report = app.add_subcommand("report", "Comparison tables from metrics files");
  c_report->add_option("--metrics", rp_metrics, "metrics CSV files")->required();
  c_report->add_option("--out", rp_md, "Markdown output (stdout when omitted)");
  c_report->add_option("--csv", rp_csv, "tidy CSV output");

  std::string pl_config, pl_out;
  auto* c_pipe = app.add_subcommand("pipeline", "Run the cached end-to-end pipeline");
  c_pipe->add_option("--config", pl_config, "configuration file")->required();
  c_pipe->add_option("--out", pl_out, "output directory (default from config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*c_sim) {
      sim.seed_set = sim_seed->count() > 0;
      return cmd_simulate(sim);
    }
    if (*c_sweep) return cmd_sweep(sw_config, sw_tables, sw_out, sw_workers);
    if (*c_noise) return cmd_noise(nz_config, nz_in, nz_scenario, nz_out, nz_seed, nz_seed_opt->count() > 0);
    if (*c_synth) return cmd_ppg_synth(ppg);
    if (*c_demod) return cmd_ppg_demod(ppg);
    if (*c_extract) return cmd_ppg_extract(ppg);
    if (*c_train) return cmd_train(tr);
    if (*c_eval) return cmd_evaluate(ev_model, ev_data, ev_features, ev_out);
    if (*c_report) return cmd_report(rp_metrics, rp_md, rp_csv);
    if (*c_pipe) return cmd_pipeline(pl_config, pl_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DomainError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
