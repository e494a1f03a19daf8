#include "tfo/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tfo/errors.hpp"
#include "tfo/hash.hpp"

namespace tfo {

using nlohmann::json;

namespace {

json linspace(double a, double b, int n) {
  json out = json::array();
  for (int i = 0; i < n; ++i) out.push_back(std::round((a + (b - a) * i / (n - 1)) * 1e9) / 1e9);
  return out;
}

json defaults() {
  const MlpConfig mlp;
  const NoiseConfig noise;
  const PpgRoundSettings ppg;
  const AbsorptionModel absorption;
  const SimulationSettings sim;
  const TissueModel model = default_tissue_model();

  json layers = json::array();
  for (const auto& layer : model.layers) {
    const bool pulsatile =
        layer.kind == LayerKind::MaternalWall || layer.kind == LayerKind::FetalTissue;
    json optics = json::array();
    for (const auto& op : layer.optics) {
      optics.push_back({{"mu_a", pulsatile ? json(nullptr) : json(op.mu_a)},
                        {"mu_s", op.mu_s},
                        {"g", op.g},
                        {"n", op.n}});
    }
    layers.push_back({{"kind", std::string(to_string(layer.kind))},
                      {"thickness_mm", layer.semi_infinite() ? json(nullptr) : json(layer.thickness_mm)},
                      {"optics", optics}});
  }
  json sdd = json::array();
  for (const auto& r : model.rings) sdd.push_back(r.sdd_mm);

  return {
      {"format_version", kConfigFormatVersion},
      {"output_dir", "run"},
      {"tissue",
       {{"wavelengths_nm", model.wavelengths_nm},
        {"layers", layers},
        {"extinction",
         json::array({{{"wavelength_nm", 735.0}, {"eps_hbo_molar", 418.0}, {"eps_hhb_molar", 1109.04}},
                      {{"wavelength_nm", 850.0}, {"eps_hbo_molar", 1058.0}, {"eps_hhb_molar", 691.32}}})}}},
      {"geometry",
       {{"d_m_mm", json::array({4.0, 8.0, 12.0})},
        {"lateral_half_width_mm", model.lateral_half_width_mm},
        {"volume_depth_mm", model.volume_depth_mm},
        {"cutoff_factor", model.cutoff_factor},
        {"source", {{"x_mm", 0.0}, {"y_mm", 0.0}}},
        {"rings", {{"sdd_mm", sdd}, {"half_width_mm", 1.0}}}}},
      {"absorption",
       {{"blood_fraction_each", absorption.blood_fraction_each},
        {"venous_saturation_factor", absorption.venous_saturation_factor},
        {"pulsation_delta", absorption.pulsation_delta}}},
      {"simulation", {{"photons", sim.photons}, {"seed", sim.seed}, {"workers", sim.workers}}},
      {"sweep",
       {{"grid",
         {{"hb_m", json::array({110.0, 120.0, 130.0})},
          {"s_m", json::array({0.9, 0.95, 1.0})},
          {"hb_f", json::array({110.0, 125.0, 140.0, 155.0, 170.0})},
          {"s_f", linspace(0.1, 0.8, 15)}}},
        {"selected_sdd_mm", json::array({15.0, 33.0, 46.0, 68.0, 94.0})},
        {"smooth", true},
        {"with_ror", true}}},
      {"noise",
       {{"scenarios", json::array({"shot", "combined"})},
        {"bandwidth_hz", noise.bandwidth_hz},
        {"temperature_k", noise.temperature_k},
        {"gain_resistor_ohm", noise.gain_resistor_ohm},
        {"responsivity_a_per_w", noise.responsivity_a_per_w},
        {"source_power_w", noise.source_power_w},
        {"seed", noise.seed}}},
      {"training",
       {{"features", json::array({"epr", "ror"})},
        {"val_fraction", 0.2},
        {"trials", 5},
        {"folds", 5},
        {"split_seed", 11},
        {"mlp",
         {{"first_hidden", mlp.first_hidden},
          {"hidden_override", json::array()},
          {"batch_norm", mlp.batch_norm},
          {"lr", mlp.lr},
          {"weight_decay", mlp.weight_decay},
          {"beta1", mlp.beta1},
          {"beta2", mlp.beta2},
          {"adam_eps", mlp.adam_eps},
          {"batch_size", mlp.batch_size},
          {"max_epochs", mlp.max_epochs},
          {"patience", mlp.patience},
          {"init_sigma", mlp.init_sigma},
          {"bn_momentum", mlp.bn_momentum},
          {"bn_eps", mlp.bn_eps},
          {"seed", mlp.seed}}}}},
      {"ppg",
       {{"enabled", ppg.enabled},
        {"rounds", ppg.rounds},
        {"duration_s", ppg.duration_s},
        {"control_interval_s", ppg.control_interval_s},
        {"sample_interval_s", ppg.sample_interval_s},
        {"s_f_high", ppg.s_f_high},
        {"s_f_low", ppg.s_f_low},
        {"fhr_hz", ppg.fhr_hz},
        {"mhr_hz", ppg.mhr_hz},
        {"mrr_hz", ppg.mrr_hz},
        {"maternal_ac_fraction", ppg.maternal_ac_fraction},
        {"resp_ac_fraction", ppg.resp_ac_fraction},
        {"noise_fraction", ppg.noise_fraction},
        {"nominal",
         {{"hb_m", ppg.nominal.hb_m}, {"s_m", ppg.nominal.s_m}, {"hb_f", ppg.nominal.hb_f}}},
        {"seed", ppg.seed},
        {"dsp",
         {{"fs_raw_hz", ppg.dsp.fs_raw_hz},
          {"fs_demod_hz", ppg.dsp.fs_demod_hz},
          {"carrier_hz", ppg.dsp.carrier_hz},
          {"demod_cutoff_hz", ppg.dsp.demod_cutoff_hz},
          {"demod_transition_hz", ppg.dsp.demod_transition_hz},
          {"lockin_cutoff_hz", ppg.dsp.lockin_cutoff_hz},
          {"lockin_transition_hz", ppg.dsp.lockin_transition_hz},
          {"min_maternal_hr_hz", ppg.dsp.min_maternal_hr_hz},
          {"epr_window_s", ppg.dsp.epr_window_s}}}}},
  };
}

/// Overlays user values on the defaults. Objects merge key by key; anything else
/// (numbers, strings, arrays) replaces the default outright.
void merge(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown configuration key '" + path + "'");
    json& slot = base[it.key()];
    if (slot.is_object() && !slot.empty())
      merge(slot, it.value(), path);
    else
      slot = it.value();
  }
}

/// Integral floating values are written as integers so that 20 and 20.0 hash alike.
void canonicalize_numbers(json& j) {
  if (j.is_structured()) {
    for (auto& v : j) canonicalize_numbers(v);
  } else if (j.is_number_float()) {
    const double v = j.get<double>();
    if (std::isfinite(v) && v == std::trunc(v) && std::abs(v) < 9.0e15) j = static_cast<std::int64_t>(v);
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("configuration value '" + where + "." + key + "' has the wrong type");
  }
}

std::vector<double> numbers(const json& j, const char* key, const std::string& where) {
  return get<std::vector<double>>(j, key, where);
}

void require_range(const std::vector<double>& v, const std::string& name) {
  if (v.size() != 2 || !(v[0] <= v[1]))
    throw ConfigError(name + " must be a [low, high] pair");
}

Config from_json(const json& j) {
  Config c;
  c.output_dir = get<std::string>(j, "output_dir", "");

  const json& t = j.at("tissue");
  c.model.wavelengths_nm = numbers(t, "wavelengths_nm", "tissue");
  for (const auto& e : t.at("extinction")) {
    c.extinction.add_molar_decadic(get<double>(e, "wavelength_nm", "tissue.extinction"),
                                   get<double>(e, "eps_hbo_molar", "tissue.extinction"),
                                   get<double>(e, "eps_hhb_molar", "tissue.extinction"));
  }
  for (const auto& e : c.extinction.entries()) {
    if (!(e.eps_hbo > 0.0) || !(e.eps_hhb > 0.0))
      throw ConfigError("extinction coefficients must be positive");
  }
  for (double wl : c.model.wavelengths_nm) {
    if (!c.extinction.contains(wl))
      throw ConfigError("no extinction coefficients for configured wavelength " + std::to_string(wl));
  }

  const json& a = j.at("absorption");
  c.absorption.blood_fraction_each = get<double>(a, "blood_fraction_each", "absorption");
  c.absorption.venous_saturation_factor = get<double>(a, "venous_saturation_factor", "absorption");
  c.absorption.pulsation_delta = get<double>(a, "pulsation_delta", "absorption");
  if (!(c.absorption.blood_fraction_each >= 0.0 && c.absorption.blood_fraction_each <= 0.5))
    throw ConfigError("absorption.blood_fraction_each must lie in [0, 0.5]");
  if (!(c.absorption.venous_saturation_factor >= 0.0 && c.absorption.venous_saturation_factor <= 1.0))
    throw ConfigError("absorption.venous_saturation_factor must lie in [0, 1]");
  if (!(c.absorption.pulsation_delta >= 0.0 && c.absorption.pulsation_delta < 1.0))
    throw ConfigError("absorption.pulsation_delta must lie in [0, 1)");

  const Hemodynamics nominal{};
  for (const auto& l : t.at("layers")) {
    LayerSpec spec;
    try {
      spec.kind = layer_kind_from_string(get<std::string>(l, "kind", "tissue.layers"));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    spec.thickness_mm = l.at("thickness_mm").is_null() ? std::numeric_limits<double>::infinity()
                                                       : get<double>(l, "thickness_mm", "tissue.layers");
    const auto& optics = l.at("optics");
    if (optics.size() != c.model.wavelengths_nm.size())
      throw ConfigError("each layer needs one optics entry per wavelength");
    for (std::size_t w = 0; w < optics.size(); ++w) {
      const auto& o = optics[w];
      OpticalProps op;
      if (o.at("mu_a").is_null()) {
        if (spec.kind != LayerKind::MaternalWall && spec.kind != LayerKind::FetalTissue)
          throw ConfigError("only pulsatile layers may leave mu_a unset");
        op.mu_a = pulsatile_tissue_mu_a(nominal, spec.kind, c.model.wavelengths_nm[w], c.extinction,
                                        c.absorption);
      } else {
        op.mu_a = get<double>(o, "mu_a", "tissue.layers.optics");
      }
      op.mu_s = get<double>(o, "mu_s", "tissue.layers.optics");
      op.g = get<double>(o, "g", "tissue.layers.optics");
      op.n = get<double>(o, "n", "tissue.layers.optics");
      spec.optics.push_back(op);
    }
    c.model.layers.push_back(std::move(spec));
  }

  const json& g = j.at("geometry");
  c.d_m_mm = numbers(g, "d_m_mm", "geometry");
  if (c.d_m_mm.empty()) throw ConfigError("geometry.d_m_mm must list at least one thickness");
  for (double d : c.d_m_mm) {
    if (!(d > 0.0)) throw ConfigError("geometry.d_m_mm entries must be positive");
  }
  c.model.lateral_half_width_mm = get<double>(g, "lateral_half_width_mm", "geometry");
  c.model.volume_depth_mm = get<double>(g, "volume_depth_mm", "geometry");
  c.model.cutoff_factor = get<double>(g, "cutoff_factor", "geometry");
  c.model.source.x_mm = get<double>(g.at("source"), "x_mm", "geometry.source");
  c.model.source.y_mm = get<double>(g.at("source"), "y_mm", "geometry.source");
  const double half_width = get<double>(g.at("rings"), "half_width_mm", "geometry.rings");
  for (double sdd : numbers(g.at("rings"), "sdd_mm", "geometry.rings"))
    c.model.rings.push_back({sdd, half_width});
  if (!c.model.layers.empty()) c.model.layers[0].thickness_mm = c.d_m_mm.front();
  for (double d : c.d_m_mm) c.model.with_maternal_thickness(d).validate();

  const json& s = j.at("simulation");
  c.simulation.photons = get<std::uint64_t>(s, "photons", "simulation");
  c.simulation.seed = get<std::uint64_t>(s, "seed", "simulation");
  c.simulation.workers = get<unsigned>(s, "workers", "simulation");
  if (c.simulation.photons == 0) throw ConfigError("simulation.photons must be >= 1");

  const json& sw = j.at("sweep");
  const json& grid = sw.at("grid");
  c.grid.hb_m = numbers(grid, "hb_m", "sweep.grid");
  c.grid.s_m = numbers(grid, "s_m", "sweep.grid");
  c.grid.hb_f = numbers(grid, "hb_f", "sweep.grid");
  c.grid.s_f = numbers(grid, "s_f", "sweep.grid");
  c.grid.validate();
  c.sweep.selected_sdd_mm = numbers(sw, "selected_sdd_mm", "sweep");
  if (c.sweep.selected_sdd_mm.empty()) throw ConfigError("sweep.selected_sdd_mm is empty");
  c.sweep.smooth = get<bool>(sw, "smooth", "sweep");
  c.sweep.with_ror = get<bool>(sw, "with_ror", "sweep");
  c.sweep.workers = c.simulation.workers;

  const json& n = j.at("noise");
  for (const auto& name : get<std::vector<std::string>>(n, "scenarios", "noise"))
    c.noise_scenarios.push_back(noise_scenario_from_string(name));
  c.noise.bandwidth_hz = get<double>(n, "bandwidth_hz", "noise");
  c.noise.temperature_k = get<double>(n, "temperature_k", "noise");
  c.noise.gain_resistor_ohm = get<double>(n, "gain_resistor_ohm", "noise");
  c.noise.responsivity_a_per_w = get<double>(n, "responsivity_a_per_w", "noise");
  c.noise.source_power_w = get<double>(n, "source_power_w", "noise");
  c.noise.seed = get<std::uint64_t>(n, "seed", "noise");
  c.noise.validate();

  const json& tr = j.at("training");
  c.training.features.clear();
  for (const auto& name : get<std::vector<std::string>>(tr, "features", "training"))
    c.training.features.push_back(feature_kind_from_string(name));
  if (c.training.features.empty()) throw ConfigError("training.features is empty");
  c.training.val_fraction = get<double>(tr, "val_fraction", "training");
  c.training.trials = get<std::size_t>(tr, "trials", "training");
  c.training.folds = get<std::size_t>(tr, "folds", "training");
  c.training.split_seed = get<std::uint64_t>(tr, "split_seed", "training");
  if (!(c.training.val_fraction > 0.0 && c.training.val_fraction < 1.0))
    throw ConfigError("training.val_fraction must lie in (0, 1)");
  if (c.training.trials == 0) throw ConfigError("training.trials must be >= 1");
  if (c.training.folds < 2) throw ConfigError("training.folds must be >= 2");
  const json& m = tr.at("mlp");
  auto& mlp = c.training.mlp;
  mlp.first_hidden = get<std::size_t>(m, "first_hidden", "training.mlp");
  mlp.hidden_override = get<std::vector<std::size_t>>(m, "hidden_override", "training.mlp");
  mlp.batch_norm = get<bool>(m, "batch_norm", "training.mlp");
  mlp.lr = get<double>(m, "lr", "training.mlp");
  mlp.weight_decay = get<double>(m, "weight_decay", "training.mlp");
  mlp.beta1 = get<double>(m, "beta1", "training.mlp");
  mlp.beta2 = get<double>(m, "beta2", "training.mlp");
  mlp.adam_eps = get<double>(m, "adam_eps", "training.mlp");
  mlp.batch_size = get<std::size_t>(m, "batch_size", "training.mlp");
  mlp.max_epochs = get<std::size_t>(m, "max_epochs", "training.mlp");
  mlp.patience = get<std::size_t>(m, "patience", "training.mlp");
  mlp.init_sigma = get<double>(m, "init_sigma", "training.mlp");
  mlp.bn_momentum = get<double>(m, "bn_momentum", "training.mlp");
  mlp.bn_eps = get<double>(m, "bn_eps", "training.mlp");
  mlp.seed = get<std::uint64_t>(m, "seed", "training.mlp");
  mlp.validate();

  const json& p = j.at("ppg");
  auto& pp = c.ppg;
  pp.enabled = get<bool>(p, "enabled", "ppg");
  pp.rounds = get<std::size_t>(p, "rounds", "ppg");
  pp.duration_s = get<double>(p, "duration_s", "ppg");
  pp.control_interval_s = get<double>(p, "control_interval_s", "ppg");
  pp.sample_interval_s = get<double>(p, "sample_interval_s", "ppg");
  pp.s_f_high = numbers(p, "s_f_high", "ppg");
  pp.s_f_low = numbers(p, "s_f_low", "ppg");
  pp.fhr_hz = numbers(p, "fhr_hz", "ppg");
  pp.mhr_hz = numbers(p, "mhr_hz", "ppg");
  pp.mrr_hz = numbers(p, "mrr_hz", "ppg");
  pp.maternal_ac_fraction = get<double>(p, "maternal_ac_fraction", "ppg");
  pp.resp_ac_fraction = get<double>(p, "resp_ac_fraction", "ppg");
  pp.noise_fraction = get<double>(p, "noise_fraction", "ppg");
  pp.nominal.hb_m = get<double>(p.at("nominal"), "hb_m", "ppg.nominal");
  pp.nominal.s_m = get<double>(p.at("nominal"), "s_m", "ppg.nominal");
  pp.nominal.hb_f = get<double>(p.at("nominal"), "hb_f", "ppg.nominal");
  pp.seed = get<std::uint64_t>(p, "seed", "ppg");
  const json& d = p.at("dsp");
  pp.dsp.fs_raw_hz = get<double>(d, "fs_raw_hz", "ppg.dsp");
  pp.dsp.fs_demod_hz = get<double>(d, "fs_demod_hz", "ppg.dsp");
  pp.dsp.carrier_hz = numbers(d, "carrier_hz", "ppg.dsp");
  pp.dsp.demod_cutoff_hz = get<double>(d, "demod_cutoff_hz", "ppg.dsp");
  pp.dsp.demod_transition_hz = get<double>(d, "demod_transition_hz", "ppg.dsp");
  pp.dsp.lockin_cutoff_hz = get<double>(d, "lockin_cutoff_hz", "ppg.dsp");
  pp.dsp.lockin_transition_hz = get<double>(d, "lockin_transition_hz", "ppg.dsp");
  pp.dsp.min_maternal_hr_hz = get<double>(d, "min_maternal_hr_hz", "ppg.dsp");
  pp.dsp.epr_window_s = get<double>(d, "epr_window_s", "ppg.dsp");
  pp.dsp.validate();
  if (pp.dsp.carrier_hz.size() != c.model.wavelengths_nm.size())
    throw ConfigError("ppg.dsp.carrier_hz needs one carrier per wavelength");
  for (const auto* r : {&pp.s_f_high, &pp.s_f_low, &pp.fhr_hz, &pp.mhr_hz, &pp.mrr_hz})
    require_range(*r, "ppg rate and saturation ranges");
  if (pp.s_f_low[0] < 0.0 || pp.s_f_high[1] > 1.0) throw ConfigError("ppg saturations must lie in [0, 1]");
  if (pp.fhr_hz[0] < 1.5 || pp.fhr_hz[1] > 3.5) throw ConfigError("ppg.fhr_hz must lie in [1.5, 3.5]");
  if (pp.mhr_hz[0] < 1.1 || pp.mhr_hz[1] > 2.0) throw ConfigError("ppg.mhr_hz must lie in [1.1, 2.0]");
  if (pp.mrr_hz[0] < 0.2 || pp.mrr_hz[1] > 0.33) throw ConfigError("ppg.mrr_hz must lie in [0.2, 0.33]");
  if (pp.enabled) {
    if (pp.rounds == 0) throw ConfigError("ppg.rounds must be >= 1");
    if (!(pp.control_interval_s > 0.0) || !(pp.sample_interval_s > 0.0))
      throw ConfigError("ppg intervals must be positive");
    if (!(pp.duration_s > pp.dsp.epr_window_s + pp.sample_interval_s * static_cast<double>(c.training.folds)))
      throw ConfigError("ppg.duration_s is too short for the EPR window and the temporal folds");
  }
  for (double f : {pp.maternal_ac_fraction, pp.resp_ac_fraction, pp.noise_fraction}) {
    if (!(f >= 0.0)) throw ConfigError("ppg amplitude fractions must be >= 0");
  }
  return c;
}

}  // namespace

std::uint64_t Config::section_hash(const std::string& section) const {
  const auto it = canonical.find(section);
  if (it == canonical.end()) throw UsageError("no configuration section '" + section + "'");
  return Fnv1a().str(section).str(it->second).value();
}

std::uint64_t Config::hash() const {
  Fnv1a h;
  for (const auto& [name, text] : canonical) h.str(name).str(text);
  return h.value();
}

Config parse_config(const std::string& json_text) {
  json user;
  try {
    user = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  if (!user.is_object()) throw ConfigError("configuration must be a JSON object");
  if (!user.contains("format_version")) throw ConfigError("configuration lacks format_version");
  if (!user["format_version"].is_number_integer() ||
      user["format_version"].get<int>() != kConfigFormatVersion)
    throw ConfigError("unsupported configuration format_version (expected " +
                      std::to_string(kConfigFormatVersion) + ")");

  json full = defaults();
  merge(full, user, "");
  Config c;
  try {
    c = from_json(full);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  for (auto it = full.begin(); it != full.end(); ++it) {
    if (it.key() == "format_version" || it.key() == "output_dir") continue;
    json section = it.value();
    if (it.key() == "simulation") section.erase("workers");
    canonicalize_numbers(section);
    c.canonical[it.key()] = section.dump();
  }
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str());
}

std::string default_config_json() { return defaults().dump(2) + "\n"; }

}  // namespace tfo
