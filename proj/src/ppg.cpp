#include "tfo/ppg.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numbers>

#include "tfo/dataset.hpp"
#include "tfo/errors.hpp"
#include "tfo/rng.hpp"

namespace tfo {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kFhrMin = 1.5;
constexpr double kFhrMax = 3.5;

double interpolate(const std::vector<double>& v, double pos) {
  if (v.size() == 1 || pos <= 0.0) return v.front();
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= v.size()) return v.back();
  const double f = pos - static_cast<double>(i);
  return v[i] + f * (v[i + 1] - v[i]);
}

bool square_on(double f_hz, double fs_hz, std::size_t n) {
  const double cycles = f_hz * static_cast<double>(n) / fs_hz;
  return cycles - std::floor(cycles) < 0.5;
}

double carrier_gain(double f_hz, double fs_hz) {
  // Mean of carrier * reference over whole periods; 10 s spans an integer number of
  // common periods for carriers on a 0.1 Hz grid.
  const auto n = static_cast<std::size_t>(std::llround(10.0 * fs_hz));
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (square_on(f_hz, fs_hz, i)) acc += std::sin(kTwoPi * f_hz * static_cast<double>(i) / fs_hz);
  }
  return static_cast<double>(n) / acc;
}

std::size_t decimation_step(const PpgSettings& s) {
  const double ratio = s.fs_raw_hz / s.fs_demod_hz;
  const auto step = static_cast<std::size_t>(std::llround(ratio));
  if (step == 0 || std::abs(ratio - static_cast<double>(step)) > 1e-9)
    throw ConfigError("raw rate must be an integer multiple of the demodulated rate");
  return step;
}

}  // namespace

std::vector<double> design_lowpass(double cutoff_hz, double fs_hz, double transition_hz) {
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < fs_hz / 2.0))
    throw ConfigError("low-pass cutoff must lie in (0, fs/2)");
  if (!(transition_hz > 0.0)) throw ConfigError("transition width must be > 0");
  auto n = static_cast<std::size_t>(std::ceil(5.5 * fs_hz / transition_hz));
  n |= 1u;
  const double m = static_cast<double>(n - 1) / 2.0;
  const double fc = cutoff_hz / fs_hz;
  std::vector<double> h(n);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double x = static_cast<double>(k) - m;
    const double sinc = x == 0.0 ? 2.0 * fc : std::sin(kTwoPi * fc * x) / (std::numbers::pi * x);
    const double a = kTwoPi * static_cast<double>(k) / static_cast<double>(n - 1);
    const double window = 0.42 - 0.5 * std::cos(a) + 0.08 * std::cos(2.0 * a);
    h[k] = sinc * window;
    h[n - 1 - k] = h[k];
  }
  double sum = 0.0;
  for (double v : h) sum += v;
  for (double& v : h) v /= sum;
  return h;
}

std::vector<double> filter_decimate(const std::vector<double>& x, const std::vector<double>& taps,
                                    std::size_t step) {
  if (step == 0) throw DomainError("decimation step must be >= 1");
  const auto half = static_cast<std::ptrdiff_t>(taps.size() / 2);
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> y;
  y.reserve((x.size() + step - 1) / step);
  for (std::ptrdiff_t c = 0; c < n; c += static_cast<std::ptrdiff_t>(step)) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, c - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, c + half);
    double acc = 0.0;
    double wsum = 0.0;
    const bool full = lo == c - half && hi == c + half;
    for (std::ptrdiff_t i = lo; i <= hi; ++i) {
      const double h = taps[static_cast<std::size_t>(i - c + half)];
      acc += h * x[static_cast<std::size_t>(i)];
      if (!full) wsum += h;
    }
    y.push_back(full ? acc : acc / wsum);
  }
  return y;
}

void PpgSettings::validate() const {
  if (!(fs_raw_hz > 0.0) || !(fs_demod_hz > 0.0)) throw ConfigError("sampling rates must be > 0");
  decimation_step(*this);
  if (carrier_hz.empty()) throw ConfigError("no carrier frequencies configured");
  for (double f : carrier_hz) {
    if (!(f > 0.0) || f >= fs_raw_hz / 2.0)
      throw ConfigError("carrier frequency must lie below half the raw sampling rate");
  }
  if (!(demod_cutoff_hz < fs_demod_hz / 2.0 + demod_transition_hz))
    throw ConfigError("demodulation cutoff too high for the output rate");
  if (!(min_maternal_hr_hz > 0.0)) throw ConfigError("maternal heart-rate floor must be > 0");
  if (!(epr_window_s > 0.0)) throw ConfigError("EPR window must be > 0");
}

const std::vector<double>& PpgRecord::channel(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw DataError("record has no channel '" + name + "'");
  return channels[static_cast<std::size_t>(it - names.begin())];
}

std::vector<double> resample_fhr(const PhysioParams& physio, double fs_hz, std::size_t n) {
  if (physio.fhr_hz.empty()) throw ConfigError("empty FHR series");
  if (!(physio.fhr_fs_hz > 0.0)) throw ConfigError("FHR series rate must be > 0");
  std::vector<double> out(n);
  bool clamped = false;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = interpolate(physio.fhr_hz, static_cast<double>(i) / fs_hz * physio.fhr_fs_hz);
    out[i] = std::clamp(v, kFhrMin, kFhrMax);
    clamped = clamped || out[i] != v;
  }
  if (clamped) std::cerr << "warning: FHR outside [1.5, 3.5] Hz was clamped\n";
  return out;
}

std::vector<double> fetal_phase(const std::vector<double>& fhr_at_samples, double fs_hz) {
  std::vector<double> phase(fhr_at_samples.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < phase.size(); ++i) {
    phase[i] = acc;
    acc += kTwoPi * fhr_at_samples[i] / fs_hz;
  }
  return phase;
}

PpgRecord synthesize_ppg(const std::vector<std::vector<ChannelAmplitudes>>& amplitudes,
                         const PhysioParams& physio, double duration_s, std::uint64_t seed,
                         const PpgSettings& settings) {
  settings.validate();
  if (!(duration_s > 0.0)) throw ConfigError("PPG duration must be > 0");
  const std::size_t nw = settings.carrier_hz.size();
  for (const auto& det : amplitudes) {
    if (det.size() != nw) throw ConfigError("each detector needs one amplitude set per carrier");
    for (const auto& a : det) {
      if (a.dc.empty() || a.fetal_ac.empty()) throw ConfigError("empty amplitude series");
      if (!(a.control_fs_hz > 0.0)) throw ConfigError("amplitude control rate must be > 0");
      if (a.maternal_ac < 0.0 || a.resp_ac < 0.0 || a.noise_sigma < 0.0)
        throw ConfigError("amplitudes must be >= 0");
      for (double v : a.fetal_ac)
        if (v < 0.0) throw ConfigError("amplitudes must be >= 0");
    }
  }

  const double fs = settings.fs_raw_hz;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));
  const auto fhr = resample_fhr(physio, fs, n);
  const auto phase = fetal_phase(fhr, fs);

  PpgRecord rec;
  rec.fs_hz = fs;
  for (std::size_t d = 0; d < amplitudes.size(); ++d) {
    RngStream rng(seed, d, rng_domain::kPpg);
    std::vector<double> raw(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / fs;
      double sample = 0.0;
      for (std::size_t w = 0; w < nw; ++w) {
        const auto& a = amplitudes[d][w];
        const double ctl = t * a.control_fs_hz;
        double base = interpolate(a.dc, ctl) + interpolate(a.fetal_ac, ctl) * (1.0 - std::cos(phase[i])) +
                      a.maternal_ac * std::sin(kTwoPi * physio.mhr_hz * t) +
                      a.resp_ac * std::sin(kTwoPi * physio.mrr_hz * t);
        if (a.noise_sigma > 0.0) base += a.noise_sigma * rng.normal();
        if (square_on(settings.carrier_hz[w], fs, i)) sample += base;
      }
      raw[i] = sample;
    }
    rec.names.push_back("det" + std::to_string(d + 1));
    rec.channels.push_back(std::move(raw));
  }
  rec.names.push_back("fhr");
  rec.channels.push_back(fhr);
  return rec;
}

PpgRecord demodulate(const PpgRecord& raw, const PpgSettings& settings) {
  settings.validate();
  if (std::abs(raw.fs_hz - settings.fs_raw_hz) > 1e-9)
    throw DataError("raw record rate does not match the configured raw rate");
  const std::size_t step = decimation_step(settings);
  const auto taps = design_lowpass(settings.demod_cutoff_hz, settings.fs_raw_hz,
                                   settings.demod_transition_hz);
  std::vector<double> gains;
  for (double f : settings.carrier_hz) gains.push_back(carrier_gain(f, settings.fs_raw_hz));

  PpgRecord out;
  out.fs_hz = settings.fs_demod_hz;
  const std::size_t n = raw.n_samples();
  std::vector<double> mixed(n);
  for (std::size_t c = 0; c < raw.names.size(); ++c) {
    const auto& name = raw.names[c];
    const auto& x = raw.channels[c];
    if (name == "fhr") continue;
    if (name.rfind("det", 0) != 0) throw DataError("unexpected raw channel '" + name + "'");
    for (std::size_t w = 0; w < settings.carrier_hz.size(); ++w) {
      const double f = settings.carrier_hz[w];
      for (std::size_t i = 0; i < n; ++i)
        mixed[i] = x[i] * std::sin(kTwoPi * f * static_cast<double>(i) / settings.fs_raw_hz);
      auto y = filter_decimate(mixed, taps, step);
      for (double& v : y) v *= gains[w];
      out.names.push_back(name + "_w" + std::to_string(w + 1));
      out.channels.push_back(std::move(y));
    }
  }
  const auto fhr_it = std::find(raw.names.begin(), raw.names.end(), "fhr");
  if (fhr_it != raw.names.end()) {
    const auto& fhr = raw.channels[static_cast<std::size_t>(fhr_it - raw.names.begin())];
    std::vector<double> dec;
    for (std::size_t i = 0; i < n; i += step) dec.push_back(fhr[i]);
    out.names.push_back("fhr");
    out.channels.push_back(std::move(dec));
  }
  return out;
}

std::vector<double> lower_envelope(const std::vector<double>& x, double fs_hz, double window_s) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(window_s * fs_hz)));
  std::vector<std::size_t> anchors;
  for (std::size_t b = 0; b < n; b += w) {
    const auto first = x.begin() + static_cast<std::ptrdiff_t>(b);
    const auto last = x.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + w));
    anchors.push_back(static_cast<std::size_t>(std::min_element(first, last) - x.begin()));
  }
  std::vector<double> env(n);
  for (std::size_t i = 0; i <= anchors.front(); ++i) env[i] = x[anchors.front()];
  for (std::size_t k = 0; k + 1 < anchors.size(); ++k) {
    const std::size_t a = anchors[k];
    const std::size_t b = anchors[k + 1];
    for (std::size_t i = a; i <= b; ++i) {
      const double f = static_cast<double>(i - a) / static_cast<double>(b - a);
      env[i] = x[a] + f * (x[b] - x[a]);
    }
  }
  for (std::size_t i = anchors.back(); i < n; ++i) env[i] = x[anchors.back()];
  return env;
}

std::vector<double> lock_in(const std::vector<double>& x, const std::vector<double>& fhr_hz,
                            double fs_hz, const PpgSettings& settings) {
  if (x.size() != fhr_hz.size()) throw DataError("signal and FHR series differ in length");
  std::vector<double> fhr = fhr_hz;
  bool clamped = false;
  for (double& f : fhr) {
    const double c = std::clamp(f, kFhrMin, kFhrMax);
    clamped = clamped || c != f;
    f = c;
  }
  if (clamped) std::cerr << "warning: FHR outside [1.5, 3.5] Hz was clamped\n";
  const auto phase = fetal_phase(fhr, fs_hz);
  const auto taps = design_lowpass(settings.lockin_cutoff_hz, fs_hz, settings.lockin_transition_hz);
  std::vector<double> in_phase(x.size());
  std::vector<double> quad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    in_phase[i] = x[i] * std::sin(phase[i]);
    quad[i] = x[i] * std::cos(phase[i]);
  }
  const auto i_lp = filter_decimate(in_phase, taps);
  const auto q_lp = filter_decimate(quad, taps);
  std::vector<double> amp(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) amp[i] = 2.0 * std::hypot(i_lp[i], q_lp[i]);
  return amp;
}

std::vector<double> centered_moving_average(const std::vector<double>& x, std::size_t window) {
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  const std::size_t half = window / 2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t h = std::min({half, i, n - 1 - i});
    const double sum = prefix[i + h + 1] - prefix[i - h];
    out[i] = sum / static_cast<double>(2 * h + 1);
  }
  return out;
}

EprSeries epr_series(const std::vector<double>& ac, const std::vector<double>& dc, double fs_hz,
                     double window_s) {
  if (ac.size() != dc.size()) throw DataError("AC and DC series differ in length");
  const std::size_t n = ac.size();
  EprSeries out;
  std::vector<double> raw(n);
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < n; ++i) {
    if (dc[i] > 0.0 && std::isfinite(ac[i])) {
      raw[i] = (2.0 * ac[i] + dc[i]) / dc[i];
      valid.push_back(i);
    }
  }
  if (valid.empty() && n > 0) throw DataError("no sample has a positive DC level");
  out.gap_samples = n - valid.size();
  if (out.gap_samples > 0) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      while (k + 1 < valid.size() && valid[k + 1] <= i) ++k;
      if (valid[k] == i) continue;
      if (i < valid.front()) {
        raw[i] = raw[valid.front()];
      } else if (k + 1 >= valid.size()) {
        raw[i] = raw[valid.back()];
      } else {
        const std::size_t a = valid[k];
        const std::size_t b = valid[k + 1];
        const double f = static_cast<double>(i - a) / static_cast<double>(b - a);
        raw[i] = raw[a] + f * (raw[b] - raw[a]);
      }
    }
    std::cerr << "warning: " << out.gap_samples << " samples with non-positive DC interpolated\n";
  }
  const auto window = static_cast<std::size_t>(std::llround(window_s * fs_hz));
  out.epr = centered_moving_average(raw, std::max<std::size_t>(1, window));
  return out;
}

std::vector<ChannelEpr> extract_epr(const PpgRecord& demod, const PpgSettings& settings) {
  const auto& fhr = demod.channel("fhr");
  std::vector<ChannelEpr> out;
  for (std::size_t c = 0; c < demod.names.size(); ++c) {
    if (demod.names[c] == "fhr") continue;
    ChannelEpr ch;
    ch.name = demod.names[c];
    const auto& x = demod.channels[c];
    ch.dc = lower_envelope(x, demod.fs_hz, 1.0 / settings.min_maternal_hr_hz);
    ch.ac = lock_in(x, fhr, demod.fs_hz, settings);
    ch.epr = epr_series(ch.ac, ch.dc, demod.fs_hz, settings.epr_window_s);
    out.push_back(std::move(ch));
  }
  return out;
}

namespace {

constexpr std::array<char, 8> kPpgMagic = {'T', 'F', 'O', 'P', 'P', 'G', '\0', '\1'};
constexpr std::uint32_t kPpgVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("truncated waveform file '" + path + "'");
  return v;
}

}  // namespace

void write_ppg(const std::string& path, const PpgRecord& rec) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(kPpgMagic.data(), kPpgMagic.size());
  put(out, kPpgVersion);
  put(out, rec.fs_hz);
  put(out, static_cast<std::uint32_t>(rec.names.size()));
  for (const auto& name : rec.names) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  put(out, static_cast<std::uint64_t>(rec.n_samples()));
  for (const auto& ch : rec.channels) {
    if (ch.size() != rec.n_samples()) throw DataError("channels differ in length");
    out.write(reinterpret_cast<const char*>(ch.data()),
              static_cast<std::streamsize>(ch.size() * sizeof(double)));
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

PpgRecord read_ppg(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open waveform file '" + path + "'");
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kPpgMagic) throw DataError("'" + path + "' is not a waveform file");
  if (get<std::uint32_t>(in, path) != kPpgVersion) throw DataError("unsupported waveform version");
  PpgRecord rec;
  rec.fs_hz = get<double>(in, path);
  const auto nc = get<std::uint32_t>(in, path);
  for (std::uint32_t c = 0; c < nc; ++c) {
    const auto len = get<std::uint32_t>(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    rec.names.push_back(std::move(name));
  }
  const auto ns = get<std::uint64_t>(in, path);
  for (std::uint32_t c = 0; c < nc; ++c) {
    std::vector<double> ch(ns);
    in.read(reinterpret_cast<char*>(ch.data()), static_cast<std::streamsize>(ns * sizeof(double)));
    if (!in) throw DataError("truncated waveform file '" + path + "'");
    rec.channels.push_back(std::move(ch));
  }
  return rec;
}

void write_ppg_csv(const std::string& path, const PpgRecord& rec) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "# fs_hz: " << format_double(rec.fs_hz) << "\n";
  out << "time_s";
  for (const auto& name : rec.names) out << "," << name;
  out << "\n";
  for (std::size_t i = 0; i < rec.n_samples(); ++i) {
    out << format_double(static_cast<double>(i) / rec.fs_hz);
    for (const auto& ch : rec.channels) out << "," << format_double(ch[i]);
    out << "\n";
  }
}

}  // namespace tfo
