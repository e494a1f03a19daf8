#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace tfo {

/// Linear-phase low-pass FIR (Blackman-windowed sinc), odd length, unit DC gain.
std::vector<double> design_lowpass(double cutoff_hz, double fs_hz, double transition_hz);

/// Zero-phase FIR filtering evaluated at samples 0, step, 2*step, ... of x. Near the
/// edges the taps that fall outside x are dropped and the rest renormalised, so constant
/// inputs stay constant all the way to the ends.
std::vector<double> filter_decimate(const std::vector<double>& x, const std::vector<double>& taps,
                                    std::size_t step = 1);

struct PpgSettings {
  double fs_raw_hz = 8000.0;
  double fs_demod_hz = 80.0;
  std::vector<double> carrier_hz{690.0, 940.0};
  double demod_cutoff_hz = 6.0;
  double demod_transition_hz = 3.0;
  double lockin_cutoff_hz = 0.1;
  double lockin_transition_hz = 0.1;
  /// Lower-envelope window: one period of the slowest maternal pulse.
  double min_maternal_hr_hz = 1.1;
  double epr_window_s = 90.0;

  void validate() const;
};

/// Physiological rates. fhr_hz is sampled at fhr_fs_hz and linearly interpolated.
struct PhysioParams {
  std::vector<double> fhr_hz{2.3};
  double fhr_fs_hz = 1.0;
  double mhr_hz = 1.3;
  double mrr_hz = 0.25;
};

/// Baseband components of one wavelength at one detector. dc and fetal_ac are sampled
/// at control_fs_hz (a single value means constant). The fetal pulse swings between
/// dc (systole trough) and dc + 2 fetal_ac (diastole peak).
struct ChannelAmplitudes {
  std::vector<double> dc{1.0};
  std::vector<double> fetal_ac{0.0};
  double control_fs_hz = 1.0;
  double maternal_ac = 0.0;
  double resp_ac = 0.0;
  double noise_sigma = 0.0;
};

/// Multi-channel time series with a shared sampling rate.
struct PpgRecord {
  double fs_hz = 0.0;
  std::vector<std::string> names;
  std::vector<std::vector<double>> channels;

  std::size_t n_samples() const { return channels.empty() ? 0 : channels.front().size(); }
  double duration_s() const { return static_cast<double>(n_samples()) / fs_hz; }
  const std::vector<double>& channel(const std::string& name) const;
};

/// Instantaneous FHR at every sample of a grid with rate fs_hz, clamped to [1.5, 3.5] Hz
/// (with a warning when clamping happens).
std::vector<double> resample_fhr(const PhysioParams& physio, double fs_hz, std::size_t n);

/// Cumulative fetal pulse phase (radians) on a grid with rate fs_hz.
std::vector<double> fetal_phase(const std::vector<double>& fhr_at_samples, double fs_hz);

/// Raw modulated PPG at fs_raw: for each detector the wavelength basebands, each gated by
/// a 50%-duty square-wave carrier, are summed. amplitudes[detector][wavelength].
/// Channels are named "det1".."detN" followed by the ground-truth "fhr" channel.
PpgRecord synthesize_ppg(const std::vector<std::vector<ChannelAmplitudes>>& amplitudes,
                         const PhysioParams& physio, double duration_s, std::uint64_t seed,
                         const PpgSettings& settings = {});

/// Synchronous demodulation of each "det*" channel against each carrier's fundamental,
/// low-pass filtered and decimated to fs_demod. Output channels "det{d}_w{w}" plus the
/// decimated "fhr" channel when present. Calibrated so that a constant baseband c
/// returns c.
PpgRecord demodulate(const PpgRecord& raw, const PpgSettings& settings = {});

/// Lower envelope from the minima of consecutive windows one maternal period long,
/// linearly interpolated and held flat before the first and after the last minimum.
std::vector<double> lower_envelope(const std::vector<double>& x, double fs_hz,
                                   double window_s);

/// Lock-in amplitude of the component at the instantaneous FHR: I/Q mixing against the
/// cumulative fetal phase, low-pass, then 2 sqrt(I^2 + Q^2).
std::vector<double> lock_in(const std::vector<double>& x, const std::vector<double>& fhr_hz,
                            double fs_hz, const PpgSettings& settings = {});

struct EprSeries {
  std::vector<double> epr;
  /// Samples whose DC was not positive; they were replaced by interpolation.
  std::size_t gap_samples = 0;
};

/// Pointwise (2 AC + DC) / DC followed by a centred moving average of window_s seconds
/// (the window shrinks at the edges).
EprSeries epr_series(const std::vector<double>& ac, const std::vector<double>& dc, double fs_hz,
                     double window_s);

/// Centred moving average; the window shrinks symmetrically near the edges.
std::vector<double> centered_moving_average(const std::vector<double>& x, std::size_t window);

struct ChannelEpr {
  std::string name;
  std::vector<double> ac;
  std::vector<double> dc;
  EprSeries epr;
};

/// Envelope, lock-in and EPR for every demodulated "det*_w*" channel of a record that
/// also carries an "fhr" channel.
std::vector<ChannelEpr> extract_epr(const PpgRecord& demod, const PpgSettings& settings = {});

/// Binary waveform file: magic "TFOPPG\0\1", u32 version, f64 fs, u32 n_channels,
/// per channel u32 name length + bytes, u64 n_samples, then channel-major f64 samples.
void write_ppg(const std::string& path, const PpgRecord& rec);
PpgRecord read_ppg(const std::string& path);
void write_ppg_csv(const std::string& path, const PpgRecord& rec);

}  // namespace tfo
