#pragma once

#include "clockecho/trace.hpp"

#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace clockecho {

enum class DecayModel { mono, stretched };

// I(t) = I0 exp[-(t/T_m)^x] + baseline with t = 2 tau. The baseline is 0
// unless requested from fit_decay.
struct DecayFit {
  DecayModel model = DecayModel::stretched;
  double I0 = 0.0;
  double T_m = 0.0;  // s
  double x = 1.0;
  double baseline = 0.0;
  double residual_norm = 0.0;  // ||data - fit||_2
  int evaluations = 0;
  bool no_decay = false;  // T_m beyond 10x the observation window

  double eval(double t) const;
};

struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Levenberg-Marquardt on the trace against t = 2 tau. Needs >= 20 samples.
// Starts from I0 = first sample, T_m = first time the trace falls to 1/e of
// its range, x = 1. A trace with no measurable variation, or a fit whose T_m
// exceeds ten times the window, is reported with no_decay set and
// T_m >= 10 * window. with_baseline adds a constant floor, which a finite
// bath leaves behind once the decaying part is gone.
DecayFit fit_decay(const EchoTrace& trace, DecayModel model = DecayModel::stretched,
                   bool with_baseline = false);

// Samples at least as large as every later sample: the echo maxima seen from the end of
// the trace. The grid is no longer uniform. Deep ESEEM leaves the raw trace near
// zero between maxima, so T_m is fitted to this envelope instead.
EchoTrace upper_envelope(const EchoTrace& trace);

// The sentinel fit_decay returns for a flat trace: I0 = mean, no_decay set,
// T_m = 10 * window (s, on the 2 tau axis).
DecayFit no_decay_fit(const EchoTrace& trace, DecayModel model, double window);

// trace - fit, sample by sample.
EchoTrace subtract_background(const EchoTrace& trace, const DecayFit& fit);

enum class SpectrumMode { experimental, simulation };

struct Peak {
  double frequency = 0.0;  // Hz
  double amplitude = 0.0;
  std::string label;
};

struct SpectrumOptions {
  double cutoff = 12e6;            // simulation mode low-pass, Hz (clamped to Nyquist)
  int padding_factor = 2;          // experimental mode: FFT length = factor * samples
  int smoothing_points = 5;        // experimental mode moving average
  int simulation_smoothing = 1;    // simulation mode moving average, after the low-pass
  double peak_threshold = 0.1;     // fraction of the largest non-DC amplitude
  double min_frequency = 0.0;      // Hz, peaks below this are not searched
  double min_prominence = 0.0;     // fraction of the largest amplitude, 0 keeps every maximum
  bool background_baseline = false;  // simulation mode: fit the background with a floor
};

struct Spectrum {
  std::vector<double> frequency;  // Hz, k / (n_fft * tau_step)
  std::vector<double> amplitude;
  SpectrumMode mode = SpectrumMode::simulation;
  int padding_factor = 1;
  int smoothing_points = 1;
  double cutoff = 0.0;     // Hz, 0 when no low-pass applied
  double bin_width = 0.0;  // Hz
  double peak_floor = 0.0; // Hz, lowest frequency searched for peaks
  std::vector<Peak> peaks;
};

// Unnormalized r2c transform of samples zero-padded to n_fft (n_fft/2+1 bins).
std::vector<std::complex<double>> complex_transform(std::span<const double> samples, int n_fft);

// Magnitude FFT against the delay tau, so two-pulse ESEEM lines cos(w tau)
// appear at their physical frequencies.
//   experimental: zero pad to padding_factor x length, then a centered
//                 smoothing_points moving average of the magnitude.
//   simulation:   subtract a stretched-exponential fit, drop every bin above
//                 the cutoff, then a simulation_smoothing moving average.
// The peak list is filled with find_peaks at options.peak_threshold.
Spectrum spectrum(const EchoTrace& trace, SpectrumMode mode, const SpectrumOptions& options = {});

// Local maxima above threshold_fraction of the largest amplitude, both taken
// over bins above s.peak_floor (the DC bin is always excluded), refined by a
// 3-point parabola, sorted by frequency. A maximum whose prominence (height
// above the higher of the lowest points reached on either side before a taller
// sample) is below min_prominence times the largest amplitude is dropped, so a
// rippled band yields one peak.
std::vector<Peak> find_peaks(const Spectrum& s, double threshold_fraction = 0.1,
                             double min_prominence = 0.0);

struct HyperfineEstimate {
  double A_eff = 0.0;   // Hz, unsigned
  double lower = 0.0;   // Hz, the two nuclear lines
  double upper = 0.0;
  // +1 when the upper line is the stronger one, -1 when the lower one is,
  // 0 when the pair has merged.
  int orientation = 0;
  bool merged = false;
};

// The two strongest peaks are taken as the nuclear lines w_a < w_b of the two
// electron manifolds; the difference and sum lines are weaker. With
// w_a,b^2 = (nu_H -+ A/2)^2 + (B/2)^2 the secular part follows as
//   A_eff = (w_b^2 - w_a^2) / (2 nu_H),
// which is upper - lower for a pair placed symmetrically about nu_H and stays
// valid when A/2 exceeds nu_H. A strongest peak within bin_width of nu_H, or
// a pair closer than bin_width, is a merged pair with A_eff = 0.
// Throws std::invalid_argument with no peaks or a lone peak away from nu_H.
HyperfineEstimate effective_hyperfine(std::span<const Peak> peaks, double nu_H,
                                      double bin_width = 0.0);

// (max - min) of the residual over t = 2 tau in [t_lo, t_hi], divided by the
// background at the window midpoint.
double modulation_depth(const EchoTrace& residual, const DecayFit& background, double t_lo,
                        double t_hi);

struct PeakMapEntry {
  double B0 = 0.0;  // T
  double frequency = 0.0;
  double amplitude = 0.0;
  // "nu_H-A_eff/2" and "nu_H+A_eff/2" for the nuclear lines, "nu_H" for a
  // merged pair, "A_eff" for their difference line, "2nu_H" near 2 nu_H or
  // the sum of the pair, or ""
  std::string label;
};

struct PeakMapField {
  double B0 = 0.0;
  double nu_H = 0.0;
  double A_eff = 0.0;  // signed
  bool merged = false;
};

struct PeakMap {
  std::vector<PeakMapEntry> entries;
  std::vector<PeakMapField> fields;
};

// Labels the peaks of each spectrum against the nu_H and 2 nu_H guides.
// A_eff is signed: the pair crosses once, negative below the crossing and
// positive from it upward. The crossing is put where the signed values come
// closest to a straight line in B0. Fields without an estimate report 0.
PeakMap peak_map(std::span<const Spectrum> spectra, std::span<const double> B0, double gamma_H);

std::string to_string(SpectrumMode m);
SpectrumMode spectrum_mode_from_string(const std::string& s);
std::string to_string(DecayModel m);
DecayModel decay_model_from_string(const std::string& s);

}  // namespace clockecho
