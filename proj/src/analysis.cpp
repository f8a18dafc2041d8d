#include "clockecho/analysis.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>

namespace clockecho {

namespace {

constexpr double kXCenter = 1.75;  // x = 1.75 + 1.25 tanh(u) keeps x in [0.5, 3]
constexpr double kXHalf = 1.25;

std::vector<double> echo_times(const EchoTrace& t) {
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = t.echo_time(i);
  return out;
}

struct DecayFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const std::vector<double>& t;
  const std::vector<double>& y;
  bool stretched;
  bool baseline;

  int inputs() const { return 2 + (stretched ? 1 : 0) + (baseline ? 1 : 0); }
  Eigen::Index baseline_index() const { return stretched ? 3 : 2; }
  double offset(const Eigen::VectorXd& p) const { return baseline ? p(baseline_index()) : 0.0; }
  int values() const { return static_cast<int>(t.size()); }

  double exponent(const Eigen::VectorXd& p) const {
    return stretched ? kXCenter + kXHalf * std::tanh(p(2)) : 1.0;
  }

  int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r) const {
    const double x = exponent(p);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double z = std::exp(x * (std::log(t[i]) - p(1)));
      r(static_cast<Eigen::Index>(i)) = p(0) * std::exp(-z) + offset(p) - y[i];
    }
    return 0;
  }

  int df(const Eigen::VectorXd& p, Eigen::MatrixXd& J) const {
    const double x = exponent(p);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      const double lt = std::log(t[i]) - p(1);
      const double z = std::exp(x * lt);
      const double e = std::exp(-z);
      J(k, 0) = e;
      J(k, 1) = p(0) * e * z * x;
      if (stretched) {
        const double th = std::tanh(p(2));
        J(k, 2) = -p(0) * e * z * lt * kXHalf * (1.0 - th * th);
      }
      if (baseline) J(k, baseline_index()) = 1.0;
    }
    return 0;
  }
};

DecayFit flat_fit(DecayModel model, const std::vector<double>& y, double window) {
  DecayFit f;
  f.model = model;
  f.baseline = 0.0;
  f.I0 = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  f.T_m = 10.0 * window;
  f.x = 1.0;
  f.no_decay = true;
  double r = 0.0;
  for (double v : y) r += (v - f.eval(0.0)) * (v - f.eval(0.0));
  f.residual_norm = std::sqrt(r);
  return f;
}

}  // namespace

double DecayFit::eval(double t) const {
  if (no_decay) return I0 + baseline;
  return I0 * std::exp(-std::pow(t / T_m, x)) + baseline;
}

DecayFit no_decay_fit(const EchoTrace& trace, DecayModel model, double window) {
  if (trace.size() == 0) throw std::invalid_argument("no_decay_fit: empty trace");
  return flat_fit(model, trace.intensity, window);
}

DecayFit fit_decay(const EchoTrace& trace, DecayModel model, bool with_baseline) {
  if (trace.size() < 20) throw std::invalid_argument("fit_decay: need at least 20 samples");
  if (trace.intensity.size() != trace.size())
    throw std::invalid_argument("fit_decay: tau and intensity lengths differ");
  const std::vector<double> t = echo_times(trace);
  const std::vector<double>& y = trace.intensity;
  const double window = t.back();

  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double range = *hi - *lo;
  const double scale = std::max(std::abs(*hi), std::abs(*lo));
  if (range <= 1e-13 || range <= 1e-9 * scale) return flat_fit(model, y, window);

  // time at which the trace first drops to 1/e of its range above the minimum
  const double level = *lo + (y.front() - *lo) / std::exp(1.0);
  double t_e = window;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] <= level) {
      t_e = t[i];
      break;
    }

  const bool stretched = model == DecayModel::stretched;
  DecayFunctor fn{t, y, stretched, with_baseline};
  Eigen::VectorXd p(fn.inputs());
  p(0) = y.front();
  p(1) = std::log(t_e);
  if (stretched) p(2) = std::atanh((1.0 - kXCenter) / kXHalf);
  if (with_baseline) {
    p(fn.baseline_index()) = y.back();
    p(0) = y.front() - y.back();
  }

  Eigen::LevenbergMarquardt<DecayFunctor> lm(fn);
  lm.parameters.maxfev = 2000;
  lm.parameters.xtol = 1e-14;
  lm.parameters.ftol = 1e-14;
  const auto status = lm.minimize(p);
  using Status = Eigen::LevenbergMarquardtSpace::Status;
  const bool ok = status == Status::RelativeReductionTooSmall ||
                  status == Status::RelativeErrorTooSmall ||
                  status == Status::RelativeErrorAndReductionTooSmall ||
                  status == Status::CosinusTooSmall || status == Status::FtolTooSmall ||
                  status == Status::XtolTooSmall || status == Status::GtolTooSmall;

  DecayFit f;
  f.model = model;
  f.I0 = p(0);
  f.T_m = std::exp(p(1));
  f.x = fn.exponent(p);
  f.baseline = fn.offset(p);
  f.evaluations = static_cast<int>(lm.nfev);
  Eigen::VectorXd r(fn.values());
  fn(p, r);
  f.residual_norm = r.norm();
  // without a decay inside the window T_m runs off to infinity, or to zero
  // with the baseline taking the mean; LM may report either as a stall
  const bool outside = !(f.T_m < 10.0 * window) || f.T_m < t.front();
  if (outside && (ok || status == Status::TooManyFunctionEvaluation)) {
    DecayFit flat = flat_fit(model, y, window);
    flat.evaluations = f.evaluations;
    return flat;
  }
  if (!std::isfinite(f.T_m) || !std::isfinite(f.I0) || !ok)
    throw FitError("fit_decay: no convergence (status " + std::to_string(static_cast<int>(status)) +
                   ", " + std::to_string(f.evaluations) + " evaluations, residual " +
                   std::to_string(f.residual_norm) + ")");
  if (f.T_m >= 10.0 * window) f.no_decay = true;
  return f;
}

EchoTrace upper_envelope(const EchoTrace& trace) {
  EchoTrace e;
  e.meta = trace.meta;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = trace.size(); i-- > 0;)
    if (trace.intensity[i] >= best) {
      best = trace.intensity[i];
      e.tau.push_back(trace.tau[i]);
      e.intensity.push_back(best);
    }
  std::reverse(e.tau.begin(), e.tau.end());
  std::reverse(e.intensity.begin(), e.intensity.end());
  return e;
}

EchoTrace subtract_background(const EchoTrace& trace, const DecayFit& fit) {
  EchoTrace out = trace;
  for (std::size_t i = 0; i < trace.size(); ++i)
    out.intensity[i] = trace.intensity[i] - fit.eval(trace.echo_time(i));
  return out;
}

// --- FFT ----------------------------------------------------------------------------------

namespace {
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

std::vector<std::complex<double>> complex_transform(std::span<const double> samples, int n_fft) {
  if (n_fft < 2 || static_cast<std::size_t>(n_fft) < samples.size())
    throw std::invalid_argument("complex_transform: FFT length shorter than the input");
  const std::size_t nb = static_cast<std::size_t>(n_fft) / 2 + 1;
  double* in = fftw_alloc_real(static_cast<std::size_t>(n_fft));
  fftw_complex* out = fftw_alloc_complex(nb);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(n_fft, in, out, FFTW_ESTIMATE);
  }
  std::fill(in, in + n_fft, 0.0);
  std::copy(samples.begin(), samples.end(), in);
  fftw_execute(plan);
  std::vector<std::complex<double>> r(nb);
  for (std::size_t k = 0; k < nb; ++k) r[k] = {out[k][0], out[k][1]};
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return r;
}

Spectrum spectrum(const EchoTrace& trace, SpectrumMode mode, const SpectrumOptions& options) {
  if (trace.size() < 2) throw std::invalid_argument("spectrum: need at least two samples");
  const double dt = trace.tau_step();  // throws on a non-uniform grid
  const int n = static_cast<int>(trace.size());

  Spectrum s;
  s.mode = mode;
  std::vector<double> samples;
  int n_fft = n;
  if (mode == SpectrumMode::experimental) {
    if (options.padding_factor < 1 || options.smoothing_points < 1)
      throw std::invalid_argument("spectrum: padding and smoothing must be >= 1");
    samples = trace.intensity;
    n_fft = options.padding_factor * n;
    s.padding_factor = options.padding_factor;
    s.smoothing_points = options.smoothing_points;
  } else {
    const DecayFit bg = fit_decay(trace, DecayModel::stretched, options.background_baseline);
    samples = subtract_background(trace, bg).intensity;
  }

  const auto c = complex_transform(samples, n_fft);
  s.bin_width = 1.0 / (static_cast<double>(n_fft) * dt);
  s.frequency.resize(c.size());
  s.amplitude.resize(c.size());
  for (std::size_t k = 0; k < c.size(); ++k) {
    s.frequency[k] = static_cast<double>(k) * s.bin_width;
    s.amplitude[k] = std::abs(c[k]);
  }

  if (mode == SpectrumMode::simulation) {
    if (options.simulation_smoothing < 1)
      throw std::invalid_argument("spectrum: smoothing must be >= 1");
    s.cutoff = std::min(options.cutoff, 0.5 / dt);
    for (std::size_t k = 0; k < c.size(); ++k)
      if (s.frequency[k] > s.cutoff) s.amplitude[k] = 0.0;
    s.smoothing_points = options.simulation_smoothing;
  }
  if (s.smoothing_points > 1) {
    const int h = s.smoothing_points / 2;
    const std::vector<double> raw = s.amplitude;
    const auto nb = static_cast<int>(raw.size());
    for (int k = 0; k < nb; ++k) {
      const int a = std::max(0, k - h), b = std::min(nb - 1, k + h);
      double acc = 0.0;
      for (int j = a; j <= b; ++j) acc += raw[j];
      s.amplitude[k] = acc / (b - a + 1);
    }
  }
  s.peak_floor = options.min_frequency;
  // modulation at the level of rounding error carries no lines
  double scale = 0.0;
  for (double v : trace.intensity) scale = std::max(scale, std::abs(v));
  const double top = *std::max_element(s.amplitude.begin() + 1, s.amplitude.end());
  if (top > 1e-9 * scale * n) s.peaks = find_peaks(s, options.peak_threshold, options.min_prominence);
  return s;
}

std::vector<Peak> find_peaks(const Spectrum& s, double threshold_fraction,
                             double min_prominence) {
  if (!(threshold_fraction > 0.0 && threshold_fraction < 1.0))
    throw std::invalid_argument("find_peaks: threshold_fraction must lie in (0, 1)");
  const auto& a = s.amplitude;
  const std::size_t n = a.size();
  std::vector<Peak> out;
  if (n < 3) return out;
  std::size_t first = 1;
  while (first < n && s.frequency[first] < s.peak_floor) ++first;
  if (first + 1 >= n) return out;
  const double top = *std::max_element(a.begin() + static_cast<std::ptrdiff_t>(first), a.end());
  if (!(top > 0.0)) return out;
  const double floor = threshold_fraction * top;
  const double df = s.frequency.size() > 1 ? s.frequency[1] - s.frequency[0] : 0.0;

  for (std::size_t k = first; k + 1 < n; ++k) {
    if (a[k] < floor || !(a[k] > a[k - 1]) || a[k] < a[k + 1]) continue;
    if (a[k] == a[k + 1]) continue;  // plateau: not a strict maximum
    if (min_prominence > 0.0) {
      double left = a[k], right = a[k];
      for (std::size_t j = k; j-- > first && a[j] <= a[k];) left = std::min(left, a[j]);
      for (std::size_t j = k + 1; j < n && a[j] <= a[k]; ++j) right = std::min(right, a[j]);
      if (a[k] - std::max(left, right) < min_prominence * top) continue;
    }
    const double ym = a[k - 1], y0 = a[k], yp = a[k + 1];
    const double den = ym - 2.0 * y0 + yp;
    double d = den != 0.0 ? 0.5 * (ym - yp) / den : 0.0;
    d = std::clamp(d, -0.5, 0.5);
    out.push_back({s.frequency[k] + d * df, y0 - 0.25 * (ym - yp) * d, {}});
  }
  return out;
}

// --- derived quantities ------------------------------------------------------------------------

HyperfineEstimate effective_hyperfine(std::span<const Peak> peaks, double nu_H, double bin_width) {
  nu_H = std::abs(nu_H);
  if (!(nu_H > 0.0)) throw std::invalid_argument("effective_hyperfine: nu_H must be nonzero");
  if (peaks.empty()) throw std::invalid_argument("effective_hyperfine: no peaks");
  std::vector<const Peak*> order;
  for (const Peak& p : peaks) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(),
                   [](const Peak* a, const Peak* b) { return a->amplitude > b->amplitude; });

  HyperfineEstimate e;
  if (std::abs(order[0]->frequency - nu_H) <= bin_width || order.size() == 1) {
    if (std::abs(order[0]->frequency - nu_H) > bin_width)
      throw std::invalid_argument("effective_hyperfine: a single line away from nu_H");
    e.lower = e.upper = order[0]->frequency;
    e.merged = true;
    return e;
  }
  const Peak* lo = order[0];
  const Peak* hi = order[1];
  if (lo->frequency > hi->frequency) std::swap(lo, hi);
  e.lower = lo->frequency;
  e.upper = hi->frequency;
  if (e.upper - e.lower < bin_width) {
    e.merged = true;
    return e;
  }
  e.A_eff = (e.upper * e.upper - e.lower * e.lower) / (2.0 * nu_H);
  e.orientation = hi->amplitude > lo->amplitude ? 1 : (hi->amplitude < lo->amplitude ? -1 : 0);
  return e;
}

double modulation_depth(const EchoTrace& residual, const DecayFit& background, double t_lo,
                        double t_hi) {
  double mx = -std::numeric_limits<double>::infinity();
  double mn = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < residual.size(); ++i) {
    const double t = residual.echo_time(i);
    if (t < t_lo || t > t_hi) continue;
    mx = std::max(mx, residual.intensity[i]);
    mn = std::min(mn, residual.intensity[i]);
  }
  if (!(mx >= mn)) throw std::invalid_argument("modulation_depth: empty window");
  const double ref = background.eval(0.5 * (t_lo + t_hi));
  if (ref == 0.0) throw std::invalid_argument("modulation_depth: zero background");
  return (mx - mn) / std::abs(ref);
}

PeakMap peak_map(std::span<const Spectrum> spectra, std::span<const double> B0, double gamma_H) {
  if (spectra.empty()) throw std::invalid_argument("peak_map: empty sweep");
  if (spectra.size() != B0.size()) throw std::invalid_argument("peak_map: field count mismatch");
  PeakMap map;
  std::vector<HyperfineEstimate> est(spectra.size());
  std::vector<bool> have(spectra.size(), false);

  for (std::size_t i = 0; i < spectra.size(); ++i) {
    const Spectrum& s = spectra[i];
    const double nu = std::abs(gamma_H * B0[i]);
    const double bin = s.bin_width;
    try {
      est[i] = effective_hyperfine(s.peaks, nu, bin);
      have[i] = true;
    } catch (const std::invalid_argument&) {
    }
    for (const Peak& p : s.peaks) {
      PeakMapEntry e{B0[i], p.frequency, p.amplitude, {}};
      const bool pair = have[i] && !est[i].merged;
      if (std::abs(p.frequency - 2.0 * nu) <= 2.0 * bin ||
          (pair && std::abs(p.frequency - (est[i].upper + est[i].lower)) <= 2.0 * bin))
        e.label = "2nu_H";
      else if (have[i] && est[i].merged && p.frequency == est[i].lower)
        e.label = "nu_H";
      else if (have[i] && p.frequency == est[i].lower)
        e.label = "nu_H-A_eff/2";
      else if (have[i] && p.frequency == est[i].upper)
        e.label = "nu_H+A_eff/2";
      else if (have[i] && !est[i].merged &&
               std::abs(p.frequency - (est[i].upper - est[i].lower)) <= 2.0 * bin)
        e.label = "A_eff";
      map.entries.push_back(std::move(e));
    }
  }

  // Sign: one crossing, placed where the signed values lie closest to a line in B0.
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < spectra.size(); ++i)
    if (have[i]) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return B0[a] < B0[b]; });
  double cross = -std::numeric_limits<double>::infinity();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= idx.size(); ++k) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const double x = B0[idx[j]], y = (j < k ? -1.0 : 1.0) * est[idx[j]].A_eff;
      sx += x, sy += y, sxx += x * x, sxy += x * y, syy += y * y;
    }
    const double m = static_cast<double>(idx.size());
    const double vxx = sxx - sx * sx / m, vxy = sxy - sx * sy / m, vyy = syy - sy * sy / m;
    const double ssr = idx.size() < 2 ? 0.0 : vyy - (vxx > 0.0 ? vxy * vxy / vxx : 0.0);
    if (ssr < best * (1.0 - 1e-12)) {
      best = ssr;
      cross = k < idx.size() ? B0[idx[k]] : std::numeric_limits<double>::infinity();
    }
  }
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    PeakMapField f{B0[i], std::abs(gamma_H * B0[i]), 0.0, false};
    if (have[i]) {
      const double sign = B0[i] < cross ? -1.0 : 1.0;
      f.A_eff = sign * est[i].A_eff;
      f.merged = est[i].merged;
    }
    map.fields.push_back(f);
  }
  return map;
}

std::string to_string(SpectrumMode m) {
  return m == SpectrumMode::experimental ? "experimental" : "simulation";
}

SpectrumMode spectrum_mode_from_string(const std::string& s) {
  if (s == "experimental") return SpectrumMode::experimental;
  if (s == "simulation") return SpectrumMode::simulation;
  throw std::invalid_argument("unknown spectrum mode '" + s + "'");
}

std::string to_string(DecayModel m) { return m == DecayModel::mono ? "mono" : "stretched"; }

DecayModel decay_model_from_string(const std::string& s) {
  if (s == "mono") return DecayModel::mono;
  if (s == "stretched") return DecayModel::stretched;
  throw std::invalid_argument("unknown decay model '" + s + "'");
}

}  // namespace clockecho
