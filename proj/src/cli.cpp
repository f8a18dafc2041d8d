#include "clockecho/cli.hpp"

#include "clockecho/bath.hpp"
#include "clockecho/dynamics.hpp"
#include "clockecho/hamiltonian.hpp"
#include "clockecho/spinops.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <system_error>

namespace fs = std::filesystem;

namespace clockecho {

namespace {

// Files of one run. Everything written is removed again unless commit() is
// reached.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {
    if (dir_.empty()) throw UsageError("no output directory given");
    make_dirs(dir_);
  }
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;

  ~OutputSet() {
    if (committed_) return;
    std::error_code ec;
    for (auto it = written_.rbegin(); it != written_.rend(); ++it) fs::remove(*it, ec);
    for (auto it = created_.rbegin(); it != created_.rend(); ++it)
      if (fs::is_empty(*it, ec)) fs::remove(*it, ec);
  }

  void write(const fs::path& rel, const std::string& contents) {
    const fs::path p = dir_ / rel;
    make_dirs(p.parent_path());
    written_.push_back(p);
    write_file_atomic(p, contents);
  }

  void commit() { committed_ = true; }

 private:
  void make_dirs(const fs::path& d) {
    std::vector<fs::path> missing;
    for (fs::path q = d; !q.empty() && !fs::exists(q); q = q.parent_path()) {
      missing.push_back(q);
      if (q == q.parent_path()) break;
    }
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw IoError("cannot create directory " + d.string() + ": " + ec.message());
    created_.insert(created_.end(), missing.rbegin(), missing.rend());
  }

  fs::path dir_;
  std::vector<fs::path> written_;
  std::vector<fs::path> created_;
  bool committed_ = false;
};

nlohmann::json manifest(const std::string& command, const RunConfig& cfg,
                        const std::vector<std::string>& outputs, bool with_bath) {
  nlohmann::json j;
  j["command"] = command;
  j["software_version"] = software_version();
  j["config"] = recorded_config(cfg);
  j["config_si"] = config_si(cfg);
  if (with_bath) {
    nlohmann::json baths = nlohmann::json::array();
    for (const BathRealization& b : cfg.realizations()) baths.push_back(to_json(b));
    j["bath"] = baths;
  }
  j["outputs"] = outputs;
  return j;
}

std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

std::vector<double> to_si_fields(const std::vector<double>& grid, double offset) {
  std::vector<double> b(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) b[i] = grid[i] + offset;
  return b;
}

void copy_labels(Spectrum& s, const PeakMap& m) {
  for (std::size_t k = 0; k < s.peaks.size() && k < m.entries.size(); ++k)
    s.peaks[k].label = m.entries[k].label;
}

std::string field_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "field_%03zu", i);
  return buf;
}

nlohmann::json analysis_json(const TraceAnalysis& a) {
  nlohmann::json j;
  j["decay"] = fit_json(a.decay);
  j["decay_source"] = a.decay_from_envelope ? "envelope" : "trace";
  j["background"] = fit_json(a.background);
  j["modulation_depth"] = a.modulation_depth;
  return j;
}

std::string tm_csv(const std::vector<EchoTrace>& traces, const std::vector<TraceAnalysis>& a) {
  std::string s = "detuning_mT,B0_mT,T_m_us,x,I0,baseline,no_decay,residual_norm,modulation_depth\n";
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const ModelParams& p = traces[i].meta.params;
    const DecayFit& f = a[i].decay;
    s += format_double(p.detuning() * 1e3) + "," + format_double(p.B0 * 1e3) + "," +
         format_double(f.T_m * 1e6) + "," + format_double(f.x) + "," + format_double(f.I0) + "," +
         format_double(f.baseline) + "," + (f.no_decay ? "1" : "0") + "," +
         format_double(f.residual_norm) + "," + format_double(a[i].modulation_depth) + "\n";
  }
  return s;
}

std::string hyperfine_csv(const PeakMap& m) {
  std::string s = "B0_mT,nu_H_MHz,A_eff_MHz,merged\n";
  for (const PeakMapField& f : m.fields)
    s += format_double(f.B0 * 1e3) + "," + format_double(f.nu_H * 1e-6) + "," +
         format_double(f.A_eff * 1e-6) + "," + (f.merged ? "1" : "0") + "\n";
  return s;
}

}  // namespace

TraceAnalysis analyze_trace(const EchoTrace& trace, const RunConfig& cfg) {
  TraceAnalysis a;
  a.background = fit_decay(trace, cfg.fit_model, cfg.fit_baseline);
  const EchoTrace env = upper_envelope(trace);
  const auto [lo, hi] = std::minmax_element(env.intensity.begin(), env.intensity.end());
  if (*hi - *lo <= 1e-6 * std::abs(*hi)) {
    a.decay = no_decay_fit(env, cfg.fit_model, trace.echo_time(trace.size() - 1));
  } else if (env.size() >= 20) {
    a.decay = fit_decay(env, cfg.fit_model, cfg.fit_baseline);
  } else {
    a.decay_from_envelope = false;
    a.decay = a.background;
  }
  SpectrumOptions o = cfg.spectrum;
  o.background_baseline = cfg.fit_baseline;
  a.spectrum = spectrum(trace, cfg.spectrum_mode, o);
  const EchoTrace residual = subtract_background(trace, a.background);
  if (a.background.eval(0.5 * (cfg.depth_t_lo + cfg.depth_t_hi)) != 0.0)
    a.modulation_depth = modulation_depth(residual, a.background, cfg.depth_t_lo, cfg.depth_t_hi);
  return a;
}

ElectronSpectrum cmd_zeeman(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  const std::vector<double> grid = field_grid(cfg.zeeman_start, cfg.zeeman_stop, cfg.zeeman_step);
  if (grid.empty()) throw UsageError("empty Zeeman field range");
  OutputSet files(out);
  files.write("manifest.json", json_text(manifest("zeeman", cfg, {"zeeman.csv"}, false)));
  const ElectronSpectrum s = clock_frequency_curve(cfg.model, grid);
  files.write("zeeman.csv", zeeman_csv(s));
  files.commit();
  return s;
}

EchoResult cmd_echo(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  OutputSet files(out);
  files.write("manifest.json",
              json_text(manifest("echo", cfg,
                                 {"trace.csv", "trace.json", "spectrum.csv", "peaks.csv", "fit.json"},
                                 true)));
  const std::vector<BathRealization> baths = cfg.realizations();
  const double dB[] = {cfg.detuning};
  std::vector<EchoTrace> t = field_sweep(cfg.model, baths, cfg.sequence, dB, cfg.jobs);
  EchoResult r{std::move(t.front()), {}};
  r.analysis = analyze_trace(r.trace, cfg);
  const double B0[] = {r.trace.meta.params.B0};
  copy_labels(r.analysis.spectrum,
              peak_map(std::span(&r.analysis.spectrum, 1), B0, cfg.model.gamma_H));

  files.write("trace.csv", trace_csv(r.trace));
  files.write("trace.json", json_text(trace_sidecar(r.trace, cfg)));
  files.write("spectrum.csv", spectrum_csv(r.analysis.spectrum));
  files.write("peaks.csv", peaks_csv(r.analysis.spectrum));
  files.write("fit.json", json_text(analysis_json(r.analysis)));
  files.commit();
  return r;
}

SweepResult cmd_sweep(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  const std::vector<double> grid = cfg.sweep_grid();
  if (grid.empty()) throw UsageError("empty detuning sweep");

  std::vector<std::string> names;
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (const char* suffix : {".csv", ".json", "_spectrum.csv", "_peaks.csv"})
      names.push_back("fields/" + field_name(i) + suffix);
  names.push_back("peak_map.csv");
  names.push_back("hyperfine.csv");
  names.push_back("tm.csv");

  OutputSet files(out);
  files.write("manifest.json", json_text(manifest("sweep", cfg, names, true)));

  const std::vector<BathRealization> baths = cfg.realizations();
  SweepResult r;
  r.traces = field_sweep(cfg.model, baths, cfg.sequence, grid, cfg.jobs);
  std::vector<Spectrum> spectra;
  for (const EchoTrace& t : r.traces) {
    r.analyses.push_back(analyze_trace(t, cfg));
    spectra.push_back(r.analyses.back().spectrum);
  }
  const std::vector<double> B0 = to_si_fields(grid, cfg.model.B_min);
  r.peak_map = peak_map(spectra, B0, cfg.model.gamma_H);

  std::size_t entry = 0;
  for (std::size_t i = 0; i < r.traces.size(); ++i) {
    Spectrum& s = r.analyses[i].spectrum;
    for (Peak& p : s.peaks) p.label = r.peak_map.entries.at(entry++).label;
    const std::string base = "fields/" + field_name(i);
    files.write(base + ".csv", trace_csv(r.traces[i]));
    nlohmann::json side = trace_sidecar(r.traces[i], cfg);
    side["analysis"] = analysis_json(r.analyses[i]);
    files.write(base + ".json", json_text(side));
    files.write(base + "_spectrum.csv", spectrum_csv(s));
    files.write(base + "_peaks.csv", peaks_csv(s));
  }
  files.write("peak_map.csv", peak_map_csv(r.peak_map));
  files.write("hyperfine.csv", hyperfine_csv(r.peak_map));
  files.write("tm.csv", tm_csv(r.traces, r.analyses));
  files.commit();
  return r;
}

// --- validation -----------------------------------------------------------------------

namespace {

ValidationCheck check(std::string name, double residual, double tol) {
  return {std::move(name), residual, tol, std::isfinite(residual) && residual <= tol};
}

OperatorMatrix random_hermitian(Eigen::Index n, double scale, CounterRng& rng) {
  OperatorMatrix a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = Complex(rng.uniform(-1, 1), rng.uniform(-1, 1));
  return scale * 0.5 * (a + a.adjoint());
}

DensityMatrix random_state(Eigen::Index n, CounterRng& rng) {
  OperatorMatrix a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = Complex(rng.uniform(-1, 1), rng.uniform(-1, 1));
  OperatorMatrix r = a * a.adjoint();
  r /= r.trace().real();
  return DensityMatrix(0.5 * (r + r.adjoint()));
}

double max_abs(const OperatorMatrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

std::vector<ValidationCheck> run_validation(const ValidationHooks& hooks) {
  ModelParams p;
  if (hooks.flip_E_sign) p.E = -p.E;
  std::vector<ValidationCheck> out;

  // electronic levels at the clock transition
  const Eigensystem es = eigensolve(build_electronic(p.at_detuning(0.0)));
  const double want[3] = {-19.5e9, -10.5e9, 30e9};
  double rel = 0.0;
  for (int k = 0; k < 3; ++k) rel = std::max(rel, std::abs(es.values(k) - want[k]) / std::abs(want[k]));
  out.push_back(check("eigenvalues at B_min {-19.5, -10.5, +30} GHz", rel, 1e-9));

  // lowest level antisymmetric, next symmetric on {|+1>, |-1>}
  const double r2 = 1.0 / std::sqrt(2.0);
  Eigen::Vector3cd anti(r2, 0.0, -r2), sym(r2, 0.0, r2), zero(0.0, 1.0, 0.0);
  const double order =
      std::max({1.0 - std::norm(anti.dot(es.vectors.col(0))), 1.0 - std::norm(sym.dot(es.vectors.col(1))),
                1.0 - std::norm(zero.dot(es.vectors.col(2)))});
  out.push_back(check("eigenvalue order |->, |+>, |0>", order, 1e-12));

  const std::vector<double> around = field_grid(p.B_min - 5e-3, p.B_min + 5e-3, 0.5e-3);
  const ElectronSpectrum near = clock_frequency_curve(p, around);
  const std::size_t mid = around.size() / 2;
  out.push_back(check("clock frequency 9 GHz", std::abs(near.f[mid] - 9e9) / 9e9, 1e-9));
  const std::vector<double> far_grid = field_grid(0.35 - 0.5e-3, 0.35 + 0.5e-3, 0.5e-3);
  const double far = clock_frequency_curve(p, far_grid).gamma_eff[1];
  out.push_back(check("gamma_eff(B_min) / gamma_eff(far)", std::abs(near.gamma_eff[mid] / far), 1e-6));

  const FictitiousProjection fp = project_fictitious(p);
  for (const MappingRow& row : fp.rows) {
    if (row.name.rfind("{Sx,Sy}", 0) == 0) {
      // the doublet carries {Sx,Sy} as -sigma_y, not 2 sigma_y
      const double res = max_abs(fp.anticomm_xy + pauli_y());
      out.push_back(check("mapping {Sx,Sy} -> -sigma_y", res, 1e-12));
      continue;
    }
    out.push_back(check("mapping " + row.name, row.residual, 1e-12));
  }
  const ModelParams off = p.at_detuning(1e-3);
  const FictitiousProjection fo = project_fictitious(off);
  out.push_back(check("doublet hamiltonian E sigma_z + gamma_e dB sigma_x",
                      max_abs(fo.basis.adjoint() * build_electronic(off) * fo.basis -
                              fo.offset * Eigen::Matrix2cd::Identity() - fo.hamiltonian) /
                          std::abs(p.E),
                      1e-12));

  // eigen-decomposition propagator against the matrix exponential
  CounterRng rng(7, 0);
  double prop = 0.0;
  for (Eigen::Index n : {6, 12, 24, 48}) {
    const OperatorMatrix H = random_hermitian(n, 1e6, rng);
    const DensityMatrix rho = random_state(n, rng);
    const double tau = 0.7e-6;
    prop = std::max(prop, max_abs(propagate(rho, eigensolve(H), tau).matrix() -
                                  propagate_expm(rho, H, tau).matrix()));
  }
  out.push_back(check("propagator vs expm, random H up to dim 48", prop, 1e-10));

  // single proton: the echo maxima stay put
  SequenceConfig seq;
  seq.tau_step = 50e-9;
  seq.tau_max = 100e-6;
  const BathRealization proton = single_proton(1e6, 0.5e6);
  double spread = 0.0;
  for (double dB : {0.0, 20e-3, 50e-3}) {
    const EchoEngine engine = make_echo_engine(p.at_detuning(dB), proton, seq);
    const std::vector<double> taus = tau_grid(seq);
    const std::vector<EnvelopePoint> env = envelope_peaks(engine, taus, 10e-6);
    double hi = -1e300, lo = 1e300;
    for (const EnvelopePoint& e : env) {
      hi = std::max(hi, e.intensity);
      lo = std::min(lo, e.intensity);
    }
    spread = std::max(spread, (hi - lo) / std::abs(hi));
  }
  out.push_back(check("N=1 echo maxima over 100 us, relative spread", spread, 1e-6));
  return out;
}

int cmd_validate(std::ostream& os, const ValidationHooks& hooks) {
  bool all = true;
  for (const ValidationCheck& c : run_validation(hooks)) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "residual %.3e  tol %.1e", c.residual, c.tolerance);
    os << (c.pass ? "PASS  " : "FAIL  ") << c.name << "  " << buf << "\n";
    all = all && c.pass;
  }
  os << (all ? "all checks passed" : "validation failed") << "\n";
  return all ? exit_ok : exit_numerical;
}

// --- command line ---------------------------------------------------------------------

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hahn-echo simulation of a spin-1 clock transition with a proton bath"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "clockecho_out", preset_name;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<double> detuning_mT;
  bool flip_e = false;

  const auto add_common = [&](CLI::App* sub, bool runs) {
    sub->add_option("--config", config_path, "key = value file or a previous manifest.json");
    sub->add_option("--preset", preset_name, "n1 (single proton) or n7 (default bath)")
        ->check(CLI::IsMember({"n1", "n7"}));
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    if (!runs) return;
    sub->add_option("--seed", seed, "bath seed (unsigned 64 bit)");
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  };
  CLI::App* zeeman = app.add_subcommand("zeeman", "clock frequency and gamma_eff against field");
  add_common(zeeman, false);
  CLI::App* echo = app.add_subcommand("echo", "one ensemble-averaged trace, spectrum and fit");
  add_common(echo, true);
  echo->add_option("--detuning-mT", detuning_mT, "B0 - B_min in mT");
  CLI::App* sweep = app.add_subcommand("sweep", "detuning sweep with peak map and T_m");
  add_common(sweep, true);
  CLI::App* validate = app.add_subcommand("validate", "built-in invariant checks");
  validate->add_flag("--flip-E-sign", flip_e, "test hook: rerun the checks with E -> -E")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }

  RunConfig cfg;
  try {
    if (!preset_name.empty()) cfg = preset(preset_name);
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    if (seed) cfg.bath.seed = *seed;
    if (jobs) cfg.jobs = *jobs;
    if (detuning_mT) cfg.detuning = *detuning_mT * 1e-3;
    cfg.validate();
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return exit_io;
  } catch (const std::exception& e) {
    err << "usage error: " << e.what() << "\n";
    return exit_usage;
  }

  try {
    if (validate->parsed()) return cmd_validate(out, {flip_e});

    if (zeeman->parsed()) {
      const ElectronSpectrum s = cmd_zeeman(cfg, out_dir);
      const auto it = std::min_element(s.f.begin(), s.f.end());
      char buf[96];
      std::snprintf(buf, sizeof buf, "f_min %.6f GHz at %.3f mT",
                    *it * 1e-9, s.B0[static_cast<std::size_t>(it - s.f.begin())] * 1e3);
      out << buf << "\n";
    } else if (echo->parsed()) {
      const EchoResult r = cmd_echo(cfg, out_dir);
      char buf[128];
      std::snprintf(buf, sizeof buf, "T_m %.4g us  x %.3f  peaks %zu", r.analysis.decay.T_m * 1e6,
                    r.analysis.decay.x, r.analysis.spectrum.peaks.size());
      out << buf << "\n";
    } else if (sweep->parsed()) {
      const SweepResult r = cmd_sweep(cfg, out_dir);
      out << r.traces.size() << " fields written to " << out_dir << "\n";
    }
    return exit_ok;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return exit_usage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return exit_io;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return exit_io;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return exit_numerical;
  }
}

}  // namespace clockecho
