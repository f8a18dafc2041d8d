#pragma once

#include "clockecho/analysis.hpp"
#include "clockecho/io.hpp"
#include "clockecho/trace.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace clockecho {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_numerical = 2, exit_io = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One trace under the analysis options of cfg. background is fitted to the
// trace itself and feeds the residual and the modulation depth; decay is
// fitted to the upper envelope and gives T_m. An envelope flat to 1e-6 is
// no decay; one with fewer than 20 points falls back to the trace itself.
struct TraceAnalysis {
  DecayFit background;
  DecayFit decay;
  bool decay_from_envelope = true;
  Spectrum spectrum;
  double modulation_depth = 0.0;
};

TraceAnalysis analyze_trace(const EchoTrace& trace, const RunConfig& cfg);

// Each command writes manifest.json first, then its results, into out
// (created if missing). On an exception every file it wrote is removed again.

// zeeman.csv over the configured field range.
ElectronSpectrum cmd_zeeman(const RunConfig& cfg, const std::filesystem::path& out);

struct EchoResult {
  EchoTrace trace;
  TraceAnalysis analysis;
};

// trace.csv, trace.json, spectrum.csv, peaks.csv and fit.json at cfg.detuning.
EchoResult cmd_echo(const RunConfig& cfg, const std::filesystem::path& out);

struct SweepResult {
  std::vector<EchoTrace> traces;
  std::vector<TraceAnalysis> analyses;
  PeakMap peak_map;
};

// Per-field files under fields/ plus peak_map.csv and tm.csv.
SweepResult cmd_sweep(const RunConfig& cfg, const std::filesystem::path& out);

struct ValidationCheck {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct ValidationHooks {
  bool flip_E_sign = false;  // run every check with E -> -E
};

std::vector<ValidationCheck> run_validation(const ValidationHooks& hooks = {});

// Prints one line per check; exit_ok only when all pass.
int cmd_validate(std::ostream& os, const ValidationHooks& hooks = {});

// Full command line: subcommand plus flags. Returns an ExitCode.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace clockecho
