#pragma once

#include "clockecho/analysis.hpp"
#include "clockecho/bath.hpp"
#include "clockecho/hamiltonian.hpp"
#include "clockecho/params.hpp"
#include "clockecho/trace.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace clockecho {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything a run needs. Values are SI internally; the text form uses mT,
// MHz and us.
struct RunConfig {
  ModelParams model;
  BathSpec bath;
  SequenceConfig sequence;

  // single proton with explicit couplings instead of a sampled bath
  bool single_proton = false;
  double proton_A_sc = 1e6;   // Hz
  double proton_A_psc = 0.5e6;

  double detuning = 0.0;          // T, echo subcommand
  double sweep_start = -5e-3;     // T
  double sweep_stop = 5e-3;
  double sweep_step = 0.5e-3;
  double zeeman_start = -0.1;     // T (absolute field)
  double zeeman_stop = 0.35;
  double zeeman_step = 0.5e-3;

  int jobs = 1;
  DecayModel fit_model = DecayModel::stretched;
  bool fit_baseline = true;
  SpectrumMode spectrum_mode = SpectrumMode::simulation;
  // ensemble bands carry a ripple of a few bins and a near-DC remnant of the
  // background; smooth over 9 bins, look for peaks above 0.2 MHz at 30 % and
  // keep one maximum per band
  SpectrumOptions spectrum{.cutoff = 12e6,
                           .padding_factor = 2,
                           .smoothing_points = 5,
                           .simulation_smoothing = 9,
                           .peak_threshold = 0.3,
                           .min_frequency = 0.2e6,
                           .min_prominence = 0.1};
  double depth_t_lo = 0.0;    // s, on the 2 tau axis
  double depth_t_hi = 20e-6;

  void validate() const;
  std::vector<BathRealization> realizations() const;
  std::vector<double> sweep_grid() const;
};

// "n1" (one proton, +-50 mT) or "n7" (defaults).
RunConfig preset(const std::string& name);

// Flat "key = value" text; '#' starts a comment. Unknown keys are an error.
void apply_config_text(RunConfig& cfg, const std::string& text);
// Reads either a key = value file or a manifest JSON written by a previous run
// (its "config" block, then "config_si" when present).
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
// Every key with its current value, in the text units.
std::map<std::string, std::string> config_entries(const RunConfig& cfg);
// What the output files record: config_entries without jobs, which changes
// no result.
std::map<std::string, std::string> recorded_config(const RunConfig& cfg);
std::string config_text(const RunConfig& cfg);
// Real-valued keys as exact SI doubles. A manifest carries this next to the
// text block so that rereading it restores every value bit for bit.
nlohmann::json config_si(const RunConfig& cfg);

// Shortest text that reads back as the same double (17 significant digits).
std::string format_double(double v);

std::string software_version();

// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string trace_csv(const EchoTrace& t);
nlohmann::json trace_sidecar(const EchoTrace& t, const RunConfig& cfg);
std::string spectrum_csv(const Spectrum& s);
std::string peaks_csv(const Spectrum& s);
std::string peak_map_csv(const PeakMap& m);
std::string zeeman_csv(const ElectronSpectrum& s);
nlohmann::json fit_json(const DecayFit& f);

EchoTrace read_trace_csv(const std::filesystem::path& path);

}  // namespace clockecho
