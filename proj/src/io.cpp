#include "clockecho/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <system_error>

#ifndef CLOCKECHO_VERSION
#define CLOCKECHO_VERSION "0.0.0"
#endif

namespace clockecho {

namespace fs = std::filesystem;

std::string software_version() { return CLOCKECHO_VERSION; }

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

namespace {

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  if (!s.empty() && *b == '+') ++b;
  const auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc{} || r.ptr != e)
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" + s + "'");
  return v;
}

long long parse_int(const std::string& key, const std::string& s) {
  long long v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw std::invalid_argument("config: '" + key + "' expects an integer, got '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw std::invalid_argument("config: '" + key + "' expects an unsigned integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("config: '" + key + "' expects true/false, got '" + s + "'");
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

struct Key {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<double*(RunConfig&)> si = nullptr;  // real-valued keys only
};

// scaled double: value in text units = SI / scale
Key real_key(std::string name, double RunConfig::*outer, double scale) {
  return {name, [outer, scale](const RunConfig& c) { return format_double(c.*outer / scale); },
          [outer, scale, name](RunConfig& c, const std::string& v) {
            c.*outer = parse_double(name, v) * scale;
          },
          [outer](RunConfig& c) { return &(c.*outer); }};
}

template <class S>
Key nested_real(std::string name, S RunConfig::*outer, double S::*inner, double scale) {
  return {name,
          [outer, inner, scale](const RunConfig& c) { return format_double((c.*outer).*inner / scale); },
          [outer, inner, scale, name](RunConfig& c, const std::string& v) {
            (c.*outer).*inner = parse_double(name, v) * scale;
          },
          [outer, inner](RunConfig& c) { return &((c.*outer).*inner); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> k = [] {
    std::vector<Key> v;
    v.push_back(nested_real("D_MHz", &RunConfig::model, &ModelParams::D, 1e6));
    v.push_back(nested_real("E_MHz", &RunConfig::model, &ModelParams::E, 1e6));
    v.push_back(nested_real("gamma_e_MHz_per_mT", &RunConfig::model, &ModelParams::gamma_e, 1e9));
    v.push_back(nested_real("gamma_H_MHz_per_T", &RunConfig::model, &ModelParams::gamma_H, 1e6));
    v.push_back(nested_real("B_min_mT", &RunConfig::model, &ModelParams::B_min, 1e-3));

    v.push_back({"n_nuclei", [](const RunConfig& c) { return std::to_string(c.bath.n_nuclei); },
                 [](RunConfig& c, const std::string& s) {
                   c.bath.n_nuclei = static_cast<int>(parse_int("n_nuclei", s));
                 }});
    v.push_back(nested_real("A_mean_MHz", &RunConfig::bath, &BathSpec::A_mean, 1e6));
    v.push_back(nested_real("A_halfwidth_MHz", &RunConfig::bath, &BathSpec::A_halfwidth, 1e6));
    v.push_back(nested_real("psc_ratio", &RunConfig::bath, &BathSpec::psc_ratio, 1.0));
    v.push_back(nested_real("D_pair_MHz", &RunConfig::bath, &BathSpec::D_pair, 1e6));
    v.push_back({"n_realizations",
                 [](const RunConfig& c) { return std::to_string(c.bath.n_realizations); },
                 [](RunConfig& c, const std::string& s) {
                   c.bath.n_realizations = static_cast<int>(parse_int("n_realizations", s));
                 }});
    v.push_back({"seed", [](const RunConfig& c) { return std::to_string(c.bath.seed); },
                 [](RunConfig& c, const std::string& s) { c.bath.seed = parse_u64("seed", s); }});
    v.push_back({"angles", [](const RunConfig& c) { return to_string(c.bath.angles); },
                 [](RunConfig& c, const std::string& s) {
                   c.bath.angles = angle_distribution_from_string(s);
                 }});

    v.push_back({"single_proton",
                 [](const RunConfig& c) { return std::string(c.single_proton ? "true" : "false"); },
                 [](RunConfig& c, const std::string& s) {
                   c.single_proton = parse_bool("single_proton", s);
                 }});
    v.push_back(real_key("proton_A_sc_MHz", &RunConfig::proton_A_sc, 1e6));
    v.push_back(real_key("proton_A_psc_MHz", &RunConfig::proton_A_psc, 1e6));

    v.push_back(nested_real("tau_step_us", &RunConfig::sequence, &SequenceConfig::tau_step, 1e-6));
    v.push_back(nested_real("tau_max_us", &RunConfig::sequence, &SequenceConfig::tau_max, 1e-6));
    v.push_back(nested_real("temperature_K", &RunConfig::sequence, &SequenceConfig::temperature, 1.0));
    for (auto [name, member] : {std::pair{"phi_half_rad", &SequenceConfig::phi_half},
                                std::pair{"phi_pi_rad", &SequenceConfig::phi_pi}}) {
      const std::string n = name;
      v.push_back({n,
                   [member](const RunConfig& c) {
                     const auto& o = c.sequence.*member;
                     return o ? format_double(*o) : std::string("auto");
                   },
                   [member, n](RunConfig& c, const std::string& s) {
                     if (s == "auto")
                       (c.sequence.*member).reset();
                     else
                       c.sequence.*member = parse_double(n, s);
                   }});
    }

    v.push_back(real_key("detuning_mT", &RunConfig::detuning, 1e-3));
    v.push_back(real_key("sweep_start_mT", &RunConfig::sweep_start, 1e-3));
    v.push_back(real_key("sweep_stop_mT", &RunConfig::sweep_stop, 1e-3));
    v.push_back(real_key("sweep_step_mT", &RunConfig::sweep_step, 1e-3));
    v.push_back(real_key("zeeman_start_mT", &RunConfig::zeeman_start, 1e-3));
    v.push_back(real_key("zeeman_stop_mT", &RunConfig::zeeman_stop, 1e-3));
    v.push_back(real_key("zeeman_step_mT", &RunConfig::zeeman_step, 1e-3));

    v.push_back({"jobs", [](const RunConfig& c) { return std::to_string(c.jobs); },
                 [](RunConfig& c, const std::string& s) {
                   c.jobs = static_cast<int>(parse_int("jobs", s));
                 }});
    v.push_back({"fit_model", [](const RunConfig& c) { return to_string(c.fit_model); },
                 [](RunConfig& c, const std::string& s) { c.fit_model = decay_model_from_string(s); }});
    v.push_back({"fit_baseline",
                 [](const RunConfig& c) { return std::string(c.fit_baseline ? "true" : "false"); },
                 [](RunConfig& c, const std::string& s) { c.fit_baseline = parse_bool("fit_baseline", s); }});
    v.push_back({"spectrum_mode", [](const RunConfig& c) { return to_string(c.spectrum_mode); },
                 [](RunConfig& c, const std::string& s) {
                   c.spectrum_mode = spectrum_mode_from_string(s);
                 }});
    v.push_back(nested_real("cutoff_MHz", &RunConfig::spectrum, &SpectrumOptions::cutoff, 1e6));
    v.push_back(nested_real("peak_threshold", &RunConfig::spectrum, &SpectrumOptions::peak_threshold, 1.0));
    v.push_back(nested_real("min_peak_MHz", &RunConfig::spectrum, &SpectrumOptions::min_frequency, 1e6));
    v.push_back(nested_real("min_prominence", &RunConfig::spectrum, &SpectrumOptions::min_prominence, 1.0));
    v.push_back({"padding_factor",
                 [](const RunConfig& c) { return std::to_string(c.spectrum.padding_factor); },
                 [](RunConfig& c, const std::string& s) {
                   c.spectrum.padding_factor = static_cast<int>(parse_int("padding_factor", s));
                 }});
    v.push_back({"simulation_smoothing",
                 [](const RunConfig& c) { return std::to_string(c.spectrum.simulation_smoothing); },
                 [](RunConfig& c, const std::string& s) {
                   c.spectrum.simulation_smoothing = static_cast<int>(parse_int("simulation_smoothing", s));
                 }});
    v.push_back({"smoothing_points",
                 [](const RunConfig& c) { return std::to_string(c.spectrum.smoothing_points); },
                 [](RunConfig& c, const std::string& s) {
                   c.spectrum.smoothing_points = static_cast<int>(parse_int("smoothing_points", s));
                 }});
    v.push_back(real_key("depth_t_lo_us", &RunConfig::depth_t_lo, 1e-6));
    v.push_back(real_key("depth_t_hi_us", &RunConfig::depth_t_hi, 1e-6));
    return v;
  }();
  return k;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (!single_proton && bath.n_nuclei != 0) bath.validate();  // N = 0 runs the bare electron
  if (bath.n_realizations < 1) throw std::invalid_argument("config: need at least one realization");
  sequence.validate();
  if (jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");
  if (!(sweep_step > 0.0) || !(sweep_stop >= sweep_start))
    throw std::invalid_argument("config: empty detuning sweep");
  if (!(zeeman_step > 0.0) || !(zeeman_stop >= zeeman_start))
    throw std::invalid_argument("config: empty Zeeman field range");
  if (!(depth_t_hi > depth_t_lo)) throw std::invalid_argument("config: empty depth window");
  if (!(spectrum.min_prominence >= 0.0 && spectrum.min_prominence < 1.0))
    throw std::invalid_argument("config: min_prominence must lie in [0, 1)");
  if (!(spectrum.peak_threshold > 0.0 && spectrum.peak_threshold < 1.0))
    throw std::invalid_argument("config: peak_threshold must lie in (0, 1)");
}

std::vector<BathRealization> RunConfig::realizations() const {
  if (single_proton) return {clockecho::single_proton(proton_A_sc, proton_A_psc)};
  if (bath.n_nuclei == 0) return {empty_bath()};
  std::vector<BathRealization> out;
  for (int r = 0; r < bath.n_realizations; ++r) out.push_back(sample_bath(bath, r));
  return out;
}

std::vector<double> RunConfig::sweep_grid() const {
  return field_grid(sweep_start, sweep_stop, sweep_step);
}

RunConfig preset(const std::string& name) {
  RunConfig c;
  if (name == "n7") return c;
  if (name == "n1") {
    c.single_proton = true;
    c.proton_A_sc = 1e6;
    c.proton_A_psc = 0.5e6;
    c.bath.n_nuclei = 1;
    c.bath.n_realizations = 1;
    // 2 nu_H reaches 6.3 MHz at +50 mT; 50 ns keeps it below Nyquist
    c.sequence.tau_step = 50e-9;
    c.fit_baseline = false;
    c.spectrum.simulation_smoothing = 1;
    c.spectrum.peak_threshold = 0.1;
    c.spectrum.min_prominence = 0.0;
    c.spectrum.min_frequency = 0.0;
    c.detuning = 20e-3;
    c.sweep_start = -50e-3;
    c.sweep_stop = 50e-3;
    c.sweep_step = 2.5e-3;
    return c;
  }
  throw std::invalid_argument("unknown preset '" + name + "' (expected n1 or n7)");
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool known = false;
    for (const Key& k : keys())
      if (k.name == key) {
        k.set(cfg, value);
        known = true;
        break;
      }
    if (!known) throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
}

void apply_config_file(RunConfig& cfg, const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    const auto j = nlohmann::json::parse(text);
    if (!j.contains("config")) throw std::invalid_argument("manifest has no config block");
    std::string flat;
    for (const auto& [k, v] : j.at("config").items()) flat += k + " = " + v.get<std::string>() + "\n";
    apply_config_text(cfg, flat);
    if (j.contains("config_si"))
      for (const auto& [k, v] : j.at("config_si").items()) {
        const auto it = std::find_if(keys().begin(), keys().end(),
                                     [&](const Key& key) { return key.name == k; });
        if (it == keys().end() || !it->si) throw std::invalid_argument("manifest: unknown SI key '" + k + "'");
        *it->si(cfg) = v.get<double>();
      }
    return;
  }
  apply_config_text(cfg, text);
}

std::map<std::string, std::string> config_entries(const RunConfig& cfg) {
  std::map<std::string, std::string> m;
  for (const Key& k : keys()) m[k.name] = k.get(cfg);
  return m;
}

nlohmann::json config_si(const RunConfig& cfg) {
  RunConfig c = cfg;
  nlohmann::json j = nlohmann::json::object();
  for (const Key& k : keys())
    if (k.si) j[k.name] = *k.si(c);
  return j;
}

std::map<std::string, std::string> recorded_config(const RunConfig& cfg) {
  std::map<std::string, std::string> m = config_entries(cfg);
  m.erase("jobs");
  return m;
}

std::string config_text(const RunConfig& cfg) {
  std::string s;
  for (const Key& k : keys()) s += k.name + " = " + k.get(cfg) + "\n";
  return s;
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp.string());
    f << contents;
    f.flush();
    if (!f) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " into place");
  }
}

std::string trace_csv(const EchoTrace& t) {
  std::string s = "tau_us,intensity\n";
  for (std::size_t i = 0; i < t.size(); ++i)
    s += format_double(t.tau[i] * 1e6) + "," + format_double(t.intensity[i]) + "\n";
  return s;
}

nlohmann::json trace_sidecar(const EchoTrace& t, const RunConfig& cfg) {
  nlohmann::json j;
  j["software_version"] = software_version();
  j["B0_mT"] = format_double(t.meta.params.B0 * 1e3);
  j["detuning_mT"] = format_double(t.meta.params.detuning() * 1e3);
  j["phi_half_rad"] = format_double(t.meta.phi_half);
  j["phi_pi_rad"] = format_double(t.meta.phi_pi);
  j["seeds"] = t.meta.seeds;
  j["realizations"] = t.meta.realizations;
  j["config"] = recorded_config(cfg);
  return j;
}

std::string spectrum_csv(const Spectrum& s) {
  std::string out = "freq_MHz,amplitude\n";
  for (std::size_t k = 0; k < s.frequency.size(); ++k)
    out += format_double(s.frequency[k] * 1e-6) + "," + format_double(s.amplitude[k]) + "\n";
  return out;
}

std::string peaks_csv(const Spectrum& s) {
  std::string out = "freq_MHz,amplitude,label\n";
  for (const Peak& p : s.peaks)
    out += format_double(p.frequency * 1e-6) + "," + format_double(p.amplitude) + "," + p.label + "\n";
  return out;
}

std::string peak_map_csv(const PeakMap& m) {
  std::string out = "B0_mT,f_MHz,label\n";
  for (const auto& e : m.entries)
    out += format_double(e.B0 * 1e3) + "," + format_double(e.frequency * 1e-6) + "," + e.label + "\n";
  return out;
}

std::string zeeman_csv(const ElectronSpectrum& s) {
  std::string out = "B0_T,E1_Hz,E2_Hz,E3_Hz,f_Hz,gamma_eff_Hz_per_T\n";
  for (std::size_t i = 0; i < s.B0.size(); ++i) {
    out += format_double(s.B0[i]);
    for (double e : s.energies[i]) out += "," + format_double(e);
    out += "," + format_double(s.f[i]) + "," + format_double(s.gamma_eff[i]) + "\n";
  }
  return out;
}

nlohmann::json fit_json(const DecayFit& f) {
  nlohmann::json j;
  j["model"] = to_string(f.model);
  j["I0"] = f.I0;
  j["T_m_us"] = f.T_m * 1e6;
  j["x"] = f.x;
  j["baseline"] = f.baseline;
  j["residual"] = f.residual_norm;
  j["no_decay"] = f.no_decay;
  return j;
}

EchoTrace read_trace_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  EchoTrace t;
  std::string line;
  std::getline(f, line);
  while (std::getline(f, line)) {
    if (trim(line).empty()) continue;
    const auto c = line.find(',');
    if (c == std::string::npos) throw IoError("malformed trace line in " + path.string());
    t.tau.push_back(parse_double("tau_us", trim(line.substr(0, c))) * 1e-6);
    t.intensity.push_back(parse_double("intensity", trim(line.substr(c + 1))));
  }
  return t;
}

}  // namespace clockecho
