#include "clockecho/cli.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace clockecho;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "clockecho");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("clockecho_test_cli_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) {
      m[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
  return m;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  fs::create_directories(dir);
  std::ofstream(dir / "cfg.txt") << text;
  return dir / "cfg.txt";
}

// A small N=2 sweep that runs in well under a second.
const char* kSmall =
    "n_nuclei = 2\nn_realizations = 3\ntau_max_us = 4\n"
    "sweep_start_mT = -1\nsweep_stop_mT = 1\nsweep_step_mT = 1\n";

}  // namespace

TEST_CASE("zeeman") {
  const fs::path d = scratch("zeeman");
  const Run r = cli({"zeeman", "--out", d.string()});
  CHECK(r.code == exit_ok);
  CHECK(r.out.find("f_min 9.000000 GHz at 23.500 mT") != std::string::npos);
  REQUIRE(fs::exists(d / "zeeman.csv"));
  REQUIRE(fs::exists(d / "manifest.json"));

  std::ifstream f(d / "zeeman.csv");
  std::string line;
  std::getline(f, line);
  double prev_g = -1.0, cross = 0.0;
  int rows = 0;
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    std::string c[6];
    for (auto& x : c) std::getline(ss, x, ',');
    const double B = std::stod(c[0]), g = std::stod(c[5]);
    if (rows > 0 && prev_g < 0.0 && g >= 0.0) cross = B;
    prev_g = g;
    ++rows;
  }
  CHECK(rows == 901);
  CHECK(cross == doctest::Approx(23.5e-3).epsilon(1e-9));
  fs::remove_all(d);
}

TEST_CASE("usage errors") {
  const fs::path d = scratch("usage");
  CHECK(cli({}).code == exit_usage);
  CHECK(cli({"frobnicate"}).code == exit_usage);
  CHECK(cli({"echo", "--bogus"}).code == exit_usage);
  CHECK(cli({"echo", "--preset", "n9"}).code == exit_usage);
  CHECK(cli({"echo", "--jobs", "0"}).code == exit_usage);
  const fs::path cfg = write_config(d, "zeeman_start_mT = 100\nzeeman_stop_mT = 50\n");
  const Run r = cli({"zeeman", "--config", cfg.string(), "--out", (d / "o").string()});
  CHECK(r.code == exit_usage);
  CHECK_FALSE(fs::exists(d / "o"));
  const fs::path bad = write_config(d / "b", "what = 1\n");
  CHECK(cli({"zeeman", "--config", bad.string(), "--out", (d / "o").string()}).code == exit_usage);
  CHECK(cli({"--help"}).code == exit_ok);
  fs::remove_all(d);
}

TEST_CASE("i/o errors") {
  const fs::path d = scratch("io");
  CHECK(cli({"zeeman", "--config", (d / "absent.txt").string()}).code == exit_io);
  fs::create_directories(d);
  std::ofstream(d / "file") << "x";
  CHECK(cli({"zeeman", "--out", (d / "file" / "sub").string()}).code == exit_io);
  fs::remove_all(d);
}

TEST_CASE("partial outputs are removed on failure") {
  const fs::path d = scratch("partial");
  const fs::path cfg = write_config(d / "cfg", kSmall);
  const fs::path out = d / "out";
  fs::create_directories(out);
  std::ofstream(out / "fields") << "in the way";
  const Run r = cli({"sweep", "--config", cfg.string(), "--out", out.string()});
  CHECK(r.code == exit_io);
  CHECK_FALSE(fs::exists(out / "manifest.json"));
  CHECK(fs::exists(out / "fields"));  // not ours
  fs::remove_all(d);
}

TEST_CASE("echo without a bath") {
  const fs::path d = scratch("n0");
  const fs::path cfg = write_config(d, "n_nuclei = 0\ntau_max_us = 10\ndetuning_mT = 2\n");
  const Run r = cli({"echo", "--config", cfg.string(), "--out", (d / "o").string()});
  REQUIRE(r.code == exit_ok);
  CHECK(slurp(d / "o" / "peaks.csv") == "freq_MHz,amplitude,label\n");
  std::ifstream f(d / "o" / "trace.csv");
  std::string line;
  std::getline(f, line);
  std::vector<double> values;
  while (std::getline(f, line)) values.push_back(std::stod(line.substr(line.find(',') + 1)));
  REQUIRE(values.size() == 100);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  CHECK(*hi - *lo < 1e-12 * std::abs(*hi));
  fs::remove_all(d);
}

TEST_CASE("echo, single proton at +20 mT") {
  const fs::path d = scratch("n1");
  const Run r = cli({"echo", "--preset", "n1", "--detuning-mT", "20", "--out", d.string()});
  REQUIRE(r.code == exit_ok);
  for (const char* f : {"manifest.json", "trace.csv", "trace.json", "spectrum.csv", "peaks.csv", "fit.json"})
    CHECK(fs::exists(d / f));
  const std::string peaks = slurp(d / "peaks.csv");
  for (const char* label : {",A_eff\n", ",nu_H-A_eff/2\n", ",nu_H+A_eff/2\n", ",2nu_H\n"})
    CHECK(peaks.find(label) != std::string::npos);
  const auto fit = nlohmann::json::parse(slurp(d / "fit.json"));
  CHECK(fit.at("decay").at("no_decay").get<bool>());
  fs::remove_all(d);
}

TEST_CASE("determinism and manifests") {
  const fs::path d = scratch("det");
  const fs::path cfg = write_config(d / "cfg", kSmall);
  const auto run = [&](const std::string& name, std::vector<std::string> extra) {
    std::vector<std::string> a{"sweep", "--config", cfg.string(), "--out", (d / name).string()};
    a.insert(a.end(), extra.begin(), extra.end());
    REQUIRE(cli(a).code == exit_ok);
    return tree(d / name);
  };
  const auto a = run("a", {});
  const auto b = run("b", {});
  CHECK(a == b);
  CHECK(a.count("peak_map.csv") == 1);
  CHECK(a.count("tm.csv") == 1);
  CHECK(a.count("fields/field_002_peaks.csv") == 1);

  // the thread count is not recorded, so every file matches
  CHECK(run("c", {"--jobs", "3"}) == a);

  // the manifest alone reproduces the run
  REQUIRE(cli({"sweep", "--config", (d / "a" / "manifest.json").string(), "--out", (d / "r").string()})
              .code == exit_ok);
  CHECK(tree(d / "r") == a);

  // a different seed changes the traces
  const auto s = run("s", {"--seed", "99"});
  CHECK(s.at("fields/field_000.csv") != a.at("fields/field_000.csv"));
  const auto manifest = nlohmann::json::parse(s.at("manifest.json"));
  CHECK(manifest.at("config").at("seed") == "99");
  CHECK(manifest.at("bath").size() == 3);
  CHECK(manifest.contains("software_version"));
  fs::remove_all(d);
}

TEST_CASE("validate") {
  SUBCASE("pristine build") {
    const std::vector<ValidationCheck> v = run_validation();
    CHECK(v.size() >= 12);
    for (const ValidationCheck& c : v) {
      CAPTURE(c.name);
      CHECK(c.pass);
      CHECK(c.residual <= c.tolerance);
    }
    const Run r = cli({"validate"});
    CHECK(r.code == exit_ok);
    CHECK(r.out.find("residual") != std::string::npos);
    CHECK(r.out.find("FAIL") == std::string::npos);
  }
  SUBCASE("E sign flipped") {
    // same levels, but |+> now lies below |->
    const std::vector<ValidationCheck> v = run_validation({.flip_E_sign = true});
    for (const ValidationCheck& c : v) {
      CAPTURE(c.name);
      if (c.name.find("order") != std::string::npos)
        CHECK_FALSE(c.pass);
      else if (c.name.find("eigenvalues") != std::string::npos || c.name.find("mapping") != std::string::npos)
        CHECK(c.pass);
    }
    const Run r = cli({"validate", "--flip-E-sign"});
    CHECK(r.code != exit_ok);
    CHECK(r.out.find("FAIL") != std::string::npos);
  }
}
