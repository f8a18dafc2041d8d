#include "clockecho/bath.hpp"

#include "clockecho/constants.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace clockecho {

void BathSpec::validate() const {
  if (n_nuclei < 1) throw std::invalid_argument("BathSpec: N must be >= 1");
  if (n_nuclei > 12) throw std::invalid_argument("BathSpec: N > 12 exceeds dense storage limits");
  if (A_halfwidth < 0.0) throw std::invalid_argument("BathSpec: negative coupling half-width");
  if (D_pair < 0.0) throw std::invalid_argument("BathSpec: negative pair coupling");
  if (n_realizations < 1) throw std::invalid_argument("BathSpec: need at least one realization");
}

// --- CounterRng ----------------------------------------------------------------

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t CounterRng::mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix(seed + kGolden) ^ mix(~stream * kGolden + 0x632BE59BD9B4E019ULL)) {}

std::uint64_t CounterRng::next_u64() {
  ++counter_;
  return mix(key_ + counter_ * kGolden);
}

double CounterRng::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

// --- sampling --------------------------------------------------------------------

BathRealization sample_bath(const BathSpec& spec, int index) {
  spec.validate();
  if (index < 0) throw std::invalid_argument("sample_bath: negative realization index");
  const int n = spec.n_nuclei;
  CounterRng rng(spec.seed, static_cast<std::uint64_t>(index));

  BathRealization b;
  b.seed = spec.seed;
  b.index = index;
  b.D_pair = spec.D_pair;
  b.A_sc.resize(n);
  b.A_psc.resize(n);
  for (int m = 0; m < n; ++m) {
    const double u = rng.next_unit();
    b.A_sc[m] = spec.A_halfwidth == 0.0
                    ? spec.A_mean
                    : spec.A_mean + spec.A_halfwidth * (2.0 * u - 1.0);
    b.A_psc[m] = spec.psc_ratio * b.A_sc[m];
  }
  b.theta = Eigen::MatrixXd::Zero(n, n);
  for (int m = 0; m < n; ++m) {
    for (int k = m + 1; k < n; ++k) {
      const double u = rng.next_unit();
      const double t = spec.angles == AngleDistribution::isotropic
                           ? std::acos(2.0 * u - 1.0)
                           : constants::pi * u;
      b.theta(m, k) = b.theta(k, m) = t;
    }
  }
  return b;
}

BathRealization single_proton(double A_sc, double A_psc) {
  BathRealization b;
  b.A_sc = {A_sc};
  b.A_psc = {A_psc};
  b.theta = Eigen::MatrixXd::Zero(1, 1);
  return b;
}

BathRealization empty_bath() {
  BathRealization b;
  b.theta = Eigen::MatrixXd::Zero(0, 0);
  return b;
}

double dipolar_strength(double r, double mu1, double mu2, DipolarGeometry geometry) {
  if (!(r > 0.0)) throw std::invalid_argument("dipolar_strength: distance must be positive");
  const double r3 = r * r * r;
  using namespace constants;
  switch (geometry) {
    case DipolarGeometry::electron_nuclear:
      return 2.0 * mu0 * mu1 * mu2 / (4.0 * pi * planck * r3);
    case DipolarGeometry::nuclear_pair:
      return mu0 * mu1 * mu2 / (8.0 * pi * planck * r3);
  }
  throw std::invalid_argument("dipolar_strength: unknown geometry");
}

// --- serialization -------------------------------------------------------------

nlohmann::json to_json(const BathRealization& b) {
  nlohmann::json theta = nlohmann::json::array();
  for (Eigen::Index i = 0; i < b.theta.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < b.theta.cols(); ++j) row.push_back(b.theta(i, j));
    theta.push_back(std::move(row));
  }
  return {{"seed", b.seed},     {"index", b.index}, {"D_pair_Hz", b.D_pair},
          {"A_sc_Hz", b.A_sc},  {"A_psc_Hz", b.A_psc}, {"theta_rad", theta}};
}

BathRealization bath_from_json(const nlohmann::json& j) {
  BathRealization b;
  b.seed = j.at("seed").get<std::uint64_t>();
  b.index = j.at("index").get<int>();
  b.D_pair = j.at("D_pair_Hz").get<double>();
  b.A_sc = j.at("A_sc_Hz").get<std::vector<double>>();
  b.A_psc = j.at("A_psc_Hz").get<std::vector<double>>();
  const auto& t = j.at("theta_rad");
  const auto n = static_cast<Eigen::Index>(t.size());
  b.theta = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < n; ++k) b.theta(i, k) = t.at(i).at(k).get<double>();
  if (b.A_psc.size() != b.A_sc.size() || static_cast<Eigen::Index>(b.A_sc.size()) != n)
    throw std::invalid_argument("bath_from_json: inconsistent sizes");
  return b;
}

std::string to_string(AngleDistribution a) {
  return a == AngleDistribution::isotropic ? "isotropic" : "uniform_theta";
}

AngleDistribution angle_distribution_from_string(const std::string& s) {
  if (s == "isotropic") return AngleDistribution::isotropic;
  if (s == "uniform_theta") return AngleDistribution::uniform_theta;
  throw std::invalid_argument("unknown angle distribution: " + s);
}

// --- ensemble ----------------------------------------------------------------------

EchoTrace ensemble_average(std::span<const EchoTrace> traces) {
  if (traces.empty()) throw std::invalid_argument("ensemble_average: no traces");
  const EchoTrace& first = traces.front();
  for (const EchoTrace& t : traces) {
    if (t.tau != first.tau || t.intensity.size() != first.tau.size())
      throw std::invalid_argument("ensemble_average: tau grids differ");
  }
  EchoTrace out;
  out.tau = first.tau;
  out.meta = first.meta;
  out.meta.seeds.clear();
  out.meta.realizations.clear();

  // Values are sorted per point and summed as offsets from the smallest, so the
  // result does not depend on input order and constant inputs are reproduced exactly.
  const auto n = traces.size();
  std::vector<double> v(n);
  out.intensity.resize(first.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    for (std::size_t k = 0; k < n; ++k) v[k] = traces[k].intensity[i];
    std::sort(v.begin(), v.end());
    double sum = 0.0, comp = 0.0;
    for (double x : v) {
      const double d = x - v.front();
      const double s = sum + d;
      comp += std::abs(sum) >= std::abs(d) ? (sum - s) + d : (d - s) + sum;
      sum = s;
    }
    out.intensity[i] = v.front() + (sum + comp) / static_cast<double>(n);
  }

  std::vector<std::pair<std::uint64_t, int>> ids;
  for (const EchoTrace& t : traces)
    for (std::size_t k = 0; k < t.meta.seeds.size(); ++k)
      ids.emplace_back(t.meta.seeds[k], k < t.meta.realizations.size() ? t.meta.realizations[k] : 0);
  std::sort(ids.begin(), ids.end());
  for (const auto& [s, r] : ids) {
    out.meta.seeds.push_back(s);
    out.meta.realizations.push_back(r);
  }
  return out;
}

}  // namespace clockecho
