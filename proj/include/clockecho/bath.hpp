#pragma once

#include "clockecho/trace.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace clockecho {

enum class AngleDistribution {
  isotropic,      // cos(theta) uniform on [-1, 1]
  uniform_theta,  // theta uniform on [0, pi]
};

struct BathSpec {
  int n_nuclei = 7;
  double A_mean = 8e6;       // Hz
  double A_halfwidth = 1e6;  // Hz, couplings drawn from [A_mean - w, A_mean + w]
  double psc_ratio = 0.5;    // A_psc / A_sc
  double D_pair = 10e3;      // Hz
  int n_realizations = 10;
  std::uint64_t seed = 20220101;
  AngleDistribution angles = AngleDistribution::isotropic;

  void validate() const;
};

struct BathRealization {
  std::vector<double> A_sc;   // Hz
  std::vector<double> A_psc;  // Hz
  Eigen::MatrixXd theta;      // symmetric, radians; diagonal unused (0)
  double D_pair = 0.0;        // Hz
  std::uint64_t seed = 0;
  int index = 0;

  int size() const { return static_cast<int>(A_sc.size()); }
};

/// SplitMix64 in counter mode: the k-th draw of stream s under seed x is
/// mix(key(x, s) + k * 0x9E3779B97F4A7C15). Output depends only on
/// (seed, stream, counter), so it is identical on every platform.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double next_unit();
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Realization `index` under spec.seed. Pure function of (spec, index).
BathRealization sample_bath(const BathSpec& spec, int index);

// Single-proton realization with explicit couplings (the N=1 benchmark).
BathRealization single_proton(double A_sc, double A_psc);

// Realization with no nuclei.
BathRealization empty_bath();

enum class DipolarGeometry {
  electron_nuclear,  // 2 mu0 mu1 mu2 / (4 pi h r^3)
  nuclear_pair,      //   mu0 mu1 mu2 / (8 pi h r^3)
};

// Point-dipole coupling strength in Hz; r in meters, moments in J/T.
double dipolar_strength(double r, double mu1, double mu2, DipolarGeometry geometry);

// Pointwise mean over traces sharing one tau grid. Member seeds and
// realization indices are concatenated into the result's metadata.
EchoTrace ensemble_average(std::span<const EchoTrace> traces);

nlohmann::json to_json(const BathRealization& b);
BathRealization bath_from_json(const nlohmann::json& j);

std::string to_string(AngleDistribution a);
AngleDistribution angle_distribution_from_string(const std::string& s);

}  // namespace clockecho
