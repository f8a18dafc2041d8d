#pragma once

#include "clockecho/params.hpp"

#include <cstdint>
#include <vector>

namespace clockecho {

struct TraceMetadata {
  ModelParams params;
  std::vector<std::uint64_t> seeds;
  std::vector<int> realizations;
  double phi_half = 0.0;
  double phi_pi = 0.0;
};

// Echo intensity Tr(rho Sz) read out at 2*tau for each interpulse delay tau.
struct EchoTrace {
  std::vector<double> tau;        // s, strictly increasing, uniform
  std::vector<double> intensity;  // dimensionless
  TraceMetadata meta;

  std::size_t size() const { return tau.size(); }
  // Uniform step of the tau grid; throws if the grid is not uniform.
  double tau_step() const;
  // Total evolution time 2*tau at sample i.
  double echo_time(std::size_t i) const { return 2.0 * tau[i]; }
};

}  // namespace clockecho
