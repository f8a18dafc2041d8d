#include "clockecho/params.hpp"
#include "clockecho/trace.hpp"

#include <cmath>
#include <stdexcept>

namespace clockecho {

void ModelParams::validate() const {
  if (!(std::abs(E) < std::abs(D)))
    throw std::invalid_argument("ModelParams: need |E| < |D|");
  if (!(gamma_H > 0.0)) throw std::invalid_argument("ModelParams: gamma_H must be positive");
  if (!std::isfinite(B0) || !std::isfinite(B_min) || !std::isfinite(gamma_e))
    throw std::invalid_argument("ModelParams: non-finite field or gyromagnetic ratio");
}

int SequenceConfig::n_points() const {
  return static_cast<int>(std::floor(tau_max / tau_step + 1e-9));
}

void SequenceConfig::validate() const {
  if (!(tau_step > 0.0)) throw std::invalid_argument("SequenceConfig: tau_step must be positive");
  if (!(tau_max >= tau_step)) throw std::invalid_argument("SequenceConfig: tau_max < tau_step");
  if (!(temperature > 0.0)) throw std::invalid_argument("SequenceConfig: temperature must be positive");
}

double EchoTrace::tau_step() const {
  if (tau.size() < 2) throw std::invalid_argument("EchoTrace: need at least two samples");
  const double step = (tau.back() - tau.front()) / static_cast<double>(tau.size() - 1);
  for (std::size_t i = 1; i < tau.size(); ++i) {
    const double d = tau[i] - tau[i - 1];
    if (!(d > 0.0) || std::abs(d - step) > 1e-6 * step)
      throw std::invalid_argument("EchoTrace: tau grid is not uniform");
  }
  return step;
}

}  // namespace clockecho
