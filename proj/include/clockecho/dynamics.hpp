#pragma once

#include "clockecho/bath.hpp"
#include "clockecho/hamiltonian.hpp"
#include "clockecho/params.hpp"
#include "clockecho/spinops.hpp"
#include "clockecho/trace.hpp"

#include <memory>
#include <span>
#include <vector>

namespace clockecho {

// exp(-h H / kB T) / Z, built in the eigenbasis of H (H in Hz).
DensityMatrix thermal_state(const Eigensystem& es, double temperature);
DensityMatrix thermal_state(const OperatorMatrix& H, double temperature);

// rho -> U rho U^dagger with U = exp(-i 2 pi H tau), applied as the phase
// exp(-i 2 pi (f_j - f_k) tau) on element jk of rho in the eigenbasis.
DensityMatrix propagate(const DensityMatrix& rho, const Eigensystem& es, double tau);

// Same map through a scaling-and-squaring matrix exponential; shares no code
// with the eigenbasis route.
DensityMatrix propagate_expm(const DensityMatrix& rho, const OperatorMatrix& H, double tau);

// exp[i phi {Sx,Sy} / 2] on the electron (3x3) and embedded on the space.
OperatorMatrix electron_pulse(double phi);
OperatorMatrix pulse_operator(double phi, const CompositeSpace& space);

struct PulseAngles {
  double phi_half = 0.0;
  double phi_pi = 0.0;
  double max_transfer = 0.0;  // population moved by phi_pi
};

// Population moved from the lowest to the second-lowest eigenstate of the
// 3x3 electronic Hamiltonian by electron_pulse(phi).
double population_transfer(const Eigensystem& electronic, double phi);

// phi_pi maximizes population_transfer over (0, 2 pi); phi_half in (0, phi_pi)
// leaves the two levels equally populated. Throws NumericalError when the
// maximum is not interior to the search interval.
PulseAngles calibrate_pulses(const Eigensystem& electronic);
PulseAngles calibrate_pulses(const ModelParams& p);

/// Precomputed Hahn-echo kernel for one (field, bath realization).
///
/// H_tot never couples m_S = 0 to m_S = +-1, and neither the pulses nor Sz do,
/// so the echo only needs the m_S = +-1 block. When a diagonal phase gauge
/// makes that block real (always the case for the model Hamiltonian) all
/// matrix products run in real arithmetic. signal(tau) is then
/// Tr(Sz U P_pi U rho_1 U^dagger P_pi^dagger U^dagger) evaluated in the
/// eigenbasis at the cost of two matrix products.
class EchoEngine {
 public:
  enum class Path { automatic, complex_only, full_space };

  EchoEngine(const OperatorMatrix& H_tot, int n_nuclei, double temperature, double phi_half,
             double phi_pi, Path path = Path::automatic);
  ~EchoEngine();
  EchoEngine(EchoEngine&&) noexcept;
  EchoEngine& operator=(EchoEngine&&) noexcept;

  double signal(double tau) const;
  std::vector<double> signal(std::span<const double> taus) const;

  bool real_arithmetic() const;
  Eigen::Index working_dim() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Engine for (p, bath) with the pulses of resolve_pulses; the angles used are
// stored in *used when given.
EchoEngine make_echo_engine(const ModelParams& p, const BathRealization& bath,
                            const SequenceConfig& seq, PulseAngles* used = nullptr);

struct EnvelopePoint {
  double tau = 0.0;
  double intensity = 0.0;
};

// Largest echo in each consecutive window of `window` seconds along taus.
// Every sampled local maximum is refined off-grid with Brent's method.
std::vector<EnvelopePoint> envelope_peaks(const EchoEngine& engine, std::span<const double> taus,
                                          double window);

// tau grid tau_step, 2 tau_step, ..., n_points * tau_step
std::vector<double> tau_grid(const SequenceConfig& seq);

// Pulse angles from seq when set, otherwise calibrated at p's field.
PulseAngles resolve_pulses(const ModelParams& p, const SequenceConfig& seq);

EchoTrace hahn_echo_trace(const ModelParams& p, const BathRealization& bath,
                          const SequenceConfig& seq);

// Step-by-step full-space evaluation through propagate(); slow, used as a
// cross-check of EchoEngine.
EchoTrace hahn_echo_reference(const ModelParams& p, const BathRealization& bath,
                              const SequenceConfig& seq);

// One ensemble-averaged trace per detuning (T). Jobs (field, realization) run
// on `jobs` worker threads; results do not depend on the thread count.
std::vector<EchoTrace> field_sweep(const ModelParams& p, const BathSpec& spec,
                                   const SequenceConfig& seq, std::span<const double> detunings,
                                   int jobs = 1);

// Same, with explicit realizations (used for the single-proton benchmark and
// ablations).
std::vector<EchoTrace> field_sweep(const ModelParams& p, std::span<const BathRealization> baths,
                                   const SequenceConfig& seq, std::span<const double> detunings,
                                   int jobs = 1);

}  // namespace clockecho
