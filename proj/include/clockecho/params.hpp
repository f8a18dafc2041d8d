#pragma once

#include <optional>

namespace clockecho {

// Electronic model and field. Energies are frequencies (Hz).
struct ModelParams {
  double D = -45e9;          // axial anisotropy, Hz
  double E = 4.5e9;          // rhombic anisotropy, Hz
  double gamma_e = 70e9;     // electron gyromagnetic ratio, Hz/T
  double B0 = 23.5e-3;       // applied field, T
  double B_min = 23.5e-3;    // clock-transition field offset, T
  double gamma_H = 42.577e6; // proton gyromagnetic ratio, Hz/T

  double detuning() const { return B0 - B_min; }
  double nu_H() const { return gamma_H * B0; }
  ModelParams at_detuning(double dB) const {
    ModelParams p = *this;
    p.B0 = B_min + dB;
    return p;
  }
  void validate() const;
};

struct SequenceConfig {
  double tau_step = 100e-9;  // s
  double tau_max = 100e-6;   // s
  double temperature = 5.0;  // K
  // Pulse angles in radians; calibrated per field when unset.
  std::optional<double> phi_half;
  std::optional<double> phi_pi;

  int n_points() const;
  void validate() const;
};

}  // namespace clockecho
