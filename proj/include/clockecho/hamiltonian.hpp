#pragma once

#include "clockecho/bath.hpp"
#include "clockecho/params.hpp"
#include "clockecho/spinops.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace clockecho {

// Ascending eigenvalues with a unitary matrix of column eigenvectors. Each
// column is phase-fixed so that its largest-magnitude component (first one on
// ties) is real and positive.
struct Eigensystem {
  RealVector values;
  OperatorMatrix vectors;

  Eigen::Index dim() const { return values.size(); }
};

Eigensystem eigensolve(const OperatorMatrix& H);

// Rotates every eigenvector column to the canonical phase described above.
void fix_phases(OperatorMatrix& vectors);

// D [Sz^2 - 2/3] + E (Sx^2 - Sy^2) + gamma_e (B0 - B_min) Sz   (3x3, Hz)
OperatorMatrix build_electronic(const ModelParams& p);

// Sz * sum_m [A_sc^m Iz^m + A_psc^m (Ix^m + Iy^m)]
OperatorMatrix build_hyperfine(const ModelParams& p, const BathRealization& bath,
                               const CompositeSpace& space);

// -sum_{m != n} D_mn (3 cos^2 theta_mn - 1) [2 Iz Iz - Ix Ix - Iy Iy] - gamma_H B0 sum_m Iz^m
// The pair sum runs over ordered pairs, as written. B_min does not enter.
OperatorMatrix build_bath(const ModelParams& p, const BathRealization& bath,
                          const CompositeSpace& space);

OperatorMatrix build_total(const ModelParams& p, const BathRealization& bath,
                           const CompositeSpace& space);

struct ElectronSpectrum {
  std::vector<double> B0;                        // T
  std::vector<std::array<double, 3>> energies;   // Hz, ascending
  std::vector<double> f;                         // E2 - E1, Hz
  std::vector<double> gamma_eff;                 // df/dB0, Hz/T
};

// f and gamma_eff = df/dB0 (centered differences, one-sided at the ends) on
// the given field grid.
ElectronSpectrum clock_frequency_curve(const ModelParams& p, std::span<const double> grid);

// Uniform grid start, start+step, ... up to stop (inclusive within step/1e6).
std::vector<double> field_grid(double start, double stop, double step);

struct MappingRow {
  std::string name;
  Eigen::Matrix2cd projected;  // <a|O|b>, a,b in (|+>, |->)
  Eigen::Matrix2cd expected;
  double residual = 0.0;       // max |projected - expected|
};

// Two-level description of the lower doublet.
struct FictitiousProjection {
  Eigen::Matrix2cd hamiltonian;         // E sigma_z + gamma_e dB sigma_x
  Eigen::Matrix<Complex, 3, 2> basis;   // columns |+>, |-> at the clock transition
  double offset = 0.0;                  // -|D|/3 shift removed from the doublet
  std::vector<MappingRow> rows;         // the eight operator mappings
  Eigen::Matrix2cd anticomm_xy;         // <+-|{Sx,Sy}|+-> as computed
};

FictitiousProjection project_fictitious(const ModelParams& p);

// Pauli matrices in the (|+>, |->) ordering.
Eigen::Matrix2cd pauli_x();
Eigen::Matrix2cd pauli_y();
Eigen::Matrix2cd pauli_z();

}  // namespace clockecho
