#pragma once

// Operator algebra on the electron (S=1) x proton (I=1/2)^N product space.
//
// Basis ordering is fixed: electron factor first, then nuclei in index order.
// The electron basis is m_S = {+1, 0, -1}; each nucleus uses m_I = {+1/2, -1/2}.
// A composite index therefore reads  i = e * 2^N + b  with the bit of nucleus m
// found at position (N - 1 - m) of b, i.e. nucleus 0 is the most significant bit.

#include <Eigen/Dense>

#include <complex>
#include <cstdint>

namespace clockecho {

using Complex = std::complex<double>;
using OperatorMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

struct CompositeSpace {
  static constexpr Eigen::Index electron_dim = 3;

  int n_nuclei = 0;

  CompositeSpace() = default;
  explicit CompositeSpace(int n);

  Eigen::Index nuclear_dim() const { return Eigen::Index{1} << n_nuclei; }
  Eigen::Index dim() const { return electron_dim * nuclear_dim(); }
};

// Which tensor factor an operator lives on.
struct Site {
  enum class Kind { electron, nucleus };
  Kind kind = Kind::electron;
  int index = 0;

  static Site electron() { return {Kind::electron, 0}; }
  static Site nucleus(int m) { return {Kind::nucleus, m}; }
};

struct Spin1Generators {
  OperatorMatrix Sx, Sy, Sz;
  OperatorMatrix anticomm_xy;  // SxSy + SySx
  OperatorMatrix Splus, Sminus;
};

struct SpinHalfGenerators {
  OperatorMatrix Ix, Iy, Iz;
};

const Spin1Generators& spin1_generators();
const SpinHalfGenerators& spin_half_generators();

// op acting on `site`, identity on every other factor.
OperatorMatrix embed(const OperatorMatrix& op, Site site, const CompositeSpace& space);

// 2x2 op on nucleus m of an N-nucleus register (2^N x 2^N, no electron factor).
OperatorMatrix nuclear_embed(const OperatorMatrix& op, int m, int n_nuclei);

// Product of single-nucleus operators on two distinct nuclei (identity elsewhere).
OperatorMatrix embed_pair(const OperatorMatrix& a, int m, const OperatorMatrix& b, int n,
                          const CompositeSpace& space);

OperatorMatrix commutator(const OperatorMatrix& a, const OperatorMatrix& b);
OperatorMatrix anticommutator(const OperatorMatrix& a, const OperatorMatrix& b);

// ||A - A^dagger||_F / ||A||_F (0 for the zero matrix).
double hermiticity_residual(const OperatorMatrix& a);
// ||U^dagger U - 1||_F
double unitarity_residual(const OperatorMatrix& u);

/// Hermitian, unit-trace, positive semidefinite state on the composite space.
///
/// The checked constructor enforces the invariants (Hermitian and unit trace
/// to 1e-12, smallest eigenvalue >= -1e-10) and throws std::invalid_argument
/// otherwise. `trusted` skips the eigenvalue check and is meant for states
/// produced by unitary maps of an already valid state.
class DensityMatrix {
 public:
  struct Diagnostics {
    double hermiticity = 0.0;
    double trace_error = 0.0;
    double min_eigenvalue = 0.0;
    double purity = 0.0;
  };

  static constexpr double kHermitianTol = 1e-12;
  static constexpr double kTraceTol = 1e-12;
  static constexpr double kPositivityTol = 1e-10;

  explicit DensityMatrix(OperatorMatrix m);
  static DensityMatrix trusted(OperatorMatrix m);
  static DensityMatrix maximally_mixed(Eigen::Index dim);

  const OperatorMatrix& matrix() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }
  double purity() const;
  Diagnostics diagnose() const;

 private:
  struct Unchecked {};
  DensityMatrix(OperatorMatrix m, Unchecked) : m_(std::move(m)) {}

  OperatorMatrix m_;
};

// Tr(rho * obs). The imaginary part must be below 1e-10 (absolute, scaled by
// ||obs||); obs must be Hermitian.
double expectation(const DensityMatrix& rho, const OperatorMatrix& obs);
double expectation(const OperatorMatrix& rho, const OperatorMatrix& obs);

// Reduced 3x3 electron operator, Tr over all nuclear factors.
OperatorMatrix partial_trace_nuclear(const OperatorMatrix& rho, const CompositeSpace& space);
DensityMatrix partial_trace_nuclear(const DensityMatrix& rho, const CompositeSpace& space);

}  // namespace clockecho
