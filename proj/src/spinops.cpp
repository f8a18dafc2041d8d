#include "clockecho/spinops.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <stdexcept>
#include <string>

namespace clockecho {

namespace {

constexpr Complex I{0.0, 1.0};

Spin1Generators make_spin1() {
  Spin1Generators g;
  const double r2 = std::sqrt(2.0);
  // basis m_S = +1, 0, -1
  g.Splus = OperatorMatrix::Zero(3, 3);
  g.Splus(0, 1) = r2;
  g.Splus(1, 2) = r2;
  g.Sminus = g.Splus.adjoint();
  g.Sx = 0.5 * (g.Splus + g.Sminus);
  g.Sy = (g.Splus - g.Sminus) / (2.0 * I);
  g.Sz = OperatorMatrix::Zero(3, 3);
  g.Sz(0, 0) = 1.0;
  g.Sz(2, 2) = -1.0;
  g.anticomm_xy = g.Sx * g.Sy + g.Sy * g.Sx;
  return g;
}

SpinHalfGenerators make_spin_half() {
  SpinHalfGenerators g;
  g.Ix = OperatorMatrix::Zero(2, 2);
  g.Iy = OperatorMatrix::Zero(2, 2);
  g.Iz = OperatorMatrix::Zero(2, 2);
  g.Ix(0, 1) = g.Ix(1, 0) = 0.5;
  g.Iy(0, 1) = -0.5 * I;
  g.Iy(1, 0) = 0.5 * I;
  g.Iz(0, 0) = 0.5;
  g.Iz(1, 1) = -0.5;
  return g;
}

OperatorMatrix identity(Eigen::Index n) { return OperatorMatrix::Identity(n, n); }

}  // namespace

CompositeSpace::CompositeSpace(int n) : n_nuclei(n) {
  if (n < 0 || n > 20) throw std::invalid_argument("CompositeSpace: nucleus count out of range");
}

const Spin1Generators& spin1_generators() {
  static const Spin1Generators g = make_spin1();
  return g;
}

const SpinHalfGenerators& spin_half_generators() {
  static const SpinHalfGenerators g = make_spin_half();
  return g;
}

OperatorMatrix embed(const OperatorMatrix& op, Site site, const CompositeSpace& space) {
  const Eigen::Index nd = space.nuclear_dim();
  if (site.kind == Site::Kind::electron) {
    if (op.rows() != 3 || op.cols() != 3)
      throw std::invalid_argument("embed: electron operator must be 3x3");
    return Eigen::kroneckerProduct(op, identity(nd)).eval();
  }
  if (site.index < 0 || site.index >= space.n_nuclei)
    throw std::out_of_range("embed: nucleus index " + std::to_string(site.index) +
                            " out of range for N=" + std::to_string(space.n_nuclei));
  if (op.rows() != 2 || op.cols() != 2)
    throw std::invalid_argument("embed: nuclear operator must be 2x2");
  const Eigen::Index left = Eigen::Index{3} << site.index;
  const Eigen::Index right = Eigen::Index{1} << (space.n_nuclei - 1 - site.index);
  OperatorMatrix inner = Eigen::kroneckerProduct(op, identity(right)).eval();
  return Eigen::kroneckerProduct(identity(left), inner).eval();
}

OperatorMatrix nuclear_embed(const OperatorMatrix& op, int m, int n_nuclei) {
  if (m < 0 || m >= n_nuclei) throw std::out_of_range("nuclear_embed: nucleus index out of range");
  if (op.rows() != 2 || op.cols() != 2)
    throw std::invalid_argument("nuclear_embed: nuclear operator must be 2x2");
  const Eigen::Index left = Eigen::Index{1} << m;
  const Eigen::Index right = Eigen::Index{1} << (n_nuclei - 1 - m);
  OperatorMatrix inner = Eigen::kroneckerProduct(op, identity(right)).eval();
  return Eigen::kroneckerProduct(identity(left), inner).eval();
}

OperatorMatrix embed_pair(const OperatorMatrix& a, int m, const OperatorMatrix& b, int n,
                          const CompositeSpace& space) {
  if (m == n) throw std::invalid_argument("embed_pair: nuclei must be distinct");
  return embed(a, Site::nucleus(m), space) * embed(b, Site::nucleus(n), space);
}

OperatorMatrix commutator(const OperatorMatrix& a, const OperatorMatrix& b) {
  return a * b - b * a;
}

OperatorMatrix anticommutator(const OperatorMatrix& a, const OperatorMatrix& b) {
  return a * b + b * a;
}

double hermiticity_residual(const OperatorMatrix& a) {
  const double n = a.norm();
  if (n == 0.0) return 0.0;
  return (a - a.adjoint()).norm() / n;
}

double unitarity_residual(const OperatorMatrix& u) {
  return (u.adjoint() * u - identity(u.rows())).norm();
}

// --- DensityMatrix ---------------------------------------------------------

DensityMatrix::DensityMatrix(OperatorMatrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols() || m_.rows() == 0)
    throw std::invalid_argument("DensityMatrix: matrix must be square and nonempty");
  const Diagnostics d = diagnose();
  if (d.hermiticity > kHermitianTol)
    throw std::invalid_argument("DensityMatrix: not Hermitian (residual " +
                                std::to_string(d.hermiticity) + ")");
  if (d.trace_error > kTraceTol)
    throw std::invalid_argument("DensityMatrix: trace differs from 1 by " +
                                std::to_string(d.trace_error));
  if (d.min_eigenvalue < -kPositivityTol)
    throw std::invalid_argument("DensityMatrix: negative eigenvalue " +
                                std::to_string(d.min_eigenvalue));
}

DensityMatrix DensityMatrix::trusted(OperatorMatrix m) { return {std::move(m), Unchecked{}}; }

DensityMatrix DensityMatrix::maximally_mixed(Eigen::Index dim) {
  return trusted(identity(dim) / static_cast<double>(dim));
}

double DensityMatrix::purity() const {
  // Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
  return m_.squaredNorm();
}

DensityMatrix::Diagnostics DensityMatrix::diagnose() const {
  Diagnostics d;
  d.hermiticity = hermiticity_residual(m_);
  d.trace_error = std::abs(m_.trace() - Complex{1.0, 0.0});
  const OperatorMatrix h = 0.5 * (m_ + m_.adjoint());
  Eigen::SelfAdjointEigenSolver<OperatorMatrix> es(h, Eigen::EigenvaluesOnly);
  d.min_eigenvalue = es.eigenvalues().minCoeff();
  d.purity = purity();
  return d;
}

// --- expectation / partial trace ---------------------------------------------

double expectation(const OperatorMatrix& rho, const OperatorMatrix& obs) {
  if (rho.rows() != obs.rows() || rho.cols() != obs.cols())
    throw std::invalid_argument("expectation: dimension mismatch");
  if (hermiticity_residual(obs) > 1e-12)
    throw std::invalid_argument("expectation: observable is not Hermitian");
  // Tr(rho obs) = sum_ij rho_ij obs_ji
  const Complex v = (rho.transpose().cwiseProduct(obs)).sum();
  const double scale = std::max(1.0, obs.norm());
  if (std::abs(v.imag()) > 1e-10 * scale)
    throw std::runtime_error("expectation: imaginary residue " + std::to_string(v.imag()));
  return v.real();
}

double expectation(const DensityMatrix& rho, const OperatorMatrix& obs) {
  return expectation(rho.matrix(), obs);
}

OperatorMatrix partial_trace_nuclear(const OperatorMatrix& rho, const CompositeSpace& space) {
  if (rho.rows() != space.dim() || rho.cols() != space.dim())
    throw std::invalid_argument("partial_trace_nuclear: dimension mismatch");
  const Eigen::Index nd = space.nuclear_dim();
  OperatorMatrix out(3, 3);
  for (Eigen::Index a = 0; a < 3; ++a)
    for (Eigen::Index b = 0; b < 3; ++b)
      out(a, b) = rho.block(a * nd, b * nd, nd, nd).trace();
  return out;
}

DensityMatrix partial_trace_nuclear(const DensityMatrix& rho, const CompositeSpace& space) {
  return DensityMatrix::trusted(partial_trace_nuclear(rho.matrix(), space));
}

}  // namespace clockecho
