#include "clockecho/hamiltonian.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <stdexcept>

namespace clockecho {

namespace {

constexpr Complex I{0.0, 1.0};

OperatorMatrix nuclear_identity(int n) {
  const Eigen::Index d = Eigen::Index{1} << n;
  return OperatorMatrix::Identity(d, d);
}

void check_bath(const BathRealization& bath, const CompositeSpace& space) {
  if (bath.size() != space.n_nuclei || static_cast<int>(bath.A_psc.size()) != space.n_nuclei)
    throw std::invalid_argument("bath realization size does not match the composite space");
  if (bath.theta.rows() != space.n_nuclei || bath.theta.cols() != space.n_nuclei)
    throw std::invalid_argument("bath angle table has the wrong shape");
}

}  // namespace

Eigen::Matrix2cd pauli_x() {
  Eigen::Matrix2cd m;
  m << 0.0, 1.0, 1.0, 0.0;
  return m;
}

Eigen::Matrix2cd pauli_y() {
  Eigen::Matrix2cd m;
  m << 0.0, -I, I, 0.0;
  return m;
}

Eigen::Matrix2cd pauli_z() {
  Eigen::Matrix2cd m;
  m << 1.0, 0.0, 0.0, -1.0;
  return m;
}

// --- eigensolver -----------------------------------------------------------------

void fix_phases(OperatorMatrix& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    auto col = vectors.col(c);
    const double big = col.cwiseAbs().maxCoeff();
    if (big == 0.0) continue;
    Eigen::Index pick = 0;
    while (std::abs(col(pick)) < big * (1.0 - 1e-10)) ++pick;
    const Complex z = col(pick);
    col *= std::conj(z) / std::abs(z);
  }
}

Eigensystem eigensolve(const OperatorMatrix& H) {
  if (H.rows() != H.cols() || H.rows() == 0)
    throw std::invalid_argument("eigensolve: matrix must be square and nonempty");
  if (hermiticity_residual(H) > 1e-12)
    throw std::invalid_argument("eigensolve: matrix is not Hermitian");
  const OperatorMatrix h = 0.5 * (H + H.adjoint());
  Eigen::SelfAdjointEigenSolver<OperatorMatrix> es(h);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigensolve: solver did not converge");
  Eigensystem out{es.eigenvalues(), es.eigenvectors()};
  fix_phases(out.vectors);
  return out;
}

// --- Hamiltonian terms -------------------------------------------------------------

OperatorMatrix build_electronic(const ModelParams& p) {
  const auto& s = spin1_generators();
  const OperatorMatrix one = OperatorMatrix::Identity(3, 3);
  // S(S+1)/3 = 2/3 for S = 1
  return p.D * (s.Sz * s.Sz - (2.0 / 3.0) * one) + p.E * (s.Sx * s.Sx - s.Sy * s.Sy) +
         p.gamma_e * p.detuning() * s.Sz;
}

OperatorMatrix build_hyperfine(const ModelParams& /*p*/, const BathRealization& bath,
                               const CompositeSpace& space) {
  check_bath(bath, space);
  const int n = space.n_nuclei;
  const auto& i = spin_half_generators();
  const Eigen::Index nd = space.nuclear_dim();
  OperatorMatrix h = OperatorMatrix::Zero(nd, nd);
  for (int m = 0; m < n; ++m) {
    const OperatorMatrix single = bath.A_sc[m] * i.Iz + bath.A_psc[m] * (i.Ix + i.Iy);
    h += nuclear_embed(single, m, n);
  }
  return Eigen::kroneckerProduct(spin1_generators().Sz, h).eval();
}

OperatorMatrix build_bath(const ModelParams& p, const BathRealization& bath,
                          const CompositeSpace& space) {
  check_bath(bath, space);
  const int n = space.n_nuclei;
  const auto& i = spin_half_generators();
  const Eigen::Index nd = space.nuclear_dim();
  OperatorMatrix h = OperatorMatrix::Zero(nd, nd);

  std::vector<OperatorMatrix> ix(n), iy(n), iz(n);
  for (int m = 0; m < n; ++m) {
    ix[m] = nuclear_embed(i.Ix, m, n);
    iy[m] = nuclear_embed(i.Iy, m, n);
    iz[m] = nuclear_embed(i.Iz, m, n);
  }
  for (int m = 0; m < n; ++m) {
    for (int k = 0; k < n; ++k) {
      if (k == m) continue;
      const double c = std::cos(bath.theta(m, k));
      const double w = bath.D_pair * (3.0 * c * c - 1.0);
      if (w == 0.0) continue;
      h -= w * (2.0 * iz[m] * iz[k] - ix[m] * ix[k] - iy[m] * iy[k]);
    }
    h -= p.gamma_H * p.B0 * iz[m];
  }
  return Eigen::kroneckerProduct(OperatorMatrix::Identity(3, 3), h).eval();
}

OperatorMatrix build_total(const ModelParams& p, const BathRealization& bath,
                           const CompositeSpace& space) {
  p.validate();
  const OperatorMatrix hs =
      Eigen::kroneckerProduct(build_electronic(p), nuclear_identity(space.n_nuclei)).eval();
  if (space.n_nuclei == 0) return hs;
  return hs + build_hyperfine(p, bath, space) + build_bath(p, bath, space);
}

// --- electronic spectrum -------------------------------------------------------------

std::vector<double> field_grid(double start, double stop, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("field_grid: step must be positive");
  if (!(stop >= start)) throw std::invalid_argument("field_grid: empty range");
  const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-6));
  std::vector<double> g;
  g.reserve(static_cast<std::size_t>(n + 1));
  for (long k = 0; k <= n; ++k) g.push_back(start + static_cast<double>(k) * step);
  return g;
}

ElectronSpectrum clock_frequency_curve(const ModelParams& p, std::span<const double> grid) {
  if (grid.empty()) throw std::invalid_argument("clock_frequency_curve: empty field grid");
  ElectronSpectrum out;
  for (double b : grid) {
    ModelParams q = p;
    q.B0 = b;
    Eigen::SelfAdjointEigenSolver<OperatorMatrix> es(build_electronic(q), Eigen::EigenvaluesOnly);
    const RealVector& v = es.eigenvalues();
    out.B0.push_back(b);
    out.energies.push_back({v(0), v(1), v(2)});
    out.f.push_back(v(1) - v(0));
  }
  const std::size_t n = out.B0.size();
  out.gamma_eff.assign(n, 0.0);
  if (n >= 2) {
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t lo = k == 0 ? 0 : k - 1;
      const std::size_t hi = k + 1 == n ? n - 1 : k + 1;
      out.gamma_eff[k] = (out.f[hi] - out.f[lo]) / (out.B0[hi] - out.B0[lo]);
    }
  }
  return out;
}

// --- two-level projection ---------------------------------------------------------------

FictitiousProjection project_fictitious(const ModelParams& p) {
  p.validate();
  const ModelParams ct = p.at_detuning(0.0);
  const Eigensystem es = eigensolve(build_electronic(ct));

  // The doublet is the pair of eigenvectors living on {|+1>, |-1>}.
  std::vector<Eigen::Index> doublet;
  for (Eigen::Index c = 0; c < 3; ++c)
    if (std::abs(es.vectors(1, c)) < 0.5) doublet.push_back(c);
  if (doublet.size() != 2) throw std::runtime_error("project_fictitious: no isolated doublet");

  FictitiousProjection out;
  for (Eigen::Index c : doublet) {
    Eigen::Vector3cd v = es.vectors.col(c);
    v *= std::conj(v(0)) / std::abs(v(0));  // <up|v> real positive
    const bool symmetric = (v(2) / v(0)).real() > 0.0;
    out.basis.col(symmetric ? 0 : 1) = v;
  }

  out.offset = p.D / 3.0;
  out.hamiltonian = p.E * pauli_z() + p.gamma_e * p.detuning() * pauli_x();

  const auto& s = spin1_generators();
  const auto project = [&](const OperatorMatrix& op) -> Eigen::Matrix2cd {
    return out.basis.adjoint() * op * out.basis;
  };
  const Eigen::Matrix2cd zero = Eigen::Matrix2cd::Zero();
  const auto add = [&](std::string name, const OperatorMatrix& op, const Eigen::Matrix2cd& want) {
    MappingRow r{std::move(name), project(op), want, 0.0};
    r.residual = (r.projected - r.expected).cwiseAbs().maxCoeff();
    out.rows.push_back(std::move(r));
  };
  add("Sz^2 -> 1", s.Sz * s.Sz, Eigen::Matrix2cd::Identity());
  add("Sz -> sigma_x", s.Sz, pauli_x());
  add("Sx^2 - Sy^2 -> sigma_z", s.Sx * s.Sx - s.Sy * s.Sy, pauli_z());
  add("{Sx,Sy} -> 2 sigma_y", s.anticomm_xy, 2.0 * pauli_y());
  add("Sx -> 0", s.Sx, zero);
  add("Sy -> 0", s.Sy, zero);
  add("{Sy,Sz} -> 0", anticommutator(s.Sy, s.Sz), zero);
  add("{Sz,Sx} -> 0", anticommutator(s.Sz, s.Sx), zero);
  out.anticomm_xy = project(s.anticomm_xy);
  return out;
}

}  // namespace clockecho
