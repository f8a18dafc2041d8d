#include "clockecho/spinops.hpp"

#include <doctest.h>

#include <random>

using namespace clockecho;

namespace {

OperatorMatrix random_hermitian(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  OperatorMatrix a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = Complex(g(rng), g(rng));
  return (a + a.adjoint()) / 2.0;
}

// Random valid state: A A^dagger / Tr.
OperatorMatrix random_state(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  OperatorMatrix a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = Complex(g(rng), g(rng));
  OperatorMatrix r = a * a.adjoint();
  return r / r.trace();
}

const Complex I(0.0, 1.0);

}  // namespace

TEST_CASE("spin-1 generators") {
  const auto& s = spin1_generators();
  CHECK(s.Sz(0, 0).real() == 1.0);
  CHECK(s.Sz(1, 1).real() == 0.0);
  CHECK(s.Sz(2, 2).real() == -1.0);
  CHECK((commutator(s.Sx, s.Sy) - I * s.Sz).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((commutator(s.Sy, s.Sz) - I * s.Sx).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((commutator(s.Sz, s.Sx) - I * s.Sy).cwiseAbs().maxCoeff() < 1e-14);
  // {Sx,Sy} from the ladder operators
  const OperatorMatrix alt = (s.Splus * s.Splus - s.Sminus * s.Sminus) / (2.0 * I);
  CHECK((s.anticomm_xy - alt).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((s.anticomm_xy - anticommutator(s.Sx, s.Sy)).cwiseAbs().maxCoeff() < 1e-15);
  const OperatorMatrix casimir = s.Sx * s.Sx + s.Sy * s.Sy + s.Sz * s.Sz;
  CHECK((casimir - 2.0 * OperatorMatrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("spin-1/2 generators") {
  const auto& s = spin_half_generators();
  CHECK(s.Iz(0, 0).real() == 0.5);
  CHECK(s.Iz(1, 1).real() == -0.5);
  const OperatorMatrix c = s.Ix * s.Ix + s.Iy * s.Iy + s.Iz * s.Iz;
  CHECK((c - 0.75 * OperatorMatrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((commutator(s.Ix, s.Iy) - I * s.Iz).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((commutator(s.Iy, s.Iz) - I * s.Ix).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((commutator(s.Iz, s.Ix) - I * s.Iy).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("embedding") {
  const auto& e = spin1_generators();
  const auto& n = spin_half_generators();

  SUBCASE("dimension and trace") {
    const OperatorMatrix sz = embed(e.Sz, Site::electron(), CompositeSpace(1));
    CHECK(sz.rows() == 6);
    CHECK(std::abs(sz.trace()) < 1e-15);
  }
  SUBCASE("disjoint factors commute") {
    CompositeSpace sp(2);
    const OperatorMatrix a = embed(n.Ix, Site::nucleus(0), sp);
    const OperatorMatrix b = embed(n.Iy, Site::nucleus(1), sp);
    CHECK(commutator(a, b).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(commutator(embed(e.Sx, Site::electron(), sp), a).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("identity stays identity") {
    CompositeSpace sp(3);
    const OperatorMatrix id = OperatorMatrix::Identity(sp.dim(), sp.dim());
    CHECK((embed(OperatorMatrix::Identity(3, 3), Site::electron(), sp) - id).norm() == 0.0);
    CHECK((embed(OperatorMatrix::Identity(2, 2), Site::nucleus(2), sp) - id).norm() == 0.0);
  }
  SUBCASE("homomorphism") {
    CompositeSpace sp(2);
    const OperatorMatrix ab = embed(e.Sx * e.Sy, Site::electron(), sp);
    const OperatorMatrix a_b = embed(e.Sx, Site::electron(), sp) * embed(e.Sy, Site::electron(), sp);
    CHECK((ab - a_b).cwiseAbs().maxCoeff() < 1e-15);
    const OperatorMatrix nn = embed(n.Ix * n.Iz, Site::nucleus(1), sp);
    CHECK((nn - embed(n.Ix, Site::nucleus(1), sp) * embed(n.Iz, Site::nucleus(1), sp))
              .cwiseAbs()
              .maxCoeff() < 1e-15);
  }
  SUBCASE("basis order: nucleus 0 is the most significant bit") {
    CompositeSpace sp(2);
    const OperatorMatrix z0 = embed(n.Iz, Site::nucleus(0), sp);
    // index 1 is m_S=+1, nucleus 0 up, nucleus 1 down
    CHECK(z0(1, 1).real() == 0.5);
    CHECK(z0(2, 2).real() == -0.5);
    const OperatorMatrix sz = embed(e.Sz, Site::electron(), sp);
    CHECK(sz(3, 3).real() == 1.0);
    CHECK(sz(4, 4).real() == 0.0);
  }
  SUBCASE("out of range") {
    CHECK_THROWS(embed(n.Iz, Site::nucleus(2), CompositeSpace(2)));
    CHECK_THROWS(embed(e.Sz, Site::nucleus(0), CompositeSpace(1)));
    CHECK_THROWS(embed(n.Iz, Site::electron(), CompositeSpace(1)));
  }
  SUBCASE("pair product") {
    CompositeSpace sp(3);
    const OperatorMatrix p = embed_pair(n.Ix, 0, n.Iz, 2, sp);
    const OperatorMatrix q = embed(n.Ix, Site::nucleus(0), sp) * embed(n.Iz, Site::nucleus(2), sp);
    CHECK((p - q).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("density matrix invariants") {
  std::mt19937_64 rng(7);
  CHECK_NOTHROW(DensityMatrix(random_state(6, rng)));
  OperatorMatrix bad = random_state(6, rng);
  bad(0, 0) += 0.1;
  CHECK_THROWS_AS(DensityMatrix{bad}, std::invalid_argument);
  OperatorMatrix neg = OperatorMatrix::Zero(2, 2);
  neg(0, 0) = 1.5;
  neg(1, 1) = -0.5;
  CHECK_THROWS_AS(DensityMatrix{neg}, std::invalid_argument);
  OperatorMatrix nh = random_state(4, rng);
  nh(0, 1) += Complex(0.0, 0.1);
  CHECK_THROWS_AS(DensityMatrix{nh}, std::invalid_argument);
  const DensityMatrix mm = DensityMatrix::maximally_mixed(12);
  CHECK(mm.purity() == doctest::Approx(1.0 / 12).epsilon(1e-14));
}

TEST_CASE("expectation") {
  CompositeSpace sp(2);
  const OperatorMatrix sz = embed(spin1_generators().Sz, Site::electron(), sp);
  CHECK(std::abs(expectation(DensityMatrix::maximally_mixed(sp.dim()), sz)) < 1e-15);

  OperatorMatrix up = OperatorMatrix::Zero(3, 3);
  up(0, 0) = 1.0;
  const OperatorMatrix bath = OperatorMatrix::Identity(4, 4) / 4.0;
  OperatorMatrix rho(12, 12);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rho.block(4 * i, 4 * j, 4, 4) = up(i, j) * bath;
  CHECK(expectation(DensityMatrix(rho), sz) == doctest::Approx(1.0).epsilon(1e-15));

  std::mt19937_64 rng(3);
  const OperatorMatrix s = random_state(12, rng);
  OperatorMatrix nonherm = random_hermitian(12, rng);
  nonherm(0, 1) += 1.0;
  CHECK_THROWS_AS(expectation(s, nonherm), std::invalid_argument);
  CHECK_THROWS_AS(expectation(s, OperatorMatrix::Identity(6, 6)), std::invalid_argument);
}

TEST_CASE("partial trace") {
  std::mt19937_64 rng(11);
  CompositeSpace sp(2);

  SUBCASE("product state") {
    const OperatorMatrix re = random_state(3, rng);
    const OperatorMatrix rb = random_state(4, rng);
    OperatorMatrix rho(12, 12);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) rho.block(4 * i, 4 * j, 4, 4) = re(i, j) * rb;
    CHECK((partial_trace_nuclear(rho, sp) - re).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("trace and Sz identity on random states") {
    const OperatorMatrix rho = random_state(12, rng);
    const OperatorMatrix red = partial_trace_nuclear(rho, sp);
    CHECK(std::abs(red.trace() - rho.trace()) < 1e-12);
    const auto& s = spin1_generators();
    CHECK(expectation(red, s.Sz) ==
          doctest::Approx(expectation(rho, embed(s.Sz, Site::electron(), sp))).epsilon(1e-13));
  }
  SUBCASE("electron operator times bath trace") {
    const OperatorMatrix sx = spin1_generators().Sx;
    const OperatorMatrix red = partial_trace_nuclear(embed(sx, Site::electron(), sp), sp);
    CHECK((red - 4.0 * sx).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS(partial_trace_nuclear(OperatorMatrix::Identity(6, 6), sp));
  }
}

TEST_CASE("residual helpers") {
  CHECK(hermiticity_residual(OperatorMatrix::Zero(3, 3)) == 0.0);
  CHECK(unitarity_residual(OperatorMatrix::Identity(5, 5)) == 0.0);
  OperatorMatrix a = OperatorMatrix::Zero(2, 2);
  a(0, 1) = 1.0;
  CHECK(hermiticity_residual(a) == doctest::Approx(std::sqrt(2.0)));
}
