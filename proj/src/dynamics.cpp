#include "clockecho/dynamics.hpp"

#include "clockecho/constants.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <queue>
#include <thread>

namespace clockecho {

namespace {

constexpr Complex I{0.0, 1.0};

double beta_hz(double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("thermal_state: temperature must be > 0");
  return constants::planck / (constants::boltzmann * temperature);
}

RealVector boltzmann_weights(const RealVector& f, double beta, double f_min) {
  RealVector w(f.size());
  for (Eigen::Index k = 0; k < f.size(); ++k) w(k) = std::exp(-beta * (f(k) - f_min));
  return w;
}

// Fractional part of f*tau in cycles, then the angle.
double phase_angle(double f, double tau) {
  const double cycles = f * tau;
  return 2.0 * constants::pi * (cycles - std::round(cycles));
}

}  // namespace

// --- thermal state and propagation -------------------------------------------------

DensityMatrix thermal_state(const Eigensystem& es, double temperature) {
  const double beta = beta_hz(temperature);
  RealVector w = boltzmann_weights(es.values, beta, es.values.minCoeff());
  w /= w.sum();
  OperatorMatrix rho = es.vectors * w.asDiagonal() * es.vectors.adjoint();
  rho = 0.5 * (rho + rho.adjoint()).eval();
  return DensityMatrix(std::move(rho));
}

DensityMatrix thermal_state(const OperatorMatrix& H, double temperature) {
  beta_hz(temperature);
  return thermal_state(eigensolve(H), temperature);
}

DensityMatrix propagate(const DensityMatrix& rho, const Eigensystem& es, double tau) {
  if (rho.dim() != es.dim()) throw std::invalid_argument("propagate: dimension mismatch");
  if (tau < 0.0) throw std::invalid_argument("propagate: tau must be >= 0");
  const Eigen::Index d = es.dim();
  Eigen::VectorXcd u(d);
  const double ref = es.values.mean();
  for (Eigen::Index k = 0; k < d; ++k) u(k) = std::polar(1.0, -phase_angle(es.values(k) - ref, tau));
  OperatorMatrix r = es.vectors.adjoint() * rho.matrix() * es.vectors;
  r = u.asDiagonal() * r * u.conjugate().asDiagonal();
  return DensityMatrix::trusted(es.vectors * r * es.vectors.adjoint());
}

DensityMatrix propagate_expm(const DensityMatrix& rho, const OperatorMatrix& H, double tau) {
  if (rho.dim() != H.rows()) throw std::invalid_argument("propagate_expm: dimension mismatch");
  if (tau < 0.0) throw std::invalid_argument("propagate_expm: tau must be >= 0");
  const Complex shift = H.trace() / static_cast<double>(H.rows());
  const OperatorMatrix A =
      (-2.0 * constants::pi * tau * I) * (H - shift * OperatorMatrix::Identity(H.rows(), H.rows()));
  const OperatorMatrix U = A.exp();
  return DensityMatrix::trusted(U * rho.matrix() * U.adjoint());
}

// --- pulses ---------------------------------------------------------------------------

OperatorMatrix electron_pulse(double phi) {
  // K = {Sx,Sy} has spectrum {-1, 0, 1}, so K^3 = K.
  const OperatorMatrix& K = spin1_generators().anticomm_xy;
  const double a = 0.5 * phi;
  return OperatorMatrix::Identity(3, 3) + (I * std::sin(a)) * K + (std::cos(a) - 1.0) * (K * K);
}

OperatorMatrix pulse_operator(double phi, const CompositeSpace& space) {
  return embed(electron_pulse(phi), Site::electron(), space);
}

namespace {

struct TransferModel {
  Complex k1, k2;  // <e|K|g>, <e|K^2|g>
  Complex g1, g2;  // <g|K|g>, <g|K^2|g>

  explicit TransferModel(const Eigensystem& es) {
    if (es.dim() != 3) throw std::invalid_argument("calibrate_pulses: expects the 3x3 electronic system");
    const OperatorMatrix& K = spin1_generators().anticomm_xy;
    const OperatorMatrix K2 = K * K;
    const auto g = es.vectors.col(0);
    const auto e = es.vectors.col(1);
    k1 = e.dot(K * g);
    k2 = e.dot(K2 * g);
    g1 = g.dot(K * g);
    g2 = g.dot(K2 * g);
  }
  Complex excited(double phi) const {
    const double a = 0.5 * phi;
    return I * std::sin(a) * k1 + (std::cos(a) - 1.0) * k2;
  }
  Complex ground(double phi) const {
    const double a = 0.5 * phi;
    return 1.0 + I * std::sin(a) * g1 + (std::cos(a) - 1.0) * g2;
  }
  double transfer(double phi) const { return std::norm(excited(phi)); }
  double transfer_slope(double phi) const {
    const double a = 0.5 * phi;
    const Complex dt = 0.5 * (I * std::cos(a) * k1 - std::sin(a) * k2);
    return 2.0 * (std::conj(excited(phi)) * dt).real();
  }
  double imbalance(double phi) const { return std::norm(excited(phi)) - std::norm(ground(phi)); }
};

template <class F>
double bracketed_root(F f, double lo, double hi) {
  const double flo = f(lo), fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) throw NumericalError("calibrate_pulses: root not bracketed");
  boost::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi,
                                                   boost::math::tools::eps_tolerance<double>(52),
                                                   iters);
  return 0.5 * (r.first + r.second);
}

}  // namespace

double population_transfer(const Eigensystem& electronic, double phi) {
  return TransferModel(electronic).transfer(phi);
}

PulseAngles calibrate_pulses(const Eigensystem& electronic) {
  const TransferModel m(electronic);
  constexpr int kScan = 256;
  const double h = 2.0 * constants::pi / kScan;
  int best = 1;
  for (int k = 2; k < kScan; ++k)
    if (m.transfer(k * h) > m.transfer(best * h)) best = k;
  if (best == 1 || best == kScan - 1 || m.transfer(best * h) < 1e-6)
    throw NumericalError("calibrate_pulses: no interior maximum of the population transfer");

  PulseAngles out;
  const double lo = (best - 1) * h, hi = (best + 1) * h;
  if (m.transfer_slope(lo) > 0.0 && m.transfer_slope(hi) < 0.0)
    out.phi_pi = bracketed_root([&](double x) { return m.transfer_slope(x); }, lo, hi);
  else
    out.phi_pi = best * h;
  out.max_transfer = m.transfer(out.phi_pi);

  // Equal populations on the way up to phi_pi.
  out.phi_half = bracketed_root([&](double x) { return m.imbalance(x); }, 1e-12, out.phi_pi);
  return out;
}

PulseAngles calibrate_pulses(const ModelParams& p) {
  return calibrate_pulses(eigensolve(build_electronic(p)));
}

// --- echo engine ------------------------------------------------------------------------

struct EchoEngine::Impl {
  bool real = false;
  RealVector f;  // eigenfrequencies, shifted by their mean
  // real path
  Eigen::MatrixXd rho1_r, sz_r, p_r;
  // complex path
  OperatorMatrix rho1_c, sz_c, p_c;

  double signal_real(double tau) const;
  double signal_complex(double tau) const;
};

namespace {

std::vector<Eigen::Index> coupled_block(const OperatorMatrix& H, int n) {
  const Eigen::Index nd = Eigen::Index{1} << n;
  std::vector<Eigen::Index> a;
  for (Eigen::Index i = 0; i < nd; ++i) a.push_back(i);
  for (Eigen::Index i = 2 * nd; i < 3 * nd; ++i) a.push_back(i);
  // m_S = 0 must decouple; otherwise keep everything.
  const double tol = 1e-14 * std::max(1.0, H.cwiseAbs().maxCoeff());
  double off = 0.0;
  for (Eigen::Index i : a) off = std::max(off, H.block(nd, i, nd, 1).cwiseAbs().maxCoeff());
  if (off > tol) {
    a.clear();
    for (Eigen::Index i = 0; i < H.rows(); ++i) a.push_back(i);
  }
  return a;
}

OperatorMatrix take(const OperatorMatrix& m, const std::vector<Eigen::Index>& idx) {
  return m(idx, idx);
}

// Diagonal unitary G with G^dagger H G real, when one exists.
std::optional<Eigen::VectorXcd> real_gauge(const OperatorMatrix& H) {
  const Eigen::Index d = H.rows();
  const double tol = 1e-14 * std::max(1.0, H.cwiseAbs().maxCoeff());
  Eigen::VectorXcd g = Eigen::VectorXcd::Zero(d);
  std::vector<bool> seen(static_cast<std::size_t>(d), false);
  for (Eigen::Index root = 0; root < d; ++root) {
    if (seen[root]) continue;
    seen[root] = true;
    g(root) = 1.0;
    std::queue<Eigen::Index> q;
    q.push(root);
    while (!q.empty()) {
      const Eigen::Index i = q.front();
      q.pop();
      for (Eigen::Index j = 0; j < d; ++j) {
        if (seen[j] || std::abs(H(i, j)) <= tol) continue;
        seen[j] = true;
        g(j) = g(i) * std::conj(H(i, j)) / std::abs(H(i, j));
        q.push(j);
      }
    }
  }
  const OperatorMatrix h = g.conjugate().asDiagonal() * H * g.asDiagonal();
  if (h.imag().cwiseAbs().maxCoeff() > tol) return std::nullopt;
  return g;
}

bool is_real(const OperatorMatrix& m) {
  return m.imag().cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, m.cwiseAbs().maxCoeff());
}

}  // namespace

EchoEngine::EchoEngine(const OperatorMatrix& H_tot, int n_nuclei, double temperature,
                       double phi_half, double phi_pi, Path path)
    : impl_(std::make_unique<Impl>()) {
  const CompositeSpace space(n_nuclei);
  if (H_tot.rows() != space.dim() || H_tot.cols() != space.dim())
    throw std::invalid_argument("EchoEngine: Hamiltonian does not match the composite space");
  if (hermiticity_residual(H_tot) > 1e-12)
    throw std::invalid_argument("EchoEngine: Hamiltonian is not Hermitian");
  const double beta = beta_hz(temperature);

  std::vector<Eigen::Index> a;
  if (path == Path::full_space) {
    for (Eigen::Index i = 0; i < space.dim(); ++i) a.push_back(i);
  } else {
    a = coupled_block(H_tot, n_nuclei);
  }
  std::vector<Eigen::Index> b;
  {
    std::vector<bool> in(static_cast<std::size_t>(space.dim()), false);
    for (Eigen::Index i : a) in[i] = true;
    for (Eigen::Index i = 0; i < space.dim(); ++i)
      if (!in[i]) b.push_back(i);
  }

  const OperatorMatrix Hh = 0.5 * (H_tot + H_tot.adjoint());
  OperatorMatrix Ha = take(Hh, a);
  OperatorMatrix Ph = take(pulse_operator(phi_half, space), a);
  OperatorMatrix Pp = take(pulse_operator(phi_pi, space), a);
  OperatorMatrix Sz = take(embed(spin1_generators().Sz, Site::electron(), space), a);

  // Spectrum of the discarded block only enters the partition function.
  RealVector fb;
  if (!b.empty()) {
    Eigen::SelfAdjointEigenSolver<OperatorMatrix> eb(take(Hh, b), Eigen::EigenvaluesOnly);
    fb = eb.eigenvalues();
  }

  Impl& m = *impl_;
  if (path == Path::automatic) {
    if (auto g = real_gauge(Ha)) {
      const auto gauge = [&](const OperatorMatrix& x) -> OperatorMatrix {
        return g->conjugate().asDiagonal() * x * g->asDiagonal();
      };
      OperatorMatrix Ha_g = gauge(Ha), Ph_g = gauge(Ph), Pp_g = gauge(Pp), Sz_g = gauge(Sz);
      if (is_real(Ha_g) && is_real(Ph_g) && is_real(Pp_g) && is_real(Sz_g)) {
        m.real = true;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ha_g.real());
        if (es.info() != Eigen::Success) throw NumericalError("EchoEngine: eigensolver failed");
        const Eigen::MatrixXd& V = es.eigenvectors();
        const RealVector& fa = es.eigenvalues();
        const double fmin = b.empty() ? fa.minCoeff() : std::min(fa.minCoeff(), fb.minCoeff());
        const RealVector wa = boltzmann_weights(fa, beta, fmin);
        const double Z = wa.sum() + (b.empty() ? 0.0 : boltzmann_weights(fb, beta, fmin).sum());
        const Eigen::MatrixXd Phe = V.transpose() * Ph_g.real() * V;
        m.p_r = V.transpose() * Pp_g.real() * V;
        m.sz_r = V.transpose() * Sz_g.real() * V;
        m.rho1_r = Phe * (wa / Z).asDiagonal() * Phe.transpose();
        m.f = fa.array() - fa.mean();
        return;
      }
    }
  }

  Eigen::SelfAdjointEigenSolver<OperatorMatrix> es(Ha);
  if (es.info() != Eigen::Success) throw NumericalError("EchoEngine: eigensolver failed");
  const OperatorMatrix& V = es.eigenvectors();
  const RealVector& fa = es.eigenvalues();
  const double fmin = b.empty() ? fa.minCoeff() : std::min(fa.minCoeff(), fb.minCoeff());
  const RealVector wa = boltzmann_weights(fa, beta, fmin);
  const double Z = wa.sum() + (b.empty() ? 0.0 : boltzmann_weights(fb, beta, fmin).sum());
  const OperatorMatrix Phe = V.adjoint() * Ph * V;
  m.p_c = V.adjoint() * Pp * V;
  m.sz_c = V.adjoint() * Sz * V;
  m.rho1_c = Phe * (wa / Z).cast<Complex>().asDiagonal() * Phe.adjoint();
  m.f = fa.array() - fa.mean();
}

EchoEngine::~EchoEngine() = default;
EchoEngine::EchoEngine(EchoEngine&&) noexcept = default;
EchoEngine& EchoEngine::operator=(EchoEngine&&) noexcept = default;

bool EchoEngine::real_arithmetic() const { return impl_->real; }
Eigen::Index EchoEngine::working_dim() const { return impl_->f.size(); }

double EchoEngine::Impl::signal_real(double tau) const {
  const Eigen::Index d = f.size();
  RealVector c(d), s(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double th = phase_angle(f(k), tau);
    c(k) = std::cos(th);
    s(k) = std::sin(th);
  }
  // exp(-i(th_j - th_k)) = C - iS
  const Eigen::MatrixXd C = c * c.transpose() + s * s.transpose();
  const Eigen::MatrixXd S = s * c.transpose() - c * s.transpose();
  Eigen::MatrixXd L(d, 2 * d), R(d, 2 * d);
  L.leftCols(d) = rho1_r.cwiseProduct(C);
  L.rightCols(d) = rho1_r.cwiseProduct(S);
  R.leftCols(d) = sz_r.cwiseProduct(C);
  R.rightCols(d) = sz_r.cwiseProduct(S);
  Eigen::MatrixXd X(d, 2 * d), Y(d, 2 * d);
  X.noalias() = p_r * L;
  Y.noalias() = p_r.transpose() * R;
  return X.leftCols(d).cwiseProduct(Y.leftCols(d).transpose()).sum() +
         X.rightCols(d).cwiseProduct(Y.rightCols(d).transpose()).sum();
}

double EchoEngine::Impl::signal_complex(double tau) const {
  const Eigen::Index d = f.size();
  Eigen::VectorXcd u(d);
  for (Eigen::Index k = 0; k < d; ++k) u(k) = std::polar(1.0, -phase_angle(f(k), tau));
  const OperatorMatrix E = u * u.adjoint();
  OperatorMatrix M1(d, d), M2(d, d);
  M1.noalias() = p_c * rho1_c.cwiseProduct(E);
  M2.noalias() = p_c.adjoint() * sz_c.cwiseProduct(E.conjugate());
  return M1.cwiseProduct(M2.transpose()).sum().real();
}

double EchoEngine::signal(double tau) const {
  if (tau < 0.0) throw std::invalid_argument("EchoEngine::signal: tau must be >= 0");
  return impl_->real ? impl_->signal_real(tau) : impl_->signal_complex(tau);
}

std::vector<double> EchoEngine::signal(std::span<const double> taus) const {
  std::vector<double> out;
  out.reserve(taus.size());
  for (double t : taus) out.push_back(signal(t));
  return out;
}

// --- sequences ----------------------------------------------------------------------------

std::vector<double> tau_grid(const SequenceConfig& seq) {
  seq.validate();
  const int n = seq.n_points();
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) t[k] = (k + 1) * seq.tau_step;
  return t;
}

PulseAngles resolve_pulses(const ModelParams& p, const SequenceConfig& seq) {
  if (seq.phi_half && seq.phi_pi) {
    const Eigensystem es = eigensolve(build_electronic(p));
    return {*seq.phi_half, *seq.phi_pi, population_transfer(es, *seq.phi_pi)};
  }
  PulseAngles a = calibrate_pulses(p);
  if (seq.phi_half) a.phi_half = *seq.phi_half;
  if (seq.phi_pi) a.phi_pi = *seq.phi_pi;
  return a;
}

namespace {

EchoTrace make_trace(const ModelParams& p, const BathRealization& bath, const PulseAngles& a,
                     std::vector<double> tau) {
  EchoTrace t;
  t.tau = std::move(tau);
  t.meta.params = p;
  t.meta.seeds = {bath.seed};
  t.meta.realizations = {bath.index};
  t.meta.phi_half = a.phi_half;
  t.meta.phi_pi = a.phi_pi;
  return t;
}

}  // namespace

EchoEngine make_echo_engine(const ModelParams& p, const BathRealization& bath,
                            const SequenceConfig& seq, PulseAngles* used) {
  p.validate();
  seq.validate();
  const PulseAngles a = resolve_pulses(p, seq);
  if (used) *used = a;
  const CompositeSpace space(bath.size());
  return EchoEngine(build_total(p, bath, space), space.n_nuclei, seq.temperature, a.phi_half,
                    a.phi_pi);
}

std::vector<EnvelopePoint> envelope_peaks(const EchoEngine& engine, std::span<const double> taus,
                                          double window) {
  if (taus.size() < 2) throw std::invalid_argument("envelope_peaks: need at least two delays");
  if (!(window > 0.0)) throw std::invalid_argument("envelope_peaks: window must be positive");
  const std::vector<double> v = engine.signal(taus);
  std::vector<EnvelopePoint> out;
  std::size_t start = 0;
  while (start < taus.size()) {
    std::size_t end = start;
    while (end < taus.size() && taus[end] < taus[start] + window) ++end;
    EnvelopePoint e{taus[start], v[start]};
    for (std::size_t i = start; i < end; ++i) {
      const bool left = i == 0 || v[i] >= v[i - 1];
      const bool right = i + 1 == taus.size() || v[i] >= v[i + 1];
      if (!left || !right) continue;
      if (v[i] > e.intensity) e = {taus[i], v[i]};
      const double lo = i > 0 ? taus[i - 1] : taus[i];
      const double hi = i + 1 < taus.size() ? taus[i + 1] : taus[i];
      if (!(hi > lo)) continue;
      const auto r = boost::math::tools::brent_find_minima(
          [&](double t) { return -engine.signal(t); }, lo, hi,
          std::numeric_limits<double>::digits);
      if (-r.second > e.intensity) e = {r.first, -r.second};
    }
    out.push_back(e);
    start = end;
  }
  return out;
}

EchoTrace hahn_echo_trace(const ModelParams& p, const BathRealization& bath,
                          const SequenceConfig& seq) {
  PulseAngles a;
  const EchoEngine engine = make_echo_engine(p, bath, seq, &a);
  EchoTrace t = make_trace(p, bath, a, tau_grid(seq));
  t.intensity = engine.signal(t.tau);
  return t;
}

EchoTrace hahn_echo_reference(const ModelParams& p, const BathRealization& bath,
                              const SequenceConfig& seq) {
  p.validate();
  const PulseAngles a = resolve_pulses(p, seq);
  const CompositeSpace space(bath.size());
  const Eigensystem es = eigensolve(build_total(p, bath, space));
  const DensityMatrix rho_eq = thermal_state(es, seq.temperature);
  const OperatorMatrix Ph = pulse_operator(a.phi_half, space);
  const OperatorMatrix Pp = pulse_operator(a.phi_pi, space);
  const OperatorMatrix Sz = embed(spin1_generators().Sz, Site::electron(), space);
  const DensityMatrix rho1 = DensityMatrix::trusted(Ph * rho_eq.matrix() * Ph.adjoint());

  EchoTrace t = make_trace(p, bath, a, tau_grid(seq));
  t.intensity.reserve(t.tau.size());
  for (double tau : t.tau) {
    DensityMatrix r = propagate(rho1, es, tau);
    r = DensityMatrix::trusted(Pp * r.matrix() * Pp.adjoint());
    r = propagate(r, es, tau);
    t.intensity.push_back(expectation(r, Sz));
  }
  return t;
}

// --- field sweep ------------------------------------------------------------------------------

std::vector<EchoTrace> field_sweep(const ModelParams& p, std::span<const BathRealization> baths,
                                   const SequenceConfig& seq, std::span<const double> detunings,
                                   int jobs) {
  if (detunings.empty()) throw std::invalid_argument("field_sweep: empty detuning grid");
  if (baths.empty()) throw std::invalid_argument("field_sweep: no bath realizations");
  if (jobs < 1) throw std::invalid_argument("field_sweep: jobs must be >= 1");
  seq.validate();

  const std::size_t nf = detunings.size(), nr = baths.size(), total = nf * nr;
  std::vector<EchoTrace> results(total);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  const auto worker = [&] {
    for (;;) {
      const std::size_t job = next.fetch_add(1);
      if (job >= total) return;
      try {
        const ModelParams q = p.at_detuning(detunings[job / nr]);
        results[job] = hahn_echo_trace(q, baths[job % nr], seq);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(total);
      }
    }
  };

  const int nthreads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(jobs), total));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int k = 0; k < nthreads; ++k) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<EchoTrace> out;
  out.reserve(nf);
  for (std::size_t i = 0; i < nf; ++i)
    out.push_back(ensemble_average(std::span<const EchoTrace>(results).subspan(i * nr, nr)));
  return out;
}

std::vector<EchoTrace> field_sweep(const ModelParams& p, const BathSpec& spec,
                                   const SequenceConfig& seq, std::span<const double> detunings,
                                   int jobs) {
  spec.validate();
  std::vector<BathRealization> baths;
  for (int r = 0; r < spec.n_realizations; ++r) baths.push_back(sample_bath(spec, r));
  return field_sweep(p, std::span<const BathRealization>(baths), seq, detunings, jobs);
}

}  // namespace clockecho
