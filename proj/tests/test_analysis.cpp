#include "clockecho/analysis.hpp"
#include "clockecho/constants.hpp"
#include "clockecho/dynamics.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

using namespace clockecho;

namespace {

constexpr double two_pi = 2.0 * constants::pi;

// Default grid: tau = 100 ns ... 100 us.
EchoTrace make_trace(const std::function<double(double)>& f, double step = 100e-9,
                     std::size_t n = 1000) {
  EchoTrace t;
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = step * static_cast<double>(i + 1);
    t.tau.push_back(tau);
    t.intensity.push_back(f(tau));
  }
  return t;
}

Spectrum synthetic_spectrum(std::vector<double> amp, double df) {
  Spectrum s;
  s.amplitude = std::move(amp);
  for (std::size_t k = 0; k < s.amplitude.size(); ++k) s.frequency.push_back(df * static_cast<double>(k));
  s.bin_width = df;
  return s;
}

Peak peak(double f_MHz, double amp) { return {f_MHz * 1e6, amp, {}}; }

}  // namespace

TEST_CASE("fit_decay round trips") {
  SUBCASE("mono-exponential") {
    const double Tm = 8.43e-6;
    const EchoTrace t = make_trace([&](double tau) { return 0.8 * std::exp(-2.0 * tau / Tm); });
    const DecayFit f = fit_decay(t, DecayModel::mono);
    CHECK(f.T_m == doctest::Approx(Tm).epsilon(1e-3));
    CHECK(f.I0 == doctest::Approx(0.8).epsilon(1e-3));
    CHECK(f.x == 1.0);
    CHECK_FALSE(f.no_decay);
  }
  SUBCASE("stretched, x = 2") {
    const EchoTrace t = make_trace([](double tau) { return std::exp(-std::pow(2.0 * tau / 20e-6, 2.0)); });
    const DecayFit f = fit_decay(t, DecayModel::stretched);
    CHECK(f.x == doctest::Approx(2.0).epsilon(1e-2));
    CHECK(f.T_m == doctest::Approx(20e-6).epsilon(1e-3));
    CHECK(f.x >= 0.5);
    CHECK(f.x <= 3.0);
  }
  SUBCASE("with a floor") {
    const EchoTrace t = make_trace([](double tau) { return 0.9 * std::exp(-std::pow(2.0 * tau / 15e-6, 1.5)) + 0.05; });
    const DecayFit f = fit_decay(t, DecayModel::stretched, true);
    CHECK(f.T_m == doctest::Approx(15e-6).epsilon(1e-3));
    CHECK(f.baseline == doctest::Approx(0.05).epsilon(1e-3));
  }
  SUBCASE("constant trace is no decay") {
    const EchoTrace t = make_trace([](double) { return 0.4; });
    const DecayFit f = fit_decay(t);
    CHECK(f.no_decay);
    CHECK(f.T_m >= 10.0 * 100e-6);
    CHECK(f.eval(1e-6) == doctest::Approx(0.4));
  }
  SUBCASE("too short") {
    CHECK_THROWS_AS(fit_decay(make_trace([](double) { return 1.0; }, 100e-9, 19)), std::invalid_argument);
  }
}

TEST_CASE("subtract_background") {
  const EchoTrace bg = make_trace([](double tau) { return std::exp(-2.0 * tau / 30e-6); });
  const DecayFit f = fit_decay(bg, DecayModel::mono);
  SUBCASE("own fit leaves nothing") {
    const EchoTrace r = subtract_background(bg, f);
    for (double x : r.intensity) CHECK(std::abs(x) < 1e-6);
    // nothing left to decay
    const EchoTrace flat = make_trace([](double) { return 1.0; });
    EchoTrace shifted = r;
    for (std::size_t i = 0; i < r.size(); ++i) shifted.intensity[i] = 1.0 + r.intensity[i];
    CHECK(fit_decay(shifted, DecayModel::mono).no_decay);
  }
  SUBCASE("injected sinusoid survives") {
    EchoTrace t = bg;
    for (std::size_t i = 0; i < t.size(); ++i) t.intensity[i] += 0.05 * std::sin(two_pi * 1e6 * t.tau[i]);
    const EchoTrace r = subtract_background(t, fit_decay(t, DecayModel::mono));
    double hi = 0.0, mean = 0.0;
    for (double x : r.intensity) hi = std::max(hi, std::abs(x)), mean += x / static_cast<double>(r.size());
    CHECK(hi == doctest::Approx(0.05).epsilon(0.02));
    CHECK(std::abs(mean) < 0.01);
  }
}

TEST_CASE("upper envelope") {
  const EchoTrace t = make_trace([](double tau) { return std::exp(-tau / 20e-6) * (1.0 + std::cos(two_pi * 0.5e6 * tau)) / 2.0; });
  const EchoTrace e = upper_envelope(t);
  REQUIRE(e.size() > 20);
  for (std::size_t i = 1; i < e.size(); ++i) {
    CHECK(e.tau[i] > e.tau[i - 1]);
    CHECK(e.intensity[i] <= e.intensity[i - 1]);
  }
  CHECK(e.tau.back() == t.tau.back());
}

TEST_CASE("spectrum") {
  SUBCASE("1 MHz sinusoid") {
    const EchoTrace t = make_trace([](double tau) { return std::cos(two_pi * 1e6 * tau); });
    for (SpectrumMode m : {SpectrumMode::experimental, SpectrumMode::simulation}) {
      EchoTrace tt = t;
      if (m == SpectrumMode::simulation)
        for (std::size_t i = 0; i < tt.size(); ++i) tt.intensity[i] += 2.0 * std::exp(-2.0 * tt.tau[i] / 40e-6);
      const Spectrum s = spectrum(tt, m);
      REQUIRE(s.peaks.size() >= 1);
      const auto top = std::max_element(s.peaks.begin(), s.peaks.end(),
                                        [](const Peak& a, const Peak& b) { return a.amplitude < b.amplitude; });
      CHECK(std::abs(top->frequency - 1e6) <= s.bin_width);
    }
  }
  SUBCASE("grid and bookkeeping") {
    const EchoTrace t = make_trace([](double tau) { return std::cos(two_pi * 1e6 * tau); });
    const Spectrum s = spectrum(t, SpectrumMode::experimental);
    CHECK(s.padding_factor == 2);
    CHECK(s.smoothing_points == 5);
    CHECK(s.bin_width == doctest::Approx(1.0 / (2000 * 100e-9)));
    CHECK(s.frequency.back() == doctest::Approx(0.5 / 100e-9));
    EchoTrace d = t;
    for (std::size_t i = 0; i < d.size(); ++i) d.intensity[i] += 2.0 * std::exp(-2.0 * d.tau[i] / 40e-6);
    const Spectrum q = spectrum(d, SpectrumMode::simulation);
    CHECK(q.cutoff == doctest::Approx(5e6));  // 12 MHz clamps to Nyquist
    CHECK(q.bin_width == doctest::Approx(1.0 / (1000 * 100e-9)));
  }
  SUBCASE("constant input") {
    const Spectrum s = spectrum(make_trace([](double) { return 0.7; }), SpectrumMode::experimental,
                                SpectrumOptions{.padding_factor = 1, .smoothing_points = 1});
    for (std::size_t k = 1; k < s.amplitude.size(); ++k) CHECK(s.amplitude[k] < 1e-12 * s.amplitude[0]);
  }
  SUBCASE("non-uniform grid") {
    EchoTrace t = make_trace([](double) { return 1.0; });
    t.tau[500] += 3e-9;
    CHECK_THROWS(spectrum(t, SpectrumMode::experimental));
  }
  SUBCASE("transform is linear") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    std::vector<double> x(300), y(300), z(300);
    for (int i = 0; i < 300; ++i) x[i] = g(rng), y[i] = g(rng), z[i] = 2.5 * x[i] - 0.75 * y[i];
    const auto X = complex_transform(x, 600), Y = complex_transform(y, 600), Z = complex_transform(z, 600);
    REQUIRE(Z.size() == 301);
    for (std::size_t k = 0; k < Z.size(); ++k) CHECK(std::abs(Z[k] - (2.5 * X[k] - 0.75 * Y[k])) < 1e-11);
  }
}

TEST_CASE("find_peaks") {
  SUBCASE("two injected sinusoids") {
    const EchoTrace t = make_trace([](double tau) {
      return std::cos(two_pi * 1.0e6 * tau) + std::cos(two_pi * 2.2e6 * tau);
    });
    const Spectrum s = spectrum(t, SpectrumMode::experimental, SpectrumOptions{.smoothing_points = 1});
    const std::vector<Peak> p = find_peaks(s, 0.5);
    REQUIRE(p.size() == 2);
    CHECK(std::abs(p[0].frequency - 1.0e6) <= 0.5 * s.bin_width);
    CHECK(std::abs(p[1].frequency - 2.2e6) <= 0.5 * s.bin_width);
  }
  SUBCASE("flat spectrum") {
    CHECK(find_peaks(synthetic_spectrum(std::vector<double>(50, 1.0), 1e4), 0.1).empty());
  }
  SUBCASE("threshold") {
    std::vector<double> a(50, 0.0);
    a[10] = 1.0;
    a[30] = 0.05;
    const auto p = find_peaks(synthetic_spectrum(a, 1e4), 0.1);
    REQUIRE(p.size() == 1);
    CHECK(p[0].frequency == doctest::Approx(1e5));
    CHECK(find_peaks(synthetic_spectrum(a, 1e4), 0.01).size() == 2);
    CHECK_THROWS(find_peaks(synthetic_spectrum(a, 1e4), 0.0));
    CHECK_THROWS(find_peaks(synthetic_spectrum(a, 1e4), 1.0));
  }
  SUBCASE("parabolic refinement") {
    // samples of 1 - (k - 10.3)^2 / 4 around the top
    std::vector<double> a(20, 0.0);
    for (int k = 8; k <= 12; ++k) a[k] = 1.0 - (k - 10.3) * (k - 10.3) / 4.0;
    const auto p = find_peaks(synthetic_spectrum(a, 1.0), 0.1);
    REQUIRE(p.size() == 1);
    CHECK(p[0].frequency == doctest::Approx(10.3).epsilon(1e-12));
    CHECK(p[0].amplitude == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("prominence merges a rippled band") {
    std::vector<double> a(60, 0.0);
    for (int k = 15; k <= 25; ++k) a[k] = 1.0 - std::abs(k - 20) * 0.08;
    a[17] += 0.1;  // ripple maximum on the flank
    a[40] = 0.6;
    Spectrum s = synthetic_spectrum(a, 1.0);
    CHECK(find_peaks(s, 0.1).size() == 3);
    const auto p = find_peaks(s, 0.1, 0.1);
    REQUIRE(p.size() == 2);
    CHECK(p[0].frequency == doctest::Approx(20.0).epsilon(0.05));
    CHECK(p[1].frequency == doctest::Approx(40.0).epsilon(0.05));
  }
  SUBCASE("floor") {
    std::vector<double> a(60, 0.0);
    a[5] = 2.0;
    a[40] = 1.0;
    Spectrum s = synthetic_spectrum(a, 1.0);
    s.peak_floor = 10.0;
    const auto p = find_peaks(s, 0.5);
    REQUIRE(p.size() == 1);
    CHECK(p[0].frequency == doctest::Approx(40.0));
  }
}

TEST_CASE("effective hyperfine") {
  SUBCASE("asymmetric pair about nu_H") {
    const std::vector<Peak> p{peak(0.886, 1.0), peak(1.286, 0.8)};
    const HyperfineEstimate e = effective_hyperfine(p, 1.086e6, 1e4);
    CHECK(e.A_eff == doctest::Approx(0.4e6).epsilon(1e-12));
    CHECK(e.lower == doctest::Approx(0.886e6));
    CHECK(e.upper == doctest::Approx(1.286e6));
    CHECK(e.orientation == -1);
    CHECK_FALSE(e.merged);
  }
  SUBCASE("symmetric pair") {
    const double nu = 2.0e6, a = 0.3e6;
    const std::vector<Peak> p{{nu - a, 0.5, {}}, {nu + a, 0.7, {}}, {2 * nu, 0.2, {}}, {2 * a, 0.1, {}}};
    const HyperfineEstimate e = effective_hyperfine(p, nu, 1e4);
    CHECK(e.A_eff == doctest::Approx(2 * a).epsilon(1e-12));
    CHECK(e.orientation == 1);
  }
  SUBCASE("lines from the manifold frequencies") {
    // w^2 = (nu -+ A/2)^2 + (B/2)^2 for both manifolds
    const double nu = 0.8e6, A = 1.9e6, B = 0.6e6;
    const double wa = std::hypot(nu - A / 2, B / 2), wb = std::hypot(nu + A / 2, B / 2);
    const std::vector<Peak> p{{wa, 1.0, {}}, {wb, 0.9, {}}, {wa + wb, 0.3, {}}};
    CHECK(effective_hyperfine(p, nu, 1e4).A_eff == doctest::Approx(A).epsilon(1e-12));
  }
  SUBCASE("merged pair") {
    const HyperfineEstimate a = effective_hyperfine(std::vector<Peak>{peak(1.001, 1.0)}, 1.0e6, 1e4);
    CHECK(a.merged);
    CHECK(a.A_eff == 0.0);
    const HyperfineEstimate b = effective_hyperfine(std::vector<Peak>{peak(0.996, 1.0), peak(1.004, 0.9)}, 1.0e6, 1e4);
    CHECK(b.merged);
    CHECK(b.A_eff == 0.0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(effective_hyperfine(std::vector<Peak>{}, 1e6, 1e4), std::invalid_argument);
    CHECK_THROWS_AS(effective_hyperfine(std::vector<Peak>{peak(0.5, 1.0)}, 1e6, 1e4), std::invalid_argument);
  }
}

TEST_CASE("effective hyperfine of a single proton at +50 mT") {
  // the manifolds carry m_S-weighted couplings +-A <Sz>, so the lines split
  // by 2 A <Sz> with <Sz> = gamma_e dB / sqrt(E^2 + (gamma_e dB)^2)
  const ModelParams p = ModelParams{}.at_detuning(50e-3);
  SequenceConfig seq;
  seq.tau_step = 50e-9;
  const EchoTrace t = hahn_echo_trace(p, single_proton(1e6, 0.5e6), seq);
  const Spectrum s = spectrum(t, SpectrumMode::simulation);
  const HyperfineEstimate e = effective_hyperfine(s.peaks, p.nu_H(), s.bin_width);
  const double sz = p.gamma_e * 50e-3 / std::hypot(p.E, p.gamma_e * 50e-3);
  CHECK(e.A_eff == doctest::Approx(2.0 * 1e6 * sz).epsilon(0.02));
}

TEST_CASE("modulation depth") {
  const DecayFit flat = fit_decay(make_trace([](double) { return 1.0; }));
  SUBCASE("zero residual") {
    CHECK(modulation_depth(make_trace([](double) { return 0.0; }), flat, 0.0, 20e-6) == 0.0);
  }
  SUBCASE("peak to peak over the background") {
    const EchoTrace r = make_trace([](double tau) { return 0.1 * std::sin(two_pi * 0.25e6 * 2.0 * tau); });
    CHECK(modulation_depth(r, flat, 0.0, 20e-6) == doctest::Approx(0.2).epsilon(1e-9));
  }
  SUBCASE("empty window") {
    const EchoTrace r = make_trace([](double) { return 0.0; });
    CHECK_THROWS(modulation_depth(r, flat, 30e-6, 20e-6));
    CHECK_THROWS(modulation_depth(r, flat, 500e-6, 600e-6));
  }
}

TEST_CASE("peak map") {
  const double gH = 42.577e6;
  const auto build = [&](double B0, std::vector<Peak> peaks) {
    Spectrum s;
    s.bin_width = 1e4;
    s.peaks = std::move(peaks);
    return std::make_pair(B0, s);
  };
  std::vector<double> B;
  std::vector<Spectrum> S;
  // pair split linear in B0 about 23.5 mT, merged at the centre
  for (int k = -4; k <= 4; ++k) {
    const double b = 23.5e-3 + 0.5e-3 * k;
    const double nu = gH * b, a = 0.1e6 * k;
    std::vector<Peak> pk;
    if (k == 0)
      pk = {{nu, 1.0, {}}, {2 * nu, 0.3, {}}};
    else
      pk = {{nu - std::abs(a) / 2, 1.0, {}}, {nu + std::abs(a) / 2, 0.9, {}}, {2 * nu, 0.3, {}}};
    auto [bb, s] = build(b, pk);
    B.push_back(bb);
    S.push_back(s);
  }
  const PeakMap m = peak_map(S, B, gH);
  REQUIRE(m.fields.size() == 9);
  for (int k = -4; k <= 4; ++k) CHECK(m.fields[k + 4].A_eff == doctest::Approx(0.1e6 * k).epsilon(1e-9).scale(1.0));
  CHECK(m.fields[4].merged);
  int two = 0, merged = 0, lower = 0, upper = 0;
  for (const PeakMapEntry& e : m.entries) {
    two += e.label == "2nu_H";
    merged += e.label == "nu_H";
    lower += e.label == "nu_H-A_eff/2";
    upper += e.label == "nu_H+A_eff/2";
  }
  CHECK(two == 9);
  CHECK(merged == 1);
  CHECK(lower == 8);
  CHECK(upper == 8);
}
