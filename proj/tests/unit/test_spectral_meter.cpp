#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "satmetro/diagnostics.hpp"
#include "satmetro/run_config.hpp"
#include "satmetro/spectral_meter.hpp"

using namespace satmetro;

namespace {

constexpr double kPi = std::numbers::pi;
const PhysicalConfig kPhys;
const double kP0 = 2 * kPi / 796.0;
const double kDp = 2 * kPi / (796.0 * 796.0) * 12.0 / (2 * std::sqrt(2 * std::log(2.0)));

/// Closed-form moments of sin²(a·p + b) under N(p0, Δp²), with the
/// extinction-ratio floor mixed in: returns {E[D], E[(p-p0)·D]}.
std::pair<double, double> gaussian_moments(double a, double b, double er) {
  const double damp = std::exp(-2 * a * a * kDp * kDp);
  const double phase = 2 * a * kP0 + 2 * b;
  const double mass = 0.5 * (1 - std::cos(phase) * damp);
  const double first = a * kDp * kDp * std::sin(phase) * damp;
  if (std::isinf(er))
    return {mass, first};
  return {(1 - 1 / er) * mass + 0.5 / er, (1 - 1 / er) * first};
}

/// Phase coefficients (a, b) with density sin²(a·p + b) for each scheme.
std::pair<double, double> phase_of(const SchemeConfig &s, double k) {
  switch (s.scheme) {
  case Scheme::CM:
    return {k, kPi / 4};
  case Scheme::SWM:
    return {k, s.epsilon};
  case Scheme::BWM: {
    const double beta = (s.bias_order * kPi - s.epsilon) / kP0;
    return {beta + k, -kP0 * beta};
  }
  }
  return {0, 0};
}

double exact_shift(const SchemeConfig &s, double k) {
  auto [a, b] = phase_of(s, k);
  auto [m1, f1] = gaussian_moments(a, b, s.scheme == Scheme::CM ? INFINITY : s.extinction_ratio);
  auto [a0, b0] = phase_of(s, 0.0);
  auto [m0, f0] = gaussian_moments(a0, b0, s.scheme == Scheme::CM ? INFINITY : s.extinction_ratio);
  return f1 / m1 - f0 / m0;
}

Spectrum fine_spectrum() { return Spectrum::gaussian(kP0, kDp, kDp / 400); }

const SchemeConfig kCM{Scheme::CM};
const SchemeConfig kSWM{Scheme::SWM, 0.2, 0};
const SchemeConfig kBWM5{Scheme::BWM, 0.2, 5, 90000};
const SchemeConfig kBWM0{Scheme::BWM, 0.2, 0};

double sum(const std::vector<double> &v) {
  double s = 0;
  for (double x : v)
    s += x;
  return s;
}

} // namespace

TEST_SUITE("spectral_meter") {

TEST_CASE("coupling strength is V*B*l/p0 in nm") {
  CHECK(coupling_strength(0.0, kPhys).k_nm == 0.0);
  const double oracle = 70.35 * 0.028 * 0.01 * 796.0 / (2 * kPi);
  CHECK(coupling_strength(0.028, kPhys).k_nm == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(oracle == doctest::Approx(2.4958).epsilon(2e-4));
  const double weak = 70.35 * 1.43e-7 * 0.01 * 796.0 / (2 * kPi);
  CHECK(coupling_strength(1.43e-7, kPhys).k_nm == doctest::Approx(weak).epsilon(1e-12));
  CHECK(weak == doctest::Approx(1.2747e-5).epsilon(2e-4));
  CHECK(coupling_strength(-0.028, kPhys).k_nm == doctest::Approx(-oracle));
}

TEST_CASE("strong coupling warns but is accepted") {
  std::vector<std::string> seen;
  auto previous = set_warning_handler([&](std::string_view m) { seen.emplace_back(m); });
  const double b_strong = 0.2 / (70.35 * 0.01);  // |k|p0 = 0.2
  const auto k = coupling_strength(b_strong, kPhys);
  set_warning_handler(previous);
  CHECK(k.k_nm * kP0 == doctest::Approx(0.2));
  REQUIRE(seen.size() == 1);
  CHECK(seen[0].find("0.1") != std::string::npos);
}

TEST_CASE("bias phase solves p0*beta + eps = m*pi") {
  CHECK(bias_phase(kPi, 1, kP0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(bias_phase(0.2, 5, kP0) == doctest::Approx((5 * kPi - 0.2) * 796 / (2 * kPi)));
  CHECK(bias_phase(0.2, 5, kP0) == doctest::Approx(1964.6).epsilon(1e-4));
  CHECK(bias_phase(0.2, 0, kP0) == doctest::Approx(-0.2 * 796 / (2 * kPi)));
  CHECK(bias_phase(0.2, 0, kP0) == doctest::Approx(-25.338).epsilon(1e-4));
  CHECK_THROWS_AS(bias_phase(0.2, -1, kP0), std::invalid_argument);
  CHECK_THROWS_AS(bias_phase(0.0, 0, kP0), std::invalid_argument);
}

TEST_CASE("config validation") {
  PhysicalConfig bad = kPhys;
  bad.fwhm_nm = 900;
  CHECK_THROWS(bad.validate());
  bad = kPhys;
  bad.verdet_rad_per_tesla_m = 0;
  CHECK_THROWS(bad.validate());
  CHECK_THROWS((SchemeConfig{Scheme::SWM, 0.9, 0}.validate()));
  CHECK_THROWS((SchemeConfig{Scheme::SWM, 0.2, 0, 1.0}.validate()));
  CHECK_THROWS((SchemeConfig{Scheme::BWM, 0.2, -2}.validate()));
  CHECK_NOTHROW((SchemeConfig{Scheme::CM, 0.0, 0}.validate()));
  CHECK(scheme_from_string("BWM") == Scheme::BWM);
  CHECK_THROWS(scheme_from_string("XYZ"));
  CHECK(kPhys.delta_p() == doctest::Approx(kDp).epsilon(1e-12));
}

TEST_CASE("spectrum grid invariants") {
  const Spectrum s = Spectrum::gaussian(kP0, kDp, kDp / 50);
  double total = 0;
  for (double w : s.weights()) {
    CHECK(w >= 0);
    total += w;
  }
  CHECK(std::abs(total - 1) < 1e-12);
  auto p = s.momenta();
  for (std::size_t i = 1; i < p.size(); ++i)
    CHECK(p[i] > p[i - 1]);
  CHECK(std::find(p.begin(), p.end(), kP0) != p.end());
  CHECK(p.front() <= kP0 - 6 * kDp + 1e-15);
  CHECK(p.back() >= kP0 + 6 * kDp - 1e-15);
  CHECK(s.cell_edges().size() == s.size() + 1);
  CHECK_THROWS(Spectrum(kP0, kP0 / 5, {1, 2}, {1, 1}));
  CHECK_THROWS(Spectrum(kP0, kDp, {2, 1}, {1, 1}));
  CHECK_THROWS(Spectrum(kP0, kDp, {1, 2}, {1, -1}));
}

TEST_CASE("densities per scheme") {
  const Spectrum s = Spectrum::gaussian(kP0, kDp, kDp / 50);
  auto w = s.weights();
  SUBCASE("CM at k = 0 is w/2") {
    const auto d = unnormalized_distribution(kCM, {0.0}, s);
    for (std::size_t i = 0; i < d.size(); ++i)
      CHECK(d[i] == doctest::Approx(w[i] / 2).epsilon(1e-14));
  }
  SUBCASE("bounds 0 <= D <= w") {
    for (const auto &sc : {kCM, kSWM, kBWM5, kBWM0, SchemeConfig{Scheme::SWM, 0.1, 0, 50}})
      for (double k : {-3.0, 0.0, 0.5, 2.4958, 40.0}) {
        const auto d = unnormalized_distribution(sc, {k}, s);
        for (std::size_t i = 0; i < d.size(); ++i) {
          CHECK(d[i] >= 0);
          CHECK(d[i] <= w[i] * (1 + 1e-15));
        }
      }
  }
  SUBCASE("CM mirror symmetry") {
    for (double k : {0.3, 2.4958, 17.0}) {
      const auto plus = unnormalized_distribution(kCM, {k}, s);
      const auto minus = unnormalized_distribution(kCM, {-k}, s);
      for (std::size_t i = 0; i < w.size(); ++i)
        CHECK(std::abs(plus[i] + minus[i] - w[i]) < 1e-12);
    }
  }
  SUBCASE("BWM extinction point") {
    const SchemeConfig ideal{Scheme::BWM, 0.2, 5};
    const auto d = unnormalized_distribution(ideal, {0.0}, s);
    auto p = s.momenta();
    const auto at = std::find(p.begin(), p.end(), kP0) - p.begin();
    CHECK(d[static_cast<std::size_t>(at)] == 0.0);
    std::size_t argmin = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d[i] / w[i] < d[argmin] / w[argmin])
        argmin = i;
    CHECK(std::abs(p[argmin] - kP0) <= (p[1] - p[0]));
  }
  SUBCASE("extinction point moves to (m*pi - eps)/(beta + k)") {
    const SchemeConfig ideal{Scheme::BWM, 0.2, 5};
    const double beta = (5 * kPi - 0.2) / kP0;
    auto p = s.momenta();
    for (double k : {0.01, 0.05, -0.03}) {
      const auto d = unnormalized_distribution(ideal, {k}, s);
      std::size_t argmin = 0;
      for (std::size_t i = 0; i < d.size(); ++i)
        if (d[i] / w[i] < d[argmin] / w[argmin])
          argmin = i;
      const double zero = (5 * kPi - 0.2) / (beta + k);
      CHECK(std::abs(p[argmin] - zero) <= (p[1] - p[0]));
    }
  }
}

TEST_CASE("post-selected fractions") {
  const Spectrum s = fine_spectrum();
  SUBCASE("SWM fraction at k(0.028 T) matches the Gaussian closed form") {
    const double k = 2.4958;
    const double frac = sum(unnormalized_distribution(kSWM, {k}, s));
    CHECK(frac == doctest::Approx(gaussian_moments(k, 0.2, INFINITY).first).epsilon(1e-9));
    CHECK(frac == doctest::Approx(0.0475).epsilon(0.01));
  }
  SUBCASE("SWM fraction tends to sin^2 eps") {
    const double frac = sum(unnormalized_distribution(kSWM, {1e-6}, s));
    CHECK(std::abs(frac - std::sin(0.2) * std::sin(0.2)) < 1e-6);
  }
  SUBCASE("BWM (m = 0) fraction is O((dp*eps/p0)^2), far below SWM") {
    const double k = 1e-4 / kP0;
    const double bwm = sum(unnormalized_distribution(kBWM0, {k}, s));
    const double swm = sum(unnormalized_distribution(kSWM, {k}, s));
    CHECK(bwm < swm / 1e3);
    const double scale = std::pow(kDp * 0.2 / kP0, 2);
    CHECK(bwm > 0.1 * scale);
    CHECK(bwm < 10 * scale);
  }
}

TEST_CASE("numeric mean shift against the exact Gaussian oracle") {
  const Spectrum s = fine_spectrum();
  for (const auto &sc : {kCM, kSWM, kBWM5, kBWM0, SchemeConfig{Scheme::SWM, 0.05, 0, 90000}})
    for (double kp0 : {1e-6, 1e-4, 1e-2, 0.3}) {
      CAPTURE(scheme_label(sc));
      CAPTURE(kp0);
      const double k = kp0 / kP0;
      CHECK(mean_shift_numeric(sc, {k}, s) == doctest::Approx(exact_shift(sc, k)).epsilon(1e-6));
    }
  CHECK(mean_shift_numeric(kSWM, {0.0}, s) == 0.0);
}

TEST_CASE("analytic shifts") {
  const Spectrum s = fine_spectrum();
  for (const auto &sc : {kCM, kSWM, kBWM5, kBWM0})
    CHECK(mean_shift_analytic(sc, {0.0}, s) == 0.0);
  const double k = 1e-4 / kP0;
  CHECK(mean_shift_analytic(kCM, {k}, s) == doctest::Approx(2 * k * kDp * kDp));
  CHECK(mean_shift_analytic(kSWM, {k}, s) / mean_shift_analytic(kCM, {k}, s) ==
        doctest::Approx(1 / std::tan(0.2)));
  CHECK(1 / std::tan(0.2) == doctest::Approx(4.933).epsilon(1e-4));
  CHECK(mean_shift_analytic(kBWM0, {k}, s) == doctest::Approx(-2 * k * kP0 * kP0 / 0.2));
  CHECK(mean_shift_analytic(kBWM5, {k}, s) ==
        doctest::Approx(2 * k * kP0 * kP0 / (5 * kPi - 0.2)));
  const double ratio = mean_shift_analytic(kBWM0, {k}, s) / mean_shift_analytic(kSWM, {k}, s);
  CHECK(-ratio == doctest::Approx(std::pow(kP0 / kDp, 2) * std::tan(0.2) / 0.2));
  CHECK(-ratio > 100);
}

TEST_CASE("analytic and numeric shifts agree in the weak regime") {
  const Spectrum s = fine_spectrum();
  SUBCASE("SWM small k within 0.1%") {
    for (double kp0 : {1e-6, 1e-5, 1e-4}) {
      const double k = kp0 / kP0;
      const double num = mean_shift_numeric(kSWM, {k}, s);
      CHECK(num == doctest::Approx(mean_shift_analytic(kSWM, {k}, s)).epsilon(1e-3));
    }
  }
  SUBCASE("agreement within 1% for kp0 < 1e-3 (SWM) and in the BWM validity band") {
    for (double eps : {0.05, 0.1, 0.2}) {
      const SchemeConfig swm{Scheme::SWM, eps, 0};
      const double k = 0.004 * eps / kP0;
      CHECK(mean_shift_numeric(swm, {k}, s) ==
            doctest::Approx(mean_shift_analytic(swm, {k}, s)).epsilon(1e-2));
      const SchemeConfig bwm{Scheme::BWM, eps, 0};
      const double kb = 0.05 * eps * kDp / kP0 / kP0;
      CHECK(mean_shift_numeric(bwm, {kb}, s) ==
            doctest::Approx(mean_shift_analytic(bwm, {kb}, s)).epsilon(1e-2));
    }
    const double k = 1e-4 / kP0;
    CHECK(mean_shift_numeric(kCM, {k}, s) ==
          doctest::Approx(mean_shift_analytic(kCM, {k}, s)).epsilon(1e-2));
  }
  SUBCASE("CM at kp0 = 0.3 leaves the linear form but follows the full expression") {
    const double k = 0.3 / kP0;
    const double num = mean_shift_numeric(kCM, {k}, s);
    const double full = 2 * k * kDp * kDp * std::cos(2 * k * kP0) /
                        (std::sin(2 * k * kP0) + std::exp(2 * k * k * kDp * kDp));
    CHECK(num == doctest::Approx(full).epsilon(1e-3));
    CHECK(std::abs(num / mean_shift_analytic(kCM, {k}, s) - 1) > 0.1);
  }
}

TEST_CASE("extinguished distribution is a domain error") {
  std::vector<double> p{kP0 - kDp, kP0, kP0 + kDp};
  std::vector<double> w{0.0, 1.0, 0.0};
  const Spectrum point(kP0, kDp, p, w);
  CHECK_THROWS_AS(mean_shift_numeric(SchemeConfig{Scheme::BWM, 0.2, 5}, {0.0}, point),
                  std::domain_error);
}

TEST_CASE("expected pixel counts") {
  const DetectorModel det;
  const SpectralMeter meter(kPhys, det);
  CHECK(meter.pixel_count() == 1920);

  const auto zero = meter.pixel_counts(0.0, 0.028, kBWM5);
  CHECK(std::all_of(zero.begin(), zero.end(), [](double x) { return x == 0.0; }));

  SUBCASE("CM at k = 0 passes half the photons, minus what misses the pixels") {
    const auto counts = meter.pixel_counts(1e6, 0.0, kCM);
    const double missed = meter.uncovered_fraction(kCM, {0.0});
    CHECK(sum(counts) == doctest::Approx(5e5 * (1 - missed)).epsilon(1e-9));
    CHECK(missed > 0.1);
    CHECK(missed < 0.25);
  }

  SUBCASE("totals equal n times the covered post-selected weight") {
    const Spectrum &s = meter.spectrum();
    for (const auto &sc : {kCM, kSWM, kBWM5}) {
      const double k = coupling_strength(0.028, kPhys).k_nm;
      const double frac = sum(unnormalized_distribution(sc, {k}, s));
      const double missed = meter.uncovered_fraction(sc, {k});
      CHECK(sum(meter.pixel_counts(1e8, 0.028, sc)) ==
            doctest::Approx(1e8 * frac * (1 - missed)).epsilon(1e-9));
    }
  }

  SUBCASE("BWM extinction pixel is dark relative to the profile peak") {
    const auto counts = meter.pixel_counts(1e10, 0.028, kBWM5);
    const double peak = *std::max_element(counts.begin(), counts.end());
    // Pixel whose wavelength interval holds the extinction point.
    const double k = coupling_strength(0.028, kPhys).k_nm;
    const double beta = (5 * kPi - 0.2) / kP0;
    const double lambda_ext = 2 * kPi * (beta + k) / (5 * kPi - 0.2);
    const int j = static_cast<int>(std::lround((lambda_ext - 789.5) / 0.007331));
    const double dark = counts[static_cast<std::size_t>(j - 1)];
    CHECK(peak / dark > 100);

    // Independent quadrature of n * ∫ D over that pixel's wavelength interval.
    const double lo = 2 * kPi / (0.007331 * (j + 0.5) + 789.5);
    const double hi = 2 * kPi / (0.007331 * (j - 0.5) + 789.5);
    const int steps = 20000;
    double integral = 0;
    for (int i = 0; i < steps; ++i) {
      const double p = lo + (hi - lo) * (i + 0.5) / steps;
      const double z = (p - kP0) / kDp;
      const double g = std::exp(-0.5 * z * z) / (std::sqrt(2 * kPi) * kDp);
      const double sn = std::sin((p - kP0) * beta + p * k);
      integral += ((1 - 1 / 9e4) * sn * sn + 0.5 / 9e4) * g * (hi - lo) / steps;
    }
    CHECK(dark == doctest::Approx(1e10 * integral).epsilon(0.02));
  }

  SUBCASE("free function warns about uncovered weight") {
    int warnings = 0;
    auto previous = set_warning_handler([&](std::string_view) { ++warnings; });
    const auto counts = expected_pixel_counts(1e6, 0.028, kCM, kPhys, det);
    set_warning_handler(previous);
    CHECK(warnings == 1);
    CHECK(counts == meter.pixel_counts(1e6, 0.028, kCM));
  }
}

} // TEST_SUITE
