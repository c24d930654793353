#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "satmetro/detector_model.hpp"
#include "satmetro/hashing.hpp"

using namespace satmetro;

namespace {

double phi_upper(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

/// Mass of N(mean, sd) on [a, b], computed from whichever tail is smaller.
double mass(double mean, double sd, double a, double b) {
  const double za = (a - mean) / sd, zb = (b - mean) / sd;
  if (za >= 0)
    return phi_upper(za) - phi_upper(zb);
  if (zb <= 0)
    return phi_upper(-zb) - phi_upper(-za);
  return 1 - phi_upper(-za) - phi_upper(zb);
}

/// Reference marginal: exact CDF-difference photon law on mean ± 6σ with
/// lumped tails (and the N < 0 part dropped), times R_s(k|N).
std::vector<double> reference_outcome(const ResponseModel &r, double mean) {
  const auto &det = r.detector();
  std::vector<double> out(static_cast<std::size_t>(det.saturation_threshold) + 1, 0.0);
  const double sd = det.photon_number_sigma_factor * std::sqrt(mean);
  const long lo = std::max(0L, static_cast<long>(std::floor(mean - 6 * sd)));
  const long hi = static_cast<long>(std::ceil(mean + 6 * sd));
  const double norm = lo == 0 ? mass(mean, sd, -0.5, INFINITY) : 1.0;
  for (long n = lo; n <= hi; ++n) {
    const double a = n == lo ? (lo == 0 ? -0.5 : -INFINITY) : n - 0.5;
    const double b = n == hi ? INFINITY : n + 0.5;
    const double w = mass(mean, sd, a, b) / norm;
    const auto row = r.saturated_response(n);
    for (std::size_t k = 0; k < out.size(); ++k)
      out[k] += w * row.probs[k];
  }
  return out;
}

double pmf_mean(const OutcomePMF &p) {
  double m = 0;
  for (std::size_t k = 0; k < p.size(); ++k)
    m += static_cast<double>(k) * p.probs[k];
  return m;
}

const DetectorModel kDet;

const ResponseModel &shared_response() {
  static const ResponseModel r(kDet);
  return r;
}

} // namespace

TEST_SUITE("detector_model") {

TEST_CASE("parameter validation") {
  CHECK_NOTHROW(kDet.validate());
  DetectorModel d = kDet;
  d.quantum_efficiency = 1.2;
  CHECK_THROWS(d.validate());
  d = kDet;
  d.saturation_threshold = 120;
  CHECK_THROWS(d.validate());
  d = kDet;
  d.pixel_count = 0;
  CHECK_THROWS(d.validate());
  d = kDet;
  d.dark_support = {-1, 140};
  CHECK_THROWS(d.validate());
  d = kDet;
  d.dark_mean += 1e-9;
  CHECK(d.hash() != kDet.hash());
  CHECK(DetectorModel{}.hash() == kDet.hash());
}

TEST_CASE("dispersion and pixel bounds") {
  CHECK(kDet.dispersion.wavelength(1) == doctest::Approx(789.507331));
  auto [lo, hi] = kDet.pixel_wavelength_bounds(0);
  CHECK(hi - lo == doctest::Approx(0.007331));
  CHECK(0.5 * (lo + hi) == doctest::Approx(789.507331));
}

TEST_CASE("dark noise") {
  const auto dark = dark_noise_pmf(kDet);
  CHECK(dark.total() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(dark.mode() == 94);
  for (std::size_t k = 0; k < dark.size(); ++k)
    if (k < 58 || k > 140)
      CHECK(dark[k] == 0.0);
  const double support = mass(94.16, 2.03, 57.5, 140.5);
  for (int k : {80, 94, 104, 110})
    CHECK(dark[k] == doctest::Approx(mass(94.16, 2.03, k - 0.5, k + 0.5) / support).epsilon(1e-9));
  const double oracle = mass(94.16, 2.03, 93.5, 94.5) / mass(94.16, 2.03, 103.5, 104.5);
  CHECK(dark[94] / dark[104] == doctest::Approx(oracle).epsilon(1e-9));
  // The point-density ratio is the same order of magnitude.
  const double density = std::exp((9.84 * 9.84 - 0.16 * 0.16) / (2 * 2.03 * 2.03));
  CHECK(std::abs(std::log(dark[94] / dark[104]) - std::log(density)) < 0.5);
}

TEST_CASE("photoelectrons") {
  const auto zero = photoelectron_pmf(0, kDet);
  CHECK(zero.size() == 1);
  CHECK(zero[0] == 1.0);
  const auto p = photoelectron_pmf(1000, kDet);
  CHECK(p.total() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pmf_mean(p) == doctest::Approx(313.0).epsilon(1e-9));
  const double sigma = std::exp(0.5908 * std::log(1000.0) - 1.9986);
  CHECK(sigma == doctest::Approx(8.0245).epsilon(1e-4));
  CHECK(kDet.gain_sigma_law.sigma(1000) == doctest::Approx(sigma));
  double var = 0;
  for (std::size_t k = 0; k < p.size(); ++k)
    var += (k - 313.0) * (k - 313.0) * p.probs[k];
  // Unit binning adds 1/12 to the variance.
  CHECK(var == doctest::Approx(sigma * sigma + 1.0 / 12).epsilon(1e-3));
}

TEST_CASE("response is the dark/photoelectron convolution") {
  const auto dark = dark_noise_pmf(kDet);
  const auto r0 = response_pmf(0, kDet);
  CHECK(r0.probs == dark.probs);
  for (double n : {0.0, 10.0, 1000.0})
    CHECK(response_pmf(n, kDet).total() == doctest::Approx(1.0).epsilon(1e-9));

  const auto pe = photoelectron_pmf(1000, kDet);
  const auto r = response_pmf(1000, kDet);
  std::vector<double> oracle(pe.size() + dark.size(), 0.0);
  for (std::size_t i = 0; i < pe.size(); ++i)
    for (std::size_t j = 0; j < dark.size(); ++j)
      oracle[i + j] += pe.probs[i] * dark.probs[j];
  for (std::size_t k = 0; k < r.size(); ++k)
    CHECK(r.probs[k] == doctest::Approx(oracle[k]).epsilon(1e-12));
  CHECK(std::abs(r.mode() - 407) <= 1);
}

TEST_CASE("saturation clipping") {
  const auto small = response_pmf(100, kDet);
  const auto clipped = saturated_response_pmf(100, kDet);
  CHECK(clipped.size() == 1201);
  for (std::size_t k = 0; k < small.size(); ++k)
    CHECK(clipped[k] == small[k]);

  const auto big = saturated_response_pmf(1e4, kDet);
  CHECK(big.size() == 1201);
  CHECK(big[1200] > 1 - 1e-12);
  CHECK(big.total() == doctest::Approx(1.0).epsilon(1e-12));

  // Clipping keeps the mass beyond the threshold, summed directly.
  const auto raw = response_pmf(3600, kDet);
  double beyond = 0;
  for (std::size_t k = 1200; k < raw.size(); ++k)
    beyond += raw.probs[k];
  CHECK(saturated_response_pmf(3600, kDet)[1200] == doctest::Approx(beyond).epsilon(1e-12));
}

TEST_CASE("response table") {
  const auto &r = shared_response();
  CHECK(r.table_cap() > 3000);
  CHECK(r.saturated_response(r.table_cap() + 5)[1200] == 1.0);
  for (long n : {0L, 7L, 1000L, 3500L, r.table_cap()}) {
    const auto expect = saturated_response_pmf(static_cast<double>(n), kDet);
    const auto got = r.saturated_response(n);
    for (std::size_t k = 0; k < got.size(); ++k)
      CHECK(got[k] == doctest::Approx(expect[k]).epsilon(1e-12));
  }
  CHECK_THROWS(r.saturated_response(-1));
}

TEST_CASE("pixel outcome law") {
  const auto &r = shared_response();
  const auto dark = dark_noise_pmf(kDet);
  const auto zero = r.pixel_outcome(0.0);
  for (std::size_t k = 0; k < zero.size(); ++k)
    CHECK(zero[k] == doctest::Approx(dark[k]).epsilon(1e-15));

  for (double n : {1.0, 1e3, 1e7})
    CHECK(std::abs(r.pixel_outcome(n).total() - 1) < 1e-6);
  CHECK(r.pixel_outcome(1e7)[1200] > 0.999);
  CHECK(pixel_outcome_pmf(1e7, kDet)[1200] > 0.999);

  SUBCASE("matches the exact photon-law marginal") {
    for (double n : {0.3, 5.0, 16.0, 300.0, 2999.5, 3700.0, 4300.0}) {
      CAPTURE(n);
      const auto got = r.pixel_outcome(n);
      const auto ref = reference_outcome(r, n);
      for (std::size_t k = 0; k < ref.size(); ++k)
        if (ref[k] > 1e-12)
          CHECK(got[k] == doctest::Approx(ref[k]).epsilon(1e-7));
    }
  }

  SUBCASE("selected outcomes agree with the full law") {
    for (double n : {0.0, 2.0, 250.0, 3300.0, 1e4}) {
      const auto full = r.pixel_outcome(n);
      std::vector<int> ks{0, 60, 94, 100, 400, 1100, 1199, 1200};
      std::vector<double> out(ks.size());
      r.outcome_probabilities(n, ks, out);
      for (std::size_t i = 0; i < ks.size(); ++i)
        CHECK(out[i] == doctest::Approx(full[static_cast<std::size_t>(ks[i])]).epsilon(1e-12));
    }
  }

  SUBCASE("saturated mass is non-decreasing in the mean") {
    double prev = -1;
    for (double n = 1; n < 1e5; n *= 1.1) {
      const double s = r.pixel_outcome(n)[1200];
      CHECK(s >= prev - 1e-15);
      prev = s;
    }
  }

  SUBCASE("continuity in the mean") {
    for (double n = 1; n <= 1e6; n *= 3.7) {
      const double tv = total_variation(r.pixel_outcome(n), r.pixel_outcome(1.001 * n));
      CAPTURE(n);
      CHECK(tv < 0.05);
    }
  }
}

TEST_CASE("total variation") {
  OutcomePMF a{{0.5, 0.5}}, b{{0.5, 0.25, 0.25}};
  CHECK(total_variation(a, b) == doctest::Approx(0.25));
  CHECK(total_variation(a, a) == 0.0);
}

TEST_CASE("frame sampling") {
  const auto &r = shared_response();
  std::vector<double> zeros(1920, 0.0);
  const Frame f = r.sample_frame(zeros, 42);
  REQUIRE(f.electrons.size() == 1920);
  const double mean =
      std::accumulate(f.electrons.begin(), f.electrons.end(), 0.0) / f.electrons.size();
  CHECK(std::abs(mean - 94.16) < 0.5);
  for (int e : f.electrons) {
    CHECK(e >= 58);
    CHECK(e <= 140);
  }
  CHECK(r.sample_frame(zeros, 42).electrons == f.electrons);
  CHECK(r.sample_frame(zeros, 43).electrons != f.electrons);
  CHECK(sample_frame(zeros, kDet, 42).electrons == f.electrons);

  std::vector<double> one_hot(1920, 0.0);
  one_hot[700] = 1e7;
  CHECK(r.sample_frame(one_hot, 9).electrons[700] == 1200);

  std::vector<double> wrong(10, 0.0);
  CHECK_THROWS(r.sample_frame(wrong, 1));

  std::vector<double> ramp(1920);
  for (std::size_t i = 0; i < ramp.size(); ++i)
    ramp[i] = static_cast<double>(i) * 3.0;
  for (int e : r.sample_frame(ramp, 5).electrons) {
    CHECK(e >= 0);
    CHECK(e <= 1200);
  }
}

TEST_CASE("pixel streams are independent of neighbours") {
  const auto &r = shared_response();
  std::vector<double> a(1920, 500.0), b(1920, 500.0);
  b[3] = 2000.0;
  const auto fa = r.sample_frame(a, 77), fb = r.sample_frame(b, 77);
  for (std::size_t i = 0; i < 1920; ++i)
    if (i != 3)
      CHECK(fa.electrons[i] == fb.electrons[i]);
}

TEST_CASE("empirical histograms match the outcome law") {
  const auto &r = shared_response();
  for (double n : {0.0, 10.0, 100.0, 1e7}) {
    std::vector<double> hist(1201, 0.0);
    const int samples = 100000;
    std::mt19937_64 rng(derive_seed(2024, static_cast<std::uint64_t>(n)));
    for (int i = 0; i < samples; ++i)
      hist[static_cast<std::size_t>(r.sample_outcome(n, rng))] += 1.0 / samples;
    CAPTURE(n);
    CHECK(total_variation(OutcomePMF{hist}, r.pixel_outcome(n)) < 0.02);
  }
}

} // TEST_SUITE
