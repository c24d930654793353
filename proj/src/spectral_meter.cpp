#include "satmetro/spectral_meter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "satmetro/diagnostics.hpp"

namespace satmetro {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Gaussian FWHM / σ.
const double kFwhmPerSigma = 2.0 * std::sqrt(2.0 * std::numbers::ln2);

double leak(double s, double extinction_ratio) {
  if (!std::isfinite(extinction_ratio))
    return s;
  const double inv = 1.0 / extinction_ratio;
  return (1.0 - inv) * s + 0.5 * inv;
}

} // namespace

void PhysicalConfig::validate() const {
  if (!(central_wavelength_nm > 0) || !(fwhm_nm > 0) || !(verdet_rad_per_tesla_m > 0) ||
      !(crystal_length_m > 0))
    throw std::invalid_argument("physical: all constants must be strictly positive");
  if (!(fwhm_nm < central_wavelength_nm))
    throw std::invalid_argument("physical: fwhm must be smaller than the central wavelength");
}

double PhysicalConfig::p0() const { return kTwoPi / central_wavelength_nm; }

double PhysicalConfig::delta_p() const {
  return kTwoPi / (central_wavelength_nm * central_wavelength_nm) * (fwhm_nm / kFwhmPerSigma);
}

std::string_view to_string(Scheme s) {
  switch (s) {
  case Scheme::CM:
    return "CM";
  case Scheme::SWM:
    return "SWM";
  case Scheme::BWM:
    return "BWM";
  }
  return "?";
}

Scheme scheme_from_string(std::string_view name) {
  if (name == "CM")
    return Scheme::CM;
  if (name == "SWM")
    return Scheme::SWM;
  if (name == "BWM")
    return Scheme::BWM;
  throw std::invalid_argument("unknown scheme '" + std::string(name) + "' (expected CM, SWM or BWM)");
}

void SchemeConfig::validate() const {
  if (bias_order < 0)
    throw std::invalid_argument("scheme: bias order must be non-negative");
  if (!(extinction_ratio > 1))
    throw std::invalid_argument("scheme: extinction ratio must exceed 1");
  if (scheme != Scheme::CM && !(epsilon > 0 && epsilon < std::numbers::pi / 4))
    throw std::invalid_argument("scheme: post-selection angle must lie in (0, pi/4)");
}

Spectrum::Spectrum(double p0, double delta_p, std::vector<double> momenta,
                   std::vector<double> weights)
    : p0_(p0), delta_p_(delta_p), momenta_(std::move(momenta)), weights_(std::move(weights)) {
  if (!(p0 > 0) || !(delta_p > 0))
    throw std::invalid_argument("spectrum: p0 and delta_p must be positive");
  if (!(delta_p < p0 / 10))
    throw std::invalid_argument("spectrum: delta_p must be well below p0 (< p0/10)");
  if (momenta_.size() < 2 || momenta_.size() != weights_.size())
    throw std::invalid_argument("spectrum: need at least two samples and one weight per sample");
  for (std::size_t i = 1; i < momenta_.size(); ++i)
    if (!(momenta_[i] > momenta_[i - 1]))
      throw std::invalid_argument("spectrum: momentum grid must be strictly increasing");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0) || !std::isfinite(w))
      throw std::invalid_argument("spectrum: weights must be finite and non-negative");
    total += w;
  }
  if (!(total > 0))
    throw std::invalid_argument("spectrum: weights sum to zero");
  for (double &w : weights_)
    w /= total;

  edges_.resize(momenta_.size() + 1);
  for (std::size_t i = 1; i < momenta_.size(); ++i)
    edges_[i] = 0.5 * (momenta_[i - 1] + momenta_[i]);
  edges_.front() = momenta_.front() - (edges_[1] - momenta_.front());
  edges_.back() = momenta_.back() + (momenta_.back() - edges_[momenta_.size() - 1]);
}

Spectrum Spectrum::gaussian(double p0, double delta_p, double step, double half_width_sigmas) {
  if (!(step > 0))
    throw std::invalid_argument("spectrum: grid step must be positive");
  const auto half = static_cast<long>(std::ceil(half_width_sigmas * delta_p / step));
  std::vector<double> p(2 * half + 1), w(2 * half + 1);
  for (long i = -half; i <= half; ++i) {
    const double offset = static_cast<double>(i) * step;
    p[i + half] = p0 + offset;
    const double z = offset / delta_p;
    w[i + half] = std::exp(-0.5 * z * z);
  }
  return Spectrum(p0, delta_p, std::move(p), std::move(w));
}

CouplingStrength coupling_strength(double field_tesla, const PhysicalConfig &phys) {
  phys.validate();
  const double p0 = phys.p0();
  const double k = phys.verdet_rad_per_tesla_m * field_tesla * phys.crystal_length_m / p0;
  if (std::abs(k) * p0 > 0.1) {
    std::ostringstream msg;
    msg << "coupling |k|*p0 = " << std::abs(k) * p0 << " exceeds 0.1; weak-coupling forms are inaccurate";
    warn(msg.str());
  }
  return {k};
}

double bias_phase(double epsilon, int bias_order, double p0) {
  if (bias_order < 0)
    throw std::invalid_argument("bias_phase: bias order must be non-negative");
  if (bias_order == 0 && epsilon == 0.0)
    throw std::invalid_argument("bias_phase: m = 0 with epsilon = 0 extinguishes the whole spectrum");
  return (bias_order * std::numbers::pi - epsilon) / p0;
}

std::vector<double> unnormalized_distribution(const SchemeConfig &scheme, CouplingStrength k,
                                              const Spectrum &spectrum) {
  const auto p = spectrum.momenta();
  const auto w = spectrum.weights();
  std::vector<double> density(p.size());
  switch (scheme.scheme) {
  case Scheme::CM:
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double s = std::sin(std::numbers::pi / 4 + p[i] * k.k_nm);
      density[i] = s * s * w[i];
    }
    break;
  case Scheme::SWM:
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double s = std::sin(k.k_nm * p[i] + scheme.epsilon);
      density[i] = leak(s * s, scheme.extinction_ratio) * w[i];
    }
    break;
  case Scheme::BWM: {
    const double p0 = spectrum.p0();
    const double beta = bias_phase(scheme.epsilon, scheme.bias_order, p0);
    // p(β+k)+ε = (p−p0)β + pk + mπ since p0β + ε = mπ; sin² drops the mπ.
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double s = std::sin((p[i] - p0) * beta + p[i] * k.k_nm);
      density[i] = leak(s * s, scheme.extinction_ratio) * w[i];
    }
    break;
  }
  }
  return density;
}

double mean_shift_analytic(const SchemeConfig &scheme, CouplingStrength k,
                           const Spectrum &spectrum) {
  const double dp2 = spectrum.delta_p() * spectrum.delta_p();
  switch (scheme.scheme) {
  case Scheme::CM:
    return 2.0 * k.k_nm * dp2;
  case Scheme::SWM:
    return 2.0 * k.k_nm * dp2 / std::tan(scheme.epsilon);
  case Scheme::BWM: {
    const double p0 = spectrum.p0();
    return 2.0 * k.k_nm * p0 * p0 / (scheme.bias_order * std::numbers::pi - scheme.epsilon);
  }
  }
  return 0.0;
}

namespace {

double centered_mean(const std::vector<double> &density, const Spectrum &spectrum) {
  const auto p = spectrum.momenta();
  double mass = 0.0, first = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    mass += density[i];
    first += (p[i] - spectrum.p0()) * density[i];
  }
  if (!(mass > 1e-300))
    throw std::domain_error("mean_shift_numeric: post-selected distribution has no weight");
  return first / mass;
}

} // namespace

double mean_shift_numeric(const SchemeConfig &scheme, CouplingStrength k,
                          const Spectrum &spectrum) {
  const double shifted = centered_mean(unnormalized_distribution(scheme, k, spectrum), spectrum);
  const double reference =
      centered_mean(unnormalized_distribution(scheme, CouplingStrength{0.0}, spectrum), spectrum);
  return shifted - reference;
}

SpectralMeter::SpectralMeter(PhysicalConfig phys, const DetectorModel &det)
    : SpectralMeter(phys, det, [&] {
        phys.validate();
        det.validate();
        const double lambda0 = phys.central_wavelength_nm;
        const double pixel_width = kTwoPi * std::abs(det.dispersion.slope_nm) / (lambda0 * lambda0);
        return Spectrum::gaussian(phys.p0(), phys.delta_p(), pixel_width / 8.0);
      }()) {}

SpectralMeter::SpectralMeter(PhysicalConfig phys, const DetectorModel &det, Spectrum spectrum)
    : phys_(phys), spectrum_(std::move(spectrum)) {
  phys_.validate();
  det.validate();
  build_spans(det);
}

void SpectralMeter::build_spans(const DetectorModel &det) {
  const auto edges = spectrum_.cell_edges();
  const std::size_t cells = spectrum_.size();
  spans_.resize(static_cast<std::size_t>(det.pixel_count));
  for (int i = 0; i < det.pixel_count; ++i) {
    const auto [lam_lo, lam_hi] = det.pixel_wavelength_bounds(i);
    const double plo = std::max(kTwoPi / lam_hi, edges.front());
    const double phi = std::min(kTwoPi / lam_lo, edges.back());
    PixelSpan &span = spans_[static_cast<std::size_t>(i)];
    if (!(phi > plo))
      continue;
    const auto up = std::upper_bound(edges.begin(), edges.end(), plo);
    const auto down = std::lower_bound(edges.begin(), edges.end(), phi);
    span.first = static_cast<std::size_t>(std::max<std::ptrdiff_t>(up - edges.begin(), 1) - 1);
    span.last = std::min(static_cast<std::size_t>(down - edges.begin()), cells);
    if (span.last <= span.first)
      continue;
    auto share = [&](std::size_t c) {
      const double overlap = std::min(edges[c + 1], phi) - std::max(edges[c], plo);
      return std::clamp(overlap / (edges[c + 1] - edges[c]), 0.0, 1.0);
    };
    span.first_share = share(span.first);
    span.last_share = share(span.last - 1);
    span.empty = false;
  }
}

double SpectralMeter::integrate(std::span<const double> density, const PixelSpan &span) const {
  if (span.empty)
    return 0.0;
  if (span.last - span.first == 1)
    return span.first_share * density[span.first];
  double sum = span.first_share * density[span.first];
  for (std::size_t c = span.first + 1; c + 1 < span.last; ++c)
    sum += density[c];
  return sum + span.last_share * density[span.last - 1];
}

std::vector<double> SpectralMeter::pixel_fractions(const SchemeConfig &scheme,
                                                   CouplingStrength k) const {
  const auto density = unnormalized_distribution(scheme, k, spectrum_);
  std::vector<double> out(spans_.size());
  for (std::size_t i = 0; i < spans_.size(); ++i)
    out[i] = integrate(density, spans_[i]);
  return out;
}

std::vector<double> SpectralMeter::pixel_counts(double photons, double field_tesla,
                                                const SchemeConfig &scheme) const {
  if (!(photons >= 0))
    throw std::invalid_argument("pixel_counts: photon number must be non-negative");
  const double p0 = phys_.p0();
  const CouplingStrength k{phys_.verdet_rad_per_tesla_m * field_tesla * phys_.crystal_length_m / p0};
  auto counts = pixel_fractions(scheme, k);
  for (double &c : counts)
    c *= photons;
  return counts;
}

double SpectralMeter::uncovered_fraction(const SchemeConfig &scheme, CouplingStrength k) const {
  const auto density = unnormalized_distribution(scheme, k, spectrum_);
  const double total = std::accumulate(density.begin(), density.end(), 0.0);
  if (!(total > 0))
    return 0.0;
  double covered = 0.0;
  for (const auto &span : spans_)
    covered += integrate(density, span);
  return std::max(0.0, 1.0 - covered / total);
}

std::vector<double> expected_pixel_counts(double photons, double field_tesla,
                                          const SchemeConfig &scheme, const PhysicalConfig &phys,
                                          const DetectorModel &det) {
  scheme.validate();
  const SpectralMeter meter(phys, det);
  const double missed = meter.uncovered_fraction(scheme, coupling_strength(field_tesla, phys));
  if (missed > 1e-3) {
    std::ostringstream msg;
    msg << to_string(scheme.scheme) << ": " << 100.0 * missed
        << "% of the post-selected spectrum falls outside the pixel range";
    warn(msg.str());
  }
  return meter.pixel_counts(photons, field_tesla, scheme);
}

} // namespace satmetro
