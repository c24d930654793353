#include "satmetro/detector_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "satmetro/hashing.hpp"

namespace satmetro {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Photoelectron normal is discretized on mean ± this many σ.
constexpr double kElectronWindowSigmas = 10.0;
// Photon-number law is marginalized over mean ± this many σ.
constexpr double kPhotonWindowSigmas = 6.0;
/// Photon-law spread above which interior node masses use the series form.
constexpr double kSeriesMinSigma = 8.0;

/// P(Z > z) for a standard normal, accurate deep in the upper tail.
double upper_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

/// P(za < Z <= zb) without cancellation in either tail.
double normal_mass(double za, double zb) {
  if (za >= 0)
    return upper_tail(za) - upper_tail(zb);
  if (zb <= 0)
    return upper_tail(-zb) - upper_tail(-za);
  return 1.0 - upper_tail(-za) - upper_tail(zb);
}

/// Integer-binned N(mean, sigma) on [lo, hi]; bins [k-1/2, k+1/2], mass
/// outside the window dropped and the rest renormalized.
std::vector<double> binned_normal(double mean, double sigma, long lo, long hi) {
  std::vector<double> out(static_cast<std::size_t>(hi - lo + 1));
  double total = 0.0;
  for (long k = lo; k <= hi; ++k) {
    const double m = normal_mass((k - 0.5 - mean) / sigma, (k + 0.5 - mean) / sigma);
    out[static_cast<std::size_t>(k - lo)] = m;
    total += m;
  }
  if (!(total > 0))
    throw std::domain_error("binned_normal: window carries no probability");
  for (double &v : out)
    v /= total;
  return out;
}

struct SparsePmf {
  long lo = 0;
  std::vector<double> probs;
};

SparsePmf photoelectrons(double photons, const DetectorModel &det) {
  if (photons <= 0)
    return {0, {1.0}};
  const double mean = det.quantum_efficiency * photons;
  const double sigma = det.gain_sigma_law.sigma(photons);
  const long lo = std::max(0L, static_cast<long>(std::floor(mean - kElectronWindowSigmas * sigma)));
  const long hi = std::max(lo, static_cast<long>(std::ceil(mean + kElectronWindowSigmas * sigma)));
  return {lo, binned_normal(mean, sigma, lo, hi)};
}

SparsePmf dark_sparse(const DetectorModel &det) {
  return {det.dark_support.lo,
          binned_normal(det.dark_mean, det.dark_sigma, det.dark_support.lo, det.dark_support.hi)};
}

SparsePmf convolve(const SparsePmf &a, const SparsePmf &b) {
  SparsePmf out{a.lo + b.lo, std::vector<double>(a.probs.size() + b.probs.size() - 1, 0.0)};
  for (std::size_t i = 0; i < a.probs.size(); ++i)
    for (std::size_t j = 0; j < b.probs.size(); ++j)
      out.probs[i + j] += a.probs[i] * b.probs[j];
  return out;
}

double dot(const double *a, const double *b, std::size_t count) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < count; ++i)
    s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

OutcomePMF densify(const SparsePmf &s) {
  OutcomePMF out;
  out.probs.assign(static_cast<std::size_t>(s.lo) + s.probs.size(), 0.0);
  std::copy(s.probs.begin(), s.probs.end(), out.probs.begin() + s.lo);
  return out;
}

/// Clips at `threshold`: mass at or above it accumulates on k = threshold.
OutcomePMF clip(const SparsePmf &s, int threshold) {
  OutcomePMF out;
  out.probs.assign(static_cast<std::size_t>(threshold) + 1, 0.0);
  double tail = 0.0;
  for (std::size_t i = 0; i < s.probs.size(); ++i) {
    const long k = s.lo + static_cast<long>(i);
    if (k < threshold)
      out.probs[static_cast<std::size_t>(k)] = s.probs[i];
    else
      tail += s.probs[i];
  }
  out.probs[static_cast<std::size_t>(threshold)] = tail;
  return out;
}

} // namespace

double GainSigmaLaw::sigma(double photons) const {
  if (photons <= 0)
    return 0.0;
  return std::exp(slope * std::log(photons) + intercept);
}

void DetectorModel::validate() const {
  if (pixel_count < 1)
    throw std::invalid_argument("detector: pixel_count must be at least 1");
  if (!(quantum_efficiency > 0 && quantum_efficiency <= 1))
    throw std::invalid_argument("detector: quantum efficiency must lie in (0, 1]");
  if (!(dark_sigma > 0) || !std::isfinite(dark_mean))
    throw std::invalid_argument("detector: dark noise needs a finite mean and positive sigma");
  if (dark_support.lo < 0 || dark_support.lo > dark_support.hi)
    throw std::invalid_argument("detector: dark support must be a non-empty range of counts >= 0");
  if (!(saturation_threshold > dark_support.hi))
    throw std::invalid_argument("detector: saturation threshold must exceed the dark support");
  if (!(photon_number_sigma_factor > 0))
    throw std::invalid_argument("detector: photon-number sigma factor must be positive");
  if (dispersion.slope_nm == 0.0)
    throw std::invalid_argument("detector: dispersion slope must be non-zero");
  const double first = dispersion.wavelength(0.5);
  const double last = dispersion.wavelength(pixel_count + 0.5);
  if (!(first > 0 && last > 0))
    throw std::invalid_argument("detector: dispersion map yields non-positive wavelengths");
}

std::uint64_t DetectorModel::hash() const {
  Fnv1a h;
  h.update(std::int64_t{pixel_count});
  h.update(dispersion.slope_nm);
  h.update(dispersion.offset_nm);
  h.update(dark_mean);
  h.update(dark_sigma);
  h.update(std::int64_t{dark_support.lo});
  h.update(std::int64_t{dark_support.hi});
  h.update(quantum_efficiency);
  h.update(gain_sigma_law.slope);
  h.update(gain_sigma_law.intercept);
  h.update(std::int64_t{saturation_threshold});
  h.update(photon_number_sigma_factor);
  return h.digest();
}

std::pair<double, double> DetectorModel::pixel_wavelength_bounds(int index) const {
  const double centre = dispersion.wavelength(index + 1.0);
  const double half = 0.5 * std::abs(dispersion.slope_nm);
  return {centre - half, centre + half};
}

double OutcomePMF::total() const {
  double s = 0.0;
  for (double p : probs)
    s += p;
  return s;
}

int OutcomePMF::mode() const {
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

double total_variation(const OutcomePMF &a, const OutcomePMF &b) {
  const std::size_t n = std::max(a.size(), b.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    sum += std::abs(a[k] - b[k]);
  return 0.5 * sum;
}

OutcomePMF dark_noise_pmf(const DetectorModel &det) {
  det.validate();
  return densify(dark_sparse(det));
}

OutcomePMF photoelectron_pmf(double photons, const DetectorModel &det) {
  det.validate();
  if (!(photons >= 0))
    throw std::invalid_argument("photoelectron_pmf: photon number must be non-negative");
  return densify(photoelectrons(photons, det));
}

OutcomePMF response_pmf(double photons, const DetectorModel &det) {
  det.validate();
  if (!(photons >= 0))
    throw std::invalid_argument("response_pmf: photon number must be non-negative");
  return densify(convolve(photoelectrons(photons, det), dark_sparse(det)));
}

OutcomePMF saturated_response_pmf(double photons, const DetectorModel &det) {
  det.validate();
  if (!(photons >= 0))
    throw std::invalid_argument("saturated_response_pmf: photon number must be non-negative");
  return clip(convolve(photoelectrons(photons, det), dark_sparse(det)), det.saturation_threshold);
}

OutcomePMF pixel_outcome_pmf(double mean_photons, const DetectorModel &det) {
  return ResponseModel(det).pixel_outcome(mean_photons);
}

Frame sample_frame(std::span<const double> mean_photons, const DetectorModel &det,
                   std::uint64_t seed) {
  return ResponseModel(det).sample_frame(mean_photons, seed);
}

// ---------------------------------------------------------------------------

struct ResponseModel::NodeWeights {
  long first = 0;
  std::vector<double> w;
  double sigma = 0.0;
  double norm = 1.0;
};

ResponseModel::ResponseModel(DetectorModel det) : det_(det) {
  det_.validate();
  const SparsePmf dark = dark_sparse(det_);
  dark_ = densify(dark);
  const int ks = det_.saturation_threshold;

  for (long n = 0;; ++n) {
    const SparsePmf raw = convolve(photoelectrons(static_cast<double>(n), det_), dark);
    if (raw.lo >= ks)
      break;
    if (n > 50'000'000)
      throw std::length_error("ResponseModel: response table does not close below the threshold");
    const OutcomePMF row = clip(raw, ks);
    Band band;
    band.lo = static_cast<int>(raw.lo);
    band.hi = static_cast<int>(std::min<long>(raw.lo + static_cast<long>(raw.probs.size()) - 1, ks));
    band.offset = row_values_.size();
    row_values_.insert(row_values_.end(), row.probs.begin() + band.lo,
                       row.probs.begin() + band.hi + 1);
    rows_.push_back(band);
  }

  columns_.assign(static_cast<std::size_t>(ks) + 1, Band{0, -1, 0});
  std::vector<long> col_lo(static_cast<std::size_t>(ks) + 1, -1), col_hi(col_lo);
  for (std::size_t n = 0; n < rows_.size(); ++n)
    for (int k = rows_[n].lo; k <= rows_[n].hi; ++k) {
      auto &lo = col_lo[static_cast<std::size_t>(k)];
      if (lo < 0)
        lo = static_cast<long>(n);
      col_hi[static_cast<std::size_t>(k)] = static_cast<long>(n);
    }
  for (int k = 0; k <= ks; ++k) {
    const long lo = col_lo[static_cast<std::size_t>(k)];
    if (lo < 0)
      continue;
    const long hi = col_hi[static_cast<std::size_t>(k)];
    Band &col = columns_[static_cast<std::size_t>(k)];
    col.lo = static_cast<int>(lo);
    col.hi = static_cast<int>(hi);
    col.offset = column_values_.size();
    for (long n = lo; n <= hi; ++n) {
      const Band &row = rows_[static_cast<std::size_t>(n)];
      column_values_.push_back(k >= row.lo && k <= row.hi ? row_values_[row.offset + (k - row.lo)]
                                                          : 0.0);
    }
  }
}

OutcomePMF ResponseModel::saturated_response(long photons) const {
  OutcomePMF out;
  out.probs.assign(static_cast<std::size_t>(det_.saturation_threshold) + 1, 0.0);
  if (photons < 0)
    throw std::invalid_argument("saturated_response: photon number must be non-negative");
  if (photons > table_cap()) {
    out.probs.back() = 1.0;
    return out;
  }
  const Band &row = rows_[static_cast<std::size_t>(photons)];
  std::copy_n(row_values_.begin() + static_cast<std::ptrdiff_t>(row.offset), row.hi - row.lo + 1,
              out.probs.begin() + row.lo);
  return out;
}

double ResponseModel::photon_sigma(double mean_photons) const {
  return mean_photons > 0 ? det_.photon_number_sigma_factor * std::sqrt(mean_photons) : 0.0;
}

PhotonWindow ResponseModel::photon_window(double mean_photons) const {
  if (!(mean_photons >= 0) || !std::isfinite(mean_photons))
    throw std::invalid_argument("photon_window: mean photon number must be finite and >= 0");
  if (mean_photons == 0)
    return {0, 0};
  const double sd = photon_sigma(mean_photons);
  const double lo = std::max(0.0, std::floor(mean_photons - kPhotonWindowSigmas * sd));
  const double hi = std::ceil(mean_photons + kPhotonWindowSigmas * sd);
  return {static_cast<long>(lo), std::max(static_cast<long>(lo), static_cast<long>(hi))};
}

PhotonWindow ResponseModel::photon_window(std::span<const double> means) const {
  PhotonWindow out{std::numeric_limits<long>::max(), 0};
  for (double m : means) {
    const PhotonWindow w = photon_window(m);
    out.lo = std::min(out.lo, w.lo);
    out.hi = std::max(out.hi, w.hi);
  }
  if (means.empty())
    out = {0, 0};
  return out;
}

ResponseModel::NodeWeights ResponseModel::node_weights(double mean_photons, PhotonWindow window,
                                                       long first, long last) const {
  NodeWeights out;
  out.first = first;
  out.sigma = photon_sigma(mean_photons);
  if (out.sigma > 0 && window.lo == 0)
    out.norm = upper_tail((-0.5 - mean_photons) / out.sigma);
  if (last < first)
    return out;
  if (out.sigma == 0.0) {
    // Point mass at N = 0 (the window of a zero mean is {0, 0}).
    out.w.assign(static_cast<std::size_t>(last - first + 1), 0.0);
    if (first == 0)
      out.w[0] = 1.0;
    return out;
  }
  const double sd = out.sigma;
  auto edge = [&](long n_upper) { // z of the boundary below node n_upper
    if (n_upper == window.lo)
      return window.lo == 0 ? (-0.5 - mean_photons) / sd : -kInf;
    if (n_upper == window.hi + 1)
      return kInf;
    return (n_upper - 0.5 - mean_photons) / sd;
  };
  const std::size_t count = static_cast<std::size_t>(last - first + 1);
  out.w.resize(count);
  // Interior unit cells use the midpoint Euler-Maclaurin series once the
  // photon law is wide; edge cells (which carry the lumped tails) are exact.
  long a = last + 1, b = last;
  if (sd >= kSeriesMinSigma) {
    a = std::max(first, window.lo + 1);
    b = std::min(last, window.hi - 1);
  }
  for (long n = first; n <= last; ++n) {
    if (n == a && a <= b)
      n = b + 1;
    if (n > last)
      break;
    out.w[static_cast<std::size_t>(n - first)] = normal_mass(edge(n), edge(n + 1)) / out.norm;
  }
  if (b < a)
    return out;
  // φ(z + h) = φ(z)·exp(-zh - h²/2)
  const double h = 1.0 / sd;
  const double h2 = h * h;
  const double step = std::exp(-h2);
  double z = (static_cast<double>(a) - mean_photons) / sd;
  double density = std::exp(-0.5 * z * z) * std::numbers::inv_sqrtpi / std::numbers::sqrt2 * h;
  double ratio = std::exp(-z * h - 0.5 * h2);
  for (long n = a; n <= b; ++n) {
    const double z2 = z * z;
    const double series =
        1.0 + (z2 - 1.0) * h2 / 24.0 + (z2 * z2 - 6.0 * z2 + 3.0) * h2 * h2 / 1920.0;
    out.w[static_cast<std::size_t>(n - first)] = density * series / out.norm;
    density *= ratio;
    ratio *= step;
    z += h;
  }
  return out;
}

OutcomePMF ResponseModel::pixel_outcome(double mean_photons) const {
  OutcomePMF out;
  out.probs.assign(static_cast<std::size_t>(det_.saturation_threshold) + 1, 0.0);
  pixel_outcome(mean_photons, photon_window(mean_photons), out.probs);
  return out;
}

void ResponseModel::pixel_outcome(double mean_photons, PhotonWindow window,
                                  std::span<double> out) const {
  const int ks = det_.saturation_threshold;
  if (out.size() != static_cast<std::size_t>(ks) + 1)
    throw std::invalid_argument("pixel_outcome: output span must hold k_s + 1 values");
  std::fill(out.begin(), out.end(), 0.0);
  const long cap = table_cap();
  if (window.lo > cap) {
    out[static_cast<std::size_t>(ks)] = 1.0;
    return;
  }
  const long last = std::min(window.hi, cap);
  const NodeWeights nw = node_weights(mean_photons, window, window.lo, last);
  for (std::size_t i = 0; i < nw.w.size(); ++i) {
    const double w = nw.w[i];
    if (w == 0.0)
      continue;
    const Band &row = rows_[static_cast<std::size_t>(nw.first) + i];
    const double *values = row_values_.data() + row.offset;
    double *dst = out.data() + row.lo;
    const int width = row.hi - row.lo + 1;
    for (int j = 0; j < width; ++j)
      dst[j] += w * values[j];
  }
  if (window.hi > cap && nw.sigma > 0)
    out[static_cast<std::size_t>(ks)] += upper_tail((cap + 0.5 - mean_photons) / nw.sigma) / nw.norm;
}

void ResponseModel::outcome_probabilities(double mean_photons, std::span<const int> ks,
                                          std::span<double> out) const {
  if (out.size() != ks.size())
    throw std::invalid_argument("outcome_probabilities: output size mismatch");
  const int threshold = det_.saturation_threshold;
  const PhotonWindow window = photon_window(mean_photons);
  const long cap = table_cap();
  if (window.lo > cap) {
    for (std::size_t i = 0; i < ks.size(); ++i)
      out[i] = ks[i] == threshold ? 1.0 : 0.0;
    return;
  }
  long first = std::numeric_limits<long>::max();
  long last = -1;
  for (int k : ks) {
    if (k < 0 || k > threshold)
      continue;
    const Band &col = columns_[static_cast<std::size_t>(k)];
    if (col.hi < col.lo)
      continue;
    first = std::min<long>(first, col.lo);
    last = std::max<long>(last, col.hi);
  }
  first = std::max(first, window.lo);
  last = std::min({last, window.hi, cap});
  const NodeWeights nw = node_weights(mean_photons, window, first, last);
  const double sd = nw.sigma;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const int k = ks[i];
    double p = 0.0;
    if (k >= 0 && k <= threshold) {
      const Band &col = columns_[static_cast<std::size_t>(k)];
      const long lo = std::max<long>(col.lo, first);
      const long hi = std::min<long>(col.hi, last);
      if (lo <= hi)
        p = dot(nw.w.data() + (lo - first), column_values_.data() + col.offset + (lo - col.lo),
                static_cast<std::size_t>(hi - lo + 1));
      if (k == threshold && window.hi > cap && sd > 0)
        p += upper_tail((cap + 0.5 - mean_photons) / sd) / nw.norm;
    }
    out[i] = p;
  }
}

int ResponseModel::sample_outcome(double mean_photons, std::mt19937_64 &rng) const {
  long photons = 0;
  if (mean_photons > 0) {
    const PhotonWindow window = photon_window(mean_photons);
    std::normal_distribution<double> law(mean_photons, photon_sigma(mean_photons));
    double x = law(rng);
    while (window.lo == 0 && x < -0.5)
      x = law(rng);
    photons = std::clamp(static_cast<long>(std::floor(x + 0.5)), window.lo, window.hi);
  }
  if (photons > table_cap())
    return det_.saturation_threshold;
  const Band &row = rows_[static_cast<std::size_t>(photons)];
  const double *values = row_values_.data() + row.offset;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cumulative = 0.0;
  for (int k = row.lo; k < row.hi; ++k) {
    cumulative += values[k - row.lo];
    if (u < cumulative)
      return k;
  }
  return row.hi;
}

Frame ResponseModel::sample_frame(std::span<const double> mean_photons, std::uint64_t seed) const {
  if (mean_photons.size() != static_cast<std::size_t>(det_.pixel_count))
    throw std::invalid_argument("sample_frame: expected one mean per pixel");
  Frame frame;
  frame.electrons.resize(mean_photons.size());
  for (std::size_t i = 0; i < mean_photons.size(); ++i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    frame.electrons[i] = sample_outcome(mean_photons[i], rng);
  }
  return frame;
}

} // namespace satmetro
