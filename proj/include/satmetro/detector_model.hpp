#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace satmetro {

/// Affine wavelength calibration λ(j) = slope·j + offset (nm), j = 1..pixel_count.
struct Dispersion {
  double slope_nm = 0.007331;
  double offset_nm = 789.5;

  double wavelength(double j) const { return slope_nm * j + offset_nm; }
};

/// ln σ_N = slope·ln N + intercept for the photoelectron spread at N photons.
struct GainSigmaLaw {
  double slope = 0.5908;
  double intercept = -1.9986;

  double sigma(double photons) const;
};

struct DarkSupport {
  int lo = 58;
  int hi = 140;
};

/// Calibrated CMOS response. Defaults are the measured values of the
/// reference experiment.
struct DetectorModel {
  int pixel_count = 1920;
  Dispersion dispersion;
  double dark_mean = 94.16;
  double dark_sigma = 2.03;
  DarkSupport dark_support;
  double quantum_efficiency = 0.313;
  GainSigmaLaw gain_sigma_law;
  int saturation_threshold = 1200;
  double photon_number_sigma_factor = 4.0;

  void validate() const;
  /// Stable 64-bit digest of every parameter.
  std::uint64_t hash() const;
  /// Wavelength interval (nm, ascending) seen by 0-based pixel `index`.
  std::pair<double, double> pixel_wavelength_bounds(int index) const;
};

/// One read-out of the pixel row.
struct Frame {
  std::vector<int> electrons;
};

/// Probability mass over electron counts 0..size()-1.
struct OutcomePMF {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t k) const { return k < probs.size() ? probs[k] : 0.0; }
  double total() const;
  /// Smallest count with maximal probability.
  int mode() const;
};

/// Half of the L1 distance; PMFs of different length are zero-extended.
double total_variation(const OutcomePMF &a, const OutcomePMF &b);

/// Integer photon-number nodes [lo, hi] used to marginalize the Gaussian
/// photon law. Tails beyond the window are lumped into the edge nodes; when
/// lo == 0 the N < 0 mass is dropped and the rest renormalized.
struct PhotonWindow {
  long lo = 0;
  long hi = 0;
};

/// Discretized N(dark_mean, dark_sigma) restricted to the dark support.
OutcomePMF dark_noise_pmf(const DetectorModel &det);
/// Discretized N(ηN, σ_N); a point mass at zero for N = 0.
OutcomePMF photoelectron_pmf(double photons, const DetectorModel &det);
/// Dark noise convolved with the photoelectron law (no clipping).
OutcomePMF response_pmf(double photons, const DetectorModel &det);
/// response_pmf clipped at the saturation threshold; excess mass sits at k_s.
OutcomePMF saturated_response_pmf(double photons, const DetectorModel &det);
/// Outcome law of a pixel expecting `mean_photons` photons.
OutcomePMF pixel_outcome_pmf(double mean_photons, const DetectorModel &det);
/// Monte-Carlo frame for per-pixel expected photon counts.
Frame sample_frame(std::span<const double> mean_photons, const DetectorModel &det,
                   std::uint64_t seed);

/// Precomputed saturated response table R_s(k|N) for one detector, plus the
/// photon-number marginalization built on it. Immutable after construction
/// and safe to share across threads.
class ResponseModel {
public:
  explicit ResponseModel(DetectorModel det);

  const DetectorModel &detector() const { return det_; }
  int saturation_threshold() const { return det_.saturation_threshold; }
  /// Largest N whose response is not a point mass at the threshold.
  long table_cap() const { return static_cast<long>(rows_.size()) - 1; }

  const OutcomePMF &dark_noise() const { return dark_; }
  OutcomePMF saturated_response(long photons) const;

  /// Default window: mean ± 6 standard deviations of the photon law.
  PhotonWindow photon_window(double mean_photons) const;
  /// Smallest window containing the default windows of every mean.
  PhotonWindow photon_window(std::span<const double> means) const;

  OutcomePMF pixel_outcome(double mean_photons) const;
  /// Writes P(k | mean) for k = 0..k_s into `out` (size k_s + 1).
  void pixel_outcome(double mean_photons, PhotonWindow window,
                     std::span<double> out) const;
  /// P(k | mean) for selected outcomes only; `ks` must be ascending.
  void outcome_probabilities(double mean_photons, std::span<const int> ks,
                             std::span<double> out) const;

  int sample_outcome(double mean_photons, std::mt19937_64 &rng) const;
  /// Pixel i draws from stream derive_seed(seed, i).
  Frame sample_frame(std::span<const double> mean_photons, std::uint64_t seed) const;

private:
  struct Band {
    int lo = 0;
    int hi = -1; // inclusive
    std::size_t offset = 0;
  };
  struct NodeWeights;

  double photon_sigma(double mean_photons) const;
  NodeWeights node_weights(double mean_photons, PhotonWindow window, long first,
                           long last) const;

  DetectorModel det_;
  OutcomePMF dark_;
  std::vector<Band> rows_;    // indexed by N
  std::vector<double> row_values_;
  std::vector<Band> columns_; // indexed by k; lo/hi are N bounds
  std::vector<double> column_values_;
};

} // namespace satmetro
