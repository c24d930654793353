#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "satmetro/detector_model.hpp"

namespace satmetro {

/// Optical constants of the light source and the Faraday crystal.
struct PhysicalConfig {
  double central_wavelength_nm = 796.0;
  double fwhm_nm = 12.0;
  double verdet_rad_per_tesla_m = 70.35;
  double crystal_length_m = 0.01;

  void validate() const;

  /// Central photon momentum 2π/λ0, in nm⁻¹.
  double p0() const;
  /// Momentum spread of the Gaussian meter, treating the FWHM as a Gaussian
  /// FWHM in wavelength: Δp = (2π/λ0²)·fwhm/(2√(2 ln 2)).
  double delta_p() const;
};

enum class Scheme { CM, SWM, BWM };

std::string_view to_string(Scheme s);
Scheme scheme_from_string(std::string_view name);

/// Read-out scheme. `epsilon` is the post-selection angle (ignored for CM),
/// `bias_order` the integer m of the bias condition p0·β + ε = mπ (BWM
/// only), and `extinction_ratio` the polarizer's max/min transmission
/// (infinity for an ideal polarizer; ignored for CM).
struct SchemeConfig {
  Scheme scheme = Scheme::CM;
  double epsilon = 0.0;
  int bias_order = 0;
  double extinction_ratio = std::numeric_limits<double>::infinity();

  void validate() const;
};

/// Coupling strength k in nm, so that k·p is dimensionless for p in nm⁻¹.
struct CouplingStrength {
  double k_nm = 0.0;
};

/// Meter profile |ψ(p)|² sampled on a strictly increasing momentum grid.
/// Each sample owns the cell between the midpoints to its neighbours; the
/// weights are cell masses and sum to one.
class Spectrum {
public:
  Spectrum(double p0, double delta_p, std::vector<double> momenta,
           std::vector<double> weights);

  /// Gaussian profile on a uniform grid p0 + i·step spanning p0 ± half_width·Δp.
  /// p0 itself is always a grid point.
  static Spectrum gaussian(double p0, double delta_p, double step,
                           double half_width_sigmas = 6.0);

  double p0() const { return p0_; }
  double delta_p() const { return delta_p_; }
  std::size_t size() const { return momenta_.size(); }
  std::span<const double> momenta() const { return momenta_; }
  std::span<const double> weights() const { return weights_; }
  /// size() + 1 cell boundaries.
  std::span<const double> cell_edges() const { return edges_; }

private:
  double p0_;
  double delta_p_;
  std::vector<double> momenta_;
  std::vector<double> weights_;
  std::vector<double> edges_;
};

/// k = V·B·l / p0. Warns (does not reject) when |k|·p0 > 0.1.
CouplingStrength coupling_strength(double field_tesla, const PhysicalConfig &phys);

/// Bias delay β (nm) solving p0·β + ε = mπ. Throws for m < 0 and for the
/// degenerate m = 0, ε = 0 combination.
double bias_phase(double epsilon, int bias_order, double p0);

/// Post-selected (unnormalized) momentum density on the spectrum grid:
/// sin²(phase(p))·w(p) with the per-scheme phase, plus the finite
/// extinction-ratio leakage floor for SWM and BWM.
std::vector<double> unnormalized_distribution(const SchemeConfig &scheme,
                                              CouplingStrength k,
                                              const Spectrum &spectrum);

/// Leading-order mean momentum shift: CM 2kΔp², SWM 2kΔp²·cot ε,
/// BWM 2k·p0²/(mπ − ε) (for m = 0 this is −2k·p0²/ε).
double mean_shift_analytic(const SchemeConfig &scheme, CouplingStrength k,
                           const Spectrum &spectrum);

/// E[p] at coupling k minus E[p] at k = 0 under the normalized post-selected
/// distribution, by direct quadrature. Throws std::domain_error when the
/// distribution is extinguished everywhere.
double mean_shift_numeric(const SchemeConfig &scheme, CouplingStrength k,
                          const Spectrum &spectrum);

/// Maps the post-selected spectrum onto detector pixels. Pixel i (0-based)
/// is dispersion index j = i + 1 and covers λ(j) ± slope/2.
class SpectralMeter {
public:
  SpectralMeter(PhysicalConfig phys, const DetectorModel &det);
  SpectralMeter(PhysicalConfig phys, const DetectorModel &det, Spectrum spectrum);

  const PhysicalConfig &physical() const { return phys_; }
  const Spectrum &spectrum() const { return spectrum_; }
  std::size_t pixel_count() const { return spans_.size(); }

  /// Post-selected probability landing on each pixel.
  std::vector<double> pixel_fractions(const SchemeConfig &scheme,
                                      CouplingStrength k) const;
  /// n̄_j = n · pixel_fractions(k(B)).
  std::vector<double> pixel_counts(double photons, double field_tesla,
                                   const SchemeConfig &scheme) const;
  /// Share of the post-selected weight that misses every pixel.
  double uncovered_fraction(const SchemeConfig &scheme, CouplingStrength k) const;

private:
  struct PixelSpan {
    std::size_t first = 0; // first overlapping cell
    std::size_t last = 0;  // one past the last overlapping cell
    double first_share = 0.0;
    double last_share = 0.0;
    bool empty = true;
  };

  void build_spans(const DetectorModel &det);
  double integrate(std::span<const double> density, const PixelSpan &span) const;

  PhysicalConfig phys_;
  Spectrum spectrum_;
  std::vector<PixelSpan> spans_;
};

/// Expected photons per pixel for `photons` incident photons at field B.
/// Warns when more than 0.1% of the post-selected weight falls outside the
/// pixel range.
std::vector<double> expected_pixel_counts(double photons, double field_tesla,
                                          const SchemeConfig &scheme,
                                          const PhysicalConfig &phys,
                                          const DetectorModel &det);

} // namespace satmetro
