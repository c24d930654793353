#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "satmetro/forward_model.hpp"

namespace satmetro {

struct FisherOptions {
  /// Central-difference step dB = max(relative_step·|B|, absolute_step_floor).
  double relative_step = 1e-4;
  double absolute_step_floor = 1e-10;
  /// Frame count ν used for the reported Cramér–Rao precision.
  int frames = 300;
  unsigned threads = 0;

  double step_for(double field_tesla) const;
};

struct FisherResult {
  SchemeConfig scheme;
  double photons = 0.0;
  double field_tesla = 0.0;
  double fi_total = 0.0;          // T⁻²
  std::vector<double> fi_per_pixel;
  int frames = 0;
  double crb_precision = 0.0;     // T, 1/√(ν·FI)
  std::string error;              // empty on success

  bool ok() const { return error.empty(); }
};

/// Raised by total_fisher when a pixel's Fisher information is not finite.
class FisherError : public std::runtime_error {
public:
  FisherError(int pixel, const std::string &what)
      : std::runtime_error(what), pixel_(pixel) {}
  int pixel() const { return pixel_; }

private:
  int pixel_;
};

/// Probabilities below this are treated as zero in Fisher sums and likelihoods.
inline constexpr double kProbabilityFloor = 1e-300;

double crb_precision(double fisher_information, int frames);

/// Σ_k (∂P(k|B)/∂B)² / P(k|B) for one pixel whose expected photon number is
/// mean_of_field(B), by central differences with step dB. Returns +inf when
/// an outcome with P below the floor has a non-zero derivative.
double pixel_fisher(const std::function<double(double)> &mean_of_field, double field_tesla,
                    const ResponseModel &response, double step);

/// Same, from the three expected photon numbers at B − dB, B, B + dB.
double pixel_fisher(const ResponseModel &response, double mean_minus, double mean_centre,
                    double mean_plus, double step);

/// Fisher information about B summed over all pixels. Throws FisherError
/// naming the first pixel with a non-finite contribution.
FisherResult total_fisher(const ForwardModel &model, double field_tesla,
                          const FisherOptions &options = {});

/// total_fisher over every (scheme, n) pair, schemes outermost. Failed points
/// are returned with `error` set and fi_total = NaN; the sweep continues.
std::vector<FisherResult> fisher_sweep(std::span<const SchemeConfig> schemes,
                                       std::span<const double> photon_grid, double field_tesla,
                                       const SpectralMeter &meter, const ResponseModel &response,
                                       const FisherOptions &options = {});

} // namespace satmetro
