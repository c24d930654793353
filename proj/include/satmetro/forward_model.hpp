#pragma once

#include <vector>

#include "satmetro/detector_model.hpp"
#include "satmetro/spectral_meter.hpp"

namespace satmetro {

/// Field → expected photons per pixel → outcome law, for one scheme and one
/// incident photon number. Holds references; the meter and response model
/// must outlive it.
class ForwardModel {
public:
  ForwardModel(const SpectralMeter &meter, const ResponseModel &response, SchemeConfig scheme,
               double photons);

  const SpectralMeter &meter() const { return *meter_; }
  const ResponseModel &response() const { return *response_; }
  const SchemeConfig &scheme() const { return scheme_; }
  double photons() const { return photons_; }
  std::size_t pixel_count() const { return meter_->pixel_count(); }

  std::vector<double> pixel_means(double field_tesla) const;

private:
  const SpectralMeter *meter_;
  const ResponseModel *response_;
  SchemeConfig scheme_;
  double photons_;
};

} // namespace satmetro
