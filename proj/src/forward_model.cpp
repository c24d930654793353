#include "satmetro/forward_model.hpp"

#include <stdexcept>

namespace satmetro {

ForwardModel::ForwardModel(const SpectralMeter &meter, const ResponseModel &response,
                           SchemeConfig scheme, double photons)
    : meter_(&meter), response_(&response), scheme_(scheme), photons_(photons) {
  scheme_.validate();
  if (!(photons >= 0))
    throw std::invalid_argument("forward model: photon number must be non-negative");
  if (meter.pixel_count() != static_cast<std::size_t>(response.detector().pixel_count))
    throw std::invalid_argument("forward model: meter and detector disagree on pixel count");
}

std::vector<double> ForwardModel::pixel_means(double field_tesla) const {
  return meter_->pixel_counts(photons_, field_tesla, scheme_);
}

} // namespace satmetro
