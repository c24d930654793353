#include "satmetro/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "satmetro/parallel.hpp"

namespace satmetro {

double FisherOptions::step_for(double field_tesla) const {
  return std::max(relative_step * std::abs(field_tesla), absolute_step_floor);
}

double crb_precision(double fisher_information, int frames) {
  if (!(fisher_information > 0) || frames <= 0)
    return std::numeric_limits<double>::infinity();
  return 1.0 / std::sqrt(static_cast<double>(frames) * fisher_information);
}

double pixel_fisher(const ResponseModel &response, double mean_minus, double mean_centre,
                    double mean_plus, double step) {
  if (!(step > 0))
    throw std::invalid_argument("pixel_fisher: step must be positive");
  if (mean_minus == mean_centre && mean_plus == mean_centre)
    return 0.0;
  const double means[] = {mean_minus, mean_centre, mean_plus};
  const PhotonWindow window = response.photon_window(means);
  if (window.lo > response.table_cap())
    return 0.0; // saturated at every step

  const std::size_t size = static_cast<std::size_t>(response.saturation_threshold()) + 1;
  thread_local std::vector<double> lower, centre, upper;
  lower.resize(size);
  centre.resize(size);
  upper.resize(size);
  response.pixel_outcome(mean_minus, window, lower);
  response.pixel_outcome(mean_centre, window, centre);
  response.pixel_outcome(mean_plus, window, upper);

  const double scale = 1.0 / (4.0 * step * step);
  double fi = 0.0;
  for (std::size_t k = 0; k < size; ++k) {
    const double diff = upper[k] - lower[k];
    const double num = diff * diff;
    if (num == 0.0)
      continue;
    if (centre[k] < kProbabilityFloor)
      return std::numeric_limits<double>::infinity();
    fi += num * scale / centre[k];
  }
  return fi;
}

double pixel_fisher(const std::function<double(double)> &mean_of_field, double field_tesla,
                    const ResponseModel &response, double step) {
  return pixel_fisher(response, mean_of_field(field_tesla - step), mean_of_field(field_tesla),
                      mean_of_field(field_tesla + step), step);
}

FisherResult total_fisher(const ForwardModel &model, double field_tesla,
                          const FisherOptions &options) {
  const double step = options.step_for(field_tesla);
  const auto lower = model.pixel_means(field_tesla - step);
  const auto centre = model.pixel_means(field_tesla);
  const auto upper = model.pixel_means(field_tesla + step);

  FisherResult result;
  result.scheme = model.scheme();
  result.photons = model.photons();
  result.field_tesla = field_tesla;
  result.frames = options.frames;
  result.fi_per_pixel.assign(centre.size(), 0.0);
  parallel_for(centre.size(), options.threads, [&](std::size_t j) {
    result.fi_per_pixel[j] = pixel_fisher(model.response(), lower[j], centre[j], upper[j], step);
  });
  double total = 0.0;
  for (std::size_t j = 0; j < centre.size(); ++j) {
    const double fi = result.fi_per_pixel[j];
    if (!std::isfinite(fi)) {
      std::ostringstream msg;
      msg << "pixel " << j << ": non-finite Fisher information (probability floor hit)";
      throw FisherError(static_cast<int>(j), msg.str());
    }
    total += fi;
  }
  result.fi_total = total;
  result.crb_precision = crb_precision(total, options.frames);
  return result;
}

std::vector<FisherResult> fisher_sweep(std::span<const SchemeConfig> schemes,
                                       std::span<const double> photon_grid, double field_tesla,
                                       const SpectralMeter &meter, const ResponseModel &response,
                                       const FisherOptions &options) {
  for (std::size_t i = 0; i < photon_grid.size(); ++i) {
    if (!(photon_grid[i] > 0))
      throw std::invalid_argument("fisher_sweep: photon grid must be positive");
    if (i > 0 && !(photon_grid[i] > photon_grid[i - 1]))
      throw std::invalid_argument("fisher_sweep: photon grid must be ascending");
  }
  std::vector<FisherResult> rows;
  rows.reserve(schemes.size() * photon_grid.size());
  for (const SchemeConfig &scheme : schemes) {
    for (double n : photon_grid) {
      try {
        rows.push_back(total_fisher(ForwardModel(meter, response, scheme, n), field_tesla, options));
      } catch (const std::exception &e) {
        FisherResult failed;
        failed.scheme = scheme;
        failed.photons = n;
        failed.field_tesla = field_tesla;
        failed.frames = options.frames;
        failed.fi_total = std::numeric_limits<double>::quiet_NaN();
        failed.crb_precision = std::numeric_limits<double>::quiet_NaN();
        failed.error = e.what();
        rows.push_back(std::move(failed));
      }
    }
  }
  return rows;
}

} // namespace satmetro
