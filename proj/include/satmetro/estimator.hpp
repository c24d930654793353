#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "satmetro/forward_model.hpp"

namespace satmetro {

/// Where a frame pool came from.
struct Provenance {
  SchemeConfig scheme;
  double photons = 0.0;
  double field_tesla = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t detector_hash = 0;
};

struct FrameSet {
  std::vector<Frame> frames;
  Provenance provenance;

  /// Throws unless non-empty with a common pixel count.
  void validate() const;
  std::size_t pixel_count() const { return frames.empty() ? 0 : frames.front().electrons.size(); }
};

/// `count` frames at field B; frame f is sampled with seed derive_seed(seed, f).
FrameSet simulate_frames(const ForwardModel &model, double field_tesla, std::size_t count,
                         std::uint64_t seed);

/// Σ_i Σ_j ln P(k_ij | B) over every frame; −∞ when any outcome has
/// probability below the floor.
double log_likelihood(const FrameSet &frames, double field_tesla, const ForwardModel &model,
                      unsigned threads = 0);
/// Restricted to the frames listed in `subset`.
double log_likelihood(const FrameSet &frames, std::span<const std::size_t> subset,
                      double field_tesla, const ForwardModel &model, unsigned threads = 0);

/// The prescan maximum sits on a bracket edge or the likelihood is flat, so
/// the data do not pin down B inside the bracket.
class NoInteriorMaximum : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct MleOptions {
  int prescan_points = 64;
  double relative_tolerance = 1e-6;
  unsigned threads = 0;
};

struct MleResult {
  double estimate = 0.0;
  double log_likelihood = 0.0;
  std::vector<double> prescan_fields;
  std::vector<double> prescan_values;
};

/// Coarse prescan of the bracket followed by golden-section refinement
/// around the best prescan point. Throws NoInteriorMaximum.
MleResult maximize_likelihood(const FrameSet &frames, std::span<const std::size_t> subset,
                              std::pair<double, double> bracket, const ForwardModel &model,
                              const MleOptions &options = {});

double mle_estimate(const FrameSet &frames, std::pair<double, double> bracket,
                    const ForwardModel &model, const MleOptions &options = {});

struct BootstrapOptions {
  std::size_t batch_size = 300;
  std::size_t repeats = 100;
  std::pair<double, double> bracket{0.0, 0.0};
  std::uint64_t seed = 0;
  /// The report is marked failed when more than this share of repeats fail.
  double max_failure_fraction = 0.2;
  MleOptions mle;
};

struct PrecisionReport {
  std::vector<double> estimates; // successful repeats only
  double delta_b = 0.0;          // sample standard deviation of the estimates, T
  std::size_t batch_size = 0;
  std::size_t repeats = 0;       // == estimates.size()
  std::size_t failed_repeats = 0;
  std::vector<std::string> failures;
  std::vector<std::vector<double>> prescan_profiles; // one per attempted repeat
  bool ok = true;
};

/// Draws `batch_size` distinct frames per repeat (repeat r uses seed
/// derive_seed(seed, r)), estimates B by maximum likelihood and reports the
/// spread of the estimates.
PrecisionReport bootstrap_precision(const FrameSet &pool, const ForwardModel &model,
                                    const BootstrapOptions &options);

} // namespace satmetro
