#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "satmetro/detector_model.hpp"
#include "satmetro/spectral_meter.hpp"

namespace satmetro {

/// Raised for any malformed, missing or out-of-range configuration value.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct SweepControls {
  double b_true = 0.0;             // T
  std::vector<double> n_grid;      // incident photons, ascending
  int frames = 300;                // ν for the Cramér-Rao column
  double relative_step = 1e-4;
  double absolute_step_floor = 1e-10;
};

struct EstimationControls {
  std::vector<double> n_grid;      // empty: use the sweep grid
  std::size_t pool_size = 600;
  std::size_t batch_size = 60;
  std::size_t repeats = 50;
  /// MLE bracket is [0, bracket_factor·b_true].
  double bracket_factor = 4.0;
  int prescan_points = 64;
  double relative_tolerance = 1e-6;
  double max_failure_fraction = 0.2;
};

struct RunConfig {
  std::string name;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  PhysicalConfig physical;
  DetectorModel detector;
  std::vector<SchemeConfig> schemes;
  SweepControls sweep;
  EstimationControls estimation;

  /// Throws ConfigError.
  void validate() const;
  const std::vector<double> &estimation_grid() const;
  /// Digest of every output-affecting setting (thread count excluded).
  std::uint64_t hash() const;
  /// Canonical JSON text; parse_config(to_json()) reproduces the config.
  std::string to_json() const;
};

/// `points` log-spaced values from start to stop inclusive.
std::vector<double> log_grid(double start, double stop, int points);

RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::filesystem::path &path);

/// Short label such as "BWM(eps=0.2,m=5,ER=90000)".
std::string scheme_label(const SchemeConfig &scheme);

} // namespace satmetro
