#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "satmetro/estimator.hpp"
#include "satmetro/fisher.hpp"
#include "satmetro/run_config.hpp"

namespace satmetro {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitRun = 3 };

std::string_view tool_version();

struct CommandOptions {
  std::filesystem::path config;
  std::filesystem::path out_dir = ".";
  /// Directory holding pool_s<i>_n<j>.csv files; empty means <out>/pools.
  std::filesystem::path pools_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

/// Loads the config and applies --seed / --threads overrides.
RunConfig resolve_config(const CommandOptions &options);

/// Shared detector table and spectral meter for one config.
struct Pipeline {
  explicit Pipeline(const RunConfig &config);

  RunConfig config;
  ResponseModel response;
  SpectralMeter meter;

  ForwardModel model(std::size_t scheme_index, double photons) const;
  /// Seed of the frame pool for (scheme, estimation-grid point).
  std::uint64_t pool_seed(std::size_t scheme_index, std::size_t n_index) const;
  std::uint64_t bootstrap_seed(std::size_t scheme_index, std::size_t n_index) const;
  FrameSet simulate_pool(std::size_t scheme_index, std::size_t n_index) const;
  BootstrapOptions bootstrap_options(std::size_t scheme_index, std::size_t n_index) const;
  /// Warns once per scheme when part of the spectrum misses the pixels.
  void report_coverage() const;
};

/// "# ..." lines naming the tool version, command and config hash.
std::string csv_header_comment(const RunConfig &config, std::string_view command);
std::string pool_file_name(std::size_t scheme_index, std::size_t n_index);

struct PrecisionRow {
  std::size_t scheme_index = 0;
  double photons = 0.0;
  PrecisionReport report;
  double crb = 0.0;
  bool flagged = false;
};

std::string fisher_sweep_csv(const RunConfig &config, const std::vector<FisherResult> &rows);
std::string precision_csv(const RunConfig &config, const std::vector<PrecisionRow> &rows);

/// Bootstrap precision for one pool; the CRB column uses ν = batch size.
PrecisionRow precision_point(const Pipeline &pipeline, std::size_t scheme_index,
                             std::size_t n_index, const FrameSet &pool);

/// Subcommands. Each returns an ExitCode and reports problems on stderr.
int cmd_fisher_sweep(const CommandOptions &options);
int cmd_simulate(const CommandOptions &options);
int cmd_estimate(const CommandOptions &options);
int cmd_precision_sweep(const CommandOptions &options);

} // namespace satmetro
