#include "satmetro/commands.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "satmetro/diagnostics.hpp"
#include "satmetro/frame_io.hpp"
#include "satmetro/hashing.hpp"

#ifndef SATMETRO_VERSION
#define SATMETRO_VERSION "0.0.0"
#endif

namespace satmetro {
namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// "scheme,n,B,epsilon,m,extinction_ratio" prefix shared by every output table.
std::string row_prefix(const SchemeConfig &s, double photons, double field) {
  return std::string(to_string(s.scheme)) + "," + num(photons) + "," + num(field) + "," +
         num(s.epsilon) + "," + std::to_string(s.bias_order) + "," + num(s.extinction_ratio);
}

std::filesystem::path pools_dir(const CommandOptions &options) {
  return options.pools_dir.empty() ? options.out_dir / "pools" : options.pools_dir;
}

template <class Body> int guarded(const CommandOptions &options, std::string_view name, Body body) {
  RunConfig config;
  try {
    config = resolve_config(options);
  } catch (const ConfigError &e) {
    std::cerr << "error: " << name << ": " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    return body(config);
  } catch (const std::exception &e) {
    std::cerr << "error: " << name << ": " << e.what() << '\n';
    return kExitRun;
  }
}

/// The pool for (scheme, n): read from `dir` when a file exists there,
/// otherwise simulated in memory. A file that does not match the config is
/// an error rather than silently replaced.
FrameSet acquire_pool(const Pipeline &pipeline, std::size_t si, std::size_t ni,
                      const std::filesystem::path &dir) {
  const auto path = dir / pool_file_name(si, ni);
  if (!std::filesystem::exists(path))
    return pipeline.simulate_pool(si, ni);
  FrameSet pool = read_pool(path);
  const Provenance &p = pool.provenance;
  const SchemeConfig &want = pipeline.config.schemes[si];
  const bool matches = p.scheme.scheme == want.scheme && p.scheme.epsilon == want.epsilon &&
                       p.scheme.bias_order == want.bias_order &&
                       p.scheme.extinction_ratio == want.extinction_ratio &&
                       p.photons == pipeline.config.estimation_grid()[ni] &&
                       p.field_tesla == pipeline.config.sweep.b_true &&
                       p.seed == pipeline.pool_seed(si, ni) &&
                       p.detector_hash == pipeline.config.detector.hash() &&
                       pool.frames.size() == pipeline.config.estimation.pool_size;
  if (!matches)
    throw FrameIoError(path.string() + " was produced under a different config; rerun simulate");
  if (pool.pixel_count() != pipeline.meter.pixel_count())
    throw FrameIoError(path.string() + " has the wrong pixel count");
  return pool;
}

} // namespace

std::string_view tool_version() { return SATMETRO_VERSION; }

RunConfig resolve_config(const CommandOptions &options) {
  RunConfig config = load_config(options.config);
  if (options.seed)
    config.seed = *options.seed;
  if (options.threads)
    config.threads = *options.threads;
  return config;
}

Pipeline::Pipeline(const RunConfig &cfg)
    : config(cfg), response(cfg.detector), meter(cfg.physical, cfg.detector) {}

ForwardModel Pipeline::model(std::size_t scheme_index, double photons) const {
  return ForwardModel(meter, response, config.schemes.at(scheme_index), photons);
}

std::uint64_t Pipeline::pool_seed(std::size_t scheme_index, std::size_t n_index) const {
  return derive_seed(derive_seed(config.seed, scheme_index), n_index);
}

std::uint64_t Pipeline::bootstrap_seed(std::size_t scheme_index, std::size_t n_index) const {
  return derive_seed(derive_seed(mix64(config.seed), scheme_index), n_index);
}

FrameSet Pipeline::simulate_pool(std::size_t scheme_index, std::size_t n_index) const {
  const ForwardModel m = model(scheme_index, config.estimation_grid().at(n_index));
  return simulate_frames(m, config.sweep.b_true, config.estimation.pool_size,
                         pool_seed(scheme_index, n_index));
}

BootstrapOptions Pipeline::bootstrap_options(std::size_t scheme_index, std::size_t n_index) const {
  BootstrapOptions o;
  o.batch_size = config.estimation.batch_size;
  o.repeats = config.estimation.repeats;
  o.bracket = {0.0, config.estimation.bracket_factor * config.sweep.b_true};
  o.seed = bootstrap_seed(scheme_index, n_index);
  o.max_failure_fraction = config.estimation.max_failure_fraction;
  o.mle.prescan_points = config.estimation.prescan_points;
  o.mle.relative_tolerance = config.estimation.relative_tolerance;
  o.mle.threads = config.threads;
  return o;
}

void Pipeline::report_coverage() const {
  const CouplingStrength k = coupling_strength(config.sweep.b_true, config.physical);
  for (const auto &s : config.schemes) {
    const double missed = meter.uncovered_fraction(s, k);
    if (missed > 1e-3) {
      std::ostringstream msg;
      msg << scheme_label(s) << ": " << 100.0 * missed
          << "% of the post-selected spectrum falls outside the pixel range";
      warn(msg.str());
    }
  }
}

std::string csv_header_comment(const RunConfig &config, std::string_view command) {
  std::ostringstream os;
  os << "# satmetro " << tool_version() << '\n'
     << "# command: " << command << '\n'
     << "# config: " << config.name << '\n'
     << "# config_hash: " << hex64(config.hash()) << '\n';
  return os.str();
}

std::string pool_file_name(std::size_t scheme_index, std::size_t n_index) {
  return "pool_s" + std::to_string(scheme_index) + "_n" + std::to_string(n_index) + ".csv";
}

std::string fisher_sweep_csv(const RunConfig &config, const std::vector<FisherResult> &rows) {
  std::string out = csv_header_comment(config, "fisher-sweep");
  out += "scheme,n,B,epsilon,m,extinction_ratio,fi_total,crb_precision\n";
  for (const auto &r : rows) {
    out += row_prefix(r.scheme, r.photons, r.field_tesla) + "," + num(r.fi_total) + "," +
           num(r.crb_precision) + "\n";
  }
  return out;
}

std::string precision_csv(const RunConfig &config, const std::vector<PrecisionRow> &rows) {
  std::string out = csv_header_comment(config, "precision-sweep");
  out += "scheme,n,B,epsilon,m,extinction_ratio,batch_size,repeats,failed_repeats,delta_B,"
         "crb_precision,flagged\n";
  for (const auto &r : rows) {
    out += row_prefix(config.schemes[r.scheme_index], r.photons, config.sweep.b_true) + "," +
           std::to_string(r.report.batch_size) + "," +
           std::to_string(r.report.repeats) + "," + std::to_string(r.report.failed_repeats) + "," +
           num(r.report.delta_b) + "," + num(r.crb) + "," + (r.flagged ? "1" : "0") + "\n";
  }
  return out;
}

PrecisionRow precision_point(const Pipeline &pipeline, std::size_t si, std::size_t ni,
                             const FrameSet &pool) {
  const double n = pipeline.config.estimation_grid().at(ni);
  const ForwardModel model = pipeline.model(si, n);
  PrecisionRow row;
  row.scheme_index = si;
  row.photons = n;
  row.report = bootstrap_precision(pool, model, pipeline.bootstrap_options(si, ni));
  row.flagged = !row.report.ok;
  FisherOptions fo;
  fo.relative_step = pipeline.config.sweep.relative_step;
  fo.absolute_step_floor = pipeline.config.sweep.absolute_step_floor;
  fo.frames = static_cast<int>(pipeline.config.estimation.batch_size);
  fo.threads = pipeline.config.threads;
  try {
    row.crb = total_fisher(model, pipeline.config.sweep.b_true, fo).crb_precision;
  } catch (const FisherError &e) {
    std::cerr << "warning: CRB unavailable for " << scheme_label(pipeline.config.schemes[si])
              << " n=" << n << ": " << e.what() << '\n';
    row.crb = std::nan("");
  }
  return row;
}

int cmd_fisher_sweep(const CommandOptions &options) {
  return guarded(options, "fisher-sweep", [&](const RunConfig &config) {
    const Pipeline pipeline(config);
    pipeline.report_coverage();
    FisherOptions fo;
    fo.relative_step = config.sweep.relative_step;
    fo.absolute_step_floor = config.sweep.absolute_step_floor;
    fo.frames = config.sweep.frames;
    fo.threads = config.threads;
    const auto rows = fisher_sweep(config.schemes, config.sweep.n_grid, config.sweep.b_true,
                                   pipeline.meter, pipeline.response, fo);
    const auto path = options.out_dir / "fisher_sweep.csv";
    write_text_atomic(path, fisher_sweep_csv(config, rows));
    int failures = 0;
    for (const auto &r : rows)
      if (!r.ok()) {
        ++failures;
        std::cerr << "error: fisher-sweep: " << scheme_label(r.scheme) << " n=" << r.photons
                  << ": " << r.error << '\n';
      }
    std::cerr << "fisher-sweep: wrote " << rows.size() << " rows to " << path.string() << '\n';
    return failures ? kExitRun : kExitOk;
  });
}

int cmd_simulate(const CommandOptions &options) {
  return guarded(options, "simulate", [&](const RunConfig &config) {
    const Pipeline pipeline(config);
    pipeline.report_coverage();
    const auto dir = pools_dir(options);
    const auto &grid = config.estimation_grid();
    std::string index = csv_header_comment(config, "simulate");
    index += "scheme,n,B,epsilon,m,extinction_ratio,seed,frames,file\n";
    std::string spectra = csv_header_comment(config, "simulate");
    spectra += "scheme,n,B,epsilon,m,extinction_ratio,pixel_index,wavelength_nm,expected_photons,"
               "mean_electrons\n";
    for (std::size_t si = 0; si < config.schemes.size(); ++si) {
      for (std::size_t ni = 0; ni < grid.size(); ++ni) {
        const FrameSet pool = pipeline.simulate_pool(si, ni);
        const auto name = pool_file_name(si, ni);
        write_pool(dir / name, pool, csv_header_comment(config, "simulate"));
        const std::string lead = row_prefix(config.schemes[si], grid[ni], config.sweep.b_true);
        index += lead + "," +
                 std::to_string(pipeline.pool_seed(si, ni)) + "," +
                 std::to_string(pool.frames.size()) + "," + name + "\n";
        const auto means = pipeline.model(si, grid[ni]).pixel_means(config.sweep.b_true);
        for (std::size_t j = 0; j < means.size(); ++j) {
          double sum = 0.0;
          for (const auto &f : pool.frames)
            sum += f.electrons[j];
          spectra += lead + "," + std::to_string(j) + "," +
                     num(config.detector.dispersion.wavelength(static_cast<double>(j + 1))) +
                     "," + num(means[j]) + "," +
                     num(sum / static_cast<double>(pool.frames.size())) + "\n";
        }
        std::cerr << "simulate: " << scheme_label(config.schemes[si]) << " n=" << grid[ni]
                  << " -> " << (dir / name).string() << '\n';
      }
    }
    write_text_atomic(dir / "index.csv", index);
    write_text_atomic(options.out_dir / "spectra.csv", spectra);
    return kExitOk;
  });
}

int cmd_estimate(const CommandOptions &options) {
  return guarded(options, "estimate", [&](const RunConfig &config) {
    const Pipeline pipeline(config);
    pipeline.report_coverage();
    const auto dir = pools_dir(options);
    const auto &grid = config.estimation_grid();
    std::string out = csv_header_comment(config, "estimate");
    out += "scheme,n,B,epsilon,m,extinction_ratio,frames,B_hat,log_likelihood,status\n";
    for (std::size_t si = 0; si < config.schemes.size(); ++si) {
      for (std::size_t ni = 0; ni < grid.size(); ++ni) {
        const FrameSet pool = acquire_pool(pipeline, si, ni, dir);
        const ForwardModel model = pipeline.model(si, grid[ni]);
        const BootstrapOptions bo = pipeline.bootstrap_options(si, ni);
        std::vector<std::size_t> all(pool.frames.size());
        for (std::size_t f = 0; f < all.size(); ++f)
          all[f] = f;
        double estimate = std::nan(""), ll = std::nan("");
        std::string status = "ok";
        try {
          const MleResult r = maximize_likelihood(pool, all, bo.bracket, model, bo.mle);
          estimate = r.estimate;
          ll = r.log_likelihood;
        } catch (const NoInteriorMaximum &) {
          status = "no_interior_maximum";
        }
        out += row_prefix(config.schemes[si], grid[ni], config.sweep.b_true) + "," +
               std::to_string(pool.frames.size()) + "," + num(estimate) + "," + num(ll) + "," +
               status + "\n";
        std::cerr << "estimate: " << scheme_label(config.schemes[si]) << " n=" << grid[ni] << ": "
                  << status << '\n';
      }
    }
    write_text_atomic(options.out_dir / "estimates.csv", out);
    return kExitOk;
  });
}

int cmd_precision_sweep(const CommandOptions &options) {
  return guarded(options, "precision-sweep", [&](const RunConfig &config) {
    const Pipeline pipeline(config);
    pipeline.report_coverage();
    const auto dir = pools_dir(options);
    const auto &grid = config.estimation_grid();
    std::vector<PrecisionRow> rows;
    for (std::size_t si = 0; si < config.schemes.size(); ++si) {
      for (std::size_t ni = 0; ni < grid.size(); ++ni) {
        const FrameSet pool = acquire_pool(pipeline, si, ni, dir);
        rows.push_back(precision_point(pipeline, si, ni, pool));
        const auto &r = rows.back();
        std::cerr << "precision-sweep: " << scheme_label(config.schemes[si]) << " n=" << grid[ni]
                  << ": delta_B=" << r.report.delta_b << " failed=" << r.report.failed_repeats
                  << (r.flagged ? " (flagged)" : "") << '\n';
      }
    }
    write_text_atomic(options.out_dir / "precision.csv", precision_csv(config, rows));
    return kExitOk;
  });
}

} // namespace satmetro
