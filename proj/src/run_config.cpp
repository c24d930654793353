#include "satmetro/run_config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "satmetro/hashing.hpp"

namespace satmetro {
namespace {

using json = nlohmann::json;

void check_keys(const json &obj, std::string_view where, std::set<std::string> allowed) {
  if (!obj.is_object())
    throw ConfigError(std::string(where) + ": expected an object");
  for (const auto &item : obj.items())
    if (!allowed.contains(item.key()))
      throw ConfigError(std::string(where) + ": unknown key '" + item.key() + "'");
}

template <class T> void read(const json &obj, const char *key, T &out, std::string_view where) {
  if (!obj.contains(key))
    return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception &) {
    throw ConfigError(std::string(where) + "." + key + ": wrong type");
  }
}

double read_extinction_ratio(const json &obj) {
  if (!obj.contains("extinction_ratio"))
    return std::numeric_limits<double>::infinity();
  const json &v = obj.at("extinction_ratio");
  if (v.is_null() || (v.is_string() && v.get<std::string>() == "inf"))
    return std::numeric_limits<double>::infinity();
  if (!v.is_number())
    throw ConfigError("schemes.extinction_ratio: expected a number, \"inf\" or null");
  return v.get<double>();
}

std::vector<double> read_grid(const json &v, std::string_view where) {
  if (v.is_array()) {
    std::vector<double> out;
    for (const auto &x : v) {
      if (!x.is_number())
        throw ConfigError(std::string(where) + ": grid entries must be numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
  if (v.is_object()) {
    check_keys(v, where, {"log_start", "log_stop", "points"});
    double start = 1e5, stop = 1e11;
    int points = 24;
    read(v, "log_start", start, where);
    read(v, "log_stop", stop, where);
    read(v, "points", points, where);
    try {
      return log_grid(start, stop, points);
    } catch (const std::invalid_argument &e) {
      throw ConfigError(std::string(where) + ": " + e.what());
    }
  }
  throw ConfigError(std::string(where) + ": expected a list or {log_start, log_stop, points}");
}

void check_grid(const std::vector<double> &grid, std::string_view where) {
  if (grid.empty())
    throw ConfigError(std::string(where) + ": grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0) || !std::isfinite(grid[i]))
      throw ConfigError(std::string(where) + ": photon numbers must be positive and finite");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw ConfigError(std::string(where) + ": grid must be strictly ascending");
  }
}

json extinction_json(double er) { return std::isinf(er) ? json("inf") : json(er); }

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

} // namespace

std::vector<double> log_grid(double start, double stop, int points) {
  if (!(start > 0) || !(stop > start) || points < 2)
    throw std::invalid_argument("log grid needs 0 < start < stop and at least two points");
  std::vector<double> out(static_cast<std::size_t>(points));
  const double a = std::log10(start), b = std::log10(stop);
  for (int i = 0; i < points; ++i)
    out[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / (points - 1));
  out.front() = start;
  out.back() = stop;
  return out;
}

void RunConfig::validate() const {
  try {
    physical.validate();
    detector.validate();
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
  if (schemes.empty())
    throw ConfigError("schemes: at least one scheme is required");
  for (const auto &s : schemes) {
    try {
      s.validate();
    } catch (const std::invalid_argument &e) {
      throw ConfigError(std::string("schemes: ") + e.what());
    }
  }
  if (!std::isfinite(sweep.b_true))
    throw ConfigError("sweep.b_true must be finite");
  check_grid(sweep.n_grid, "sweep.n_grid");
  if (sweep.frames < 1)
    throw ConfigError("sweep.frames must be positive");
  if (!(sweep.relative_step > 0) || !(sweep.absolute_step_floor > 0))
    throw ConfigError("sweep: finite-difference steps must be positive");
  check_grid(estimation_grid(), "estimation.n_grid");
  const auto &e = estimation;
  if (e.pool_size == 0 || e.batch_size == 0 || e.batch_size > e.pool_size)
    throw ConfigError("estimation: need 0 < batch_size <= pool_size");
  if (e.repeats == 0)
    throw ConfigError("estimation.repeats must be positive");
  if (!(e.bracket_factor > 1))
    throw ConfigError("estimation.bracket_factor must exceed 1");
  if (sweep.b_true <= 0)
    throw ConfigError("sweep.b_true must be positive");
  if (e.prescan_points < 3)
    throw ConfigError("estimation.prescan_points must be at least 3");
  if (!(e.relative_tolerance > 0))
    throw ConfigError("estimation.relative_tolerance must be positive");
  if (!(e.max_failure_fraction >= 0 && e.max_failure_fraction <= 1))
    throw ConfigError("estimation.max_failure_fraction must lie in [0, 1]");
}

const std::vector<double> &RunConfig::estimation_grid() const {
  return estimation.n_grid.empty() ? sweep.n_grid : estimation.n_grid;
}

std::string RunConfig::to_json() const {
  json j;
  j["name"] = name;
  j["seed"] = seed;
  j["threads"] = threads;
  j["physical"] = {{"central_wavelength_nm", physical.central_wavelength_nm},
                   {"fwhm_nm", physical.fwhm_nm},
                   {"verdet_rad_per_tesla_m", physical.verdet_rad_per_tesla_m},
                   {"crystal_length_m", physical.crystal_length_m}};
  j["detector"] = {{"pixel_count", detector.pixel_count},
                   {"dispersion_slope_nm", detector.dispersion.slope_nm},
                   {"dispersion_offset_nm", detector.dispersion.offset_nm},
                   {"dark_mean", detector.dark_mean},
                   {"dark_sigma", detector.dark_sigma},
                   {"dark_support", {detector.dark_support.lo, detector.dark_support.hi}},
                   {"quantum_efficiency", detector.quantum_efficiency},
                   {"gain_sigma_slope", detector.gain_sigma_law.slope},
                   {"gain_sigma_intercept", detector.gain_sigma_law.intercept},
                   {"saturation_threshold", detector.saturation_threshold},
                   {"photon_number_sigma_factor", detector.photon_number_sigma_factor}};
  j["schemes"] = json::array();
  for (const auto &s : schemes)
    j["schemes"].push_back({{"scheme", std::string(satmetro::to_string(s.scheme))},
                            {"epsilon", s.epsilon},
                            {"bias_order", s.bias_order},
                            {"extinction_ratio", extinction_json(s.extinction_ratio)}});
  j["sweep"] = {{"b_true", sweep.b_true},
                {"n_grid", sweep.n_grid},
                {"frames", sweep.frames},
                {"relative_step", sweep.relative_step},
                {"absolute_step_floor", sweep.absolute_step_floor}};
  j["estimation"] = {{"n_grid", estimation.n_grid},
                     {"pool_size", estimation.pool_size},
                     {"batch_size", estimation.batch_size},
                     {"repeats", estimation.repeats},
                     {"bracket_factor", estimation.bracket_factor},
                     {"prescan_points", estimation.prescan_points},
                     {"relative_tolerance", estimation.relative_tolerance},
                     {"max_failure_fraction", estimation.max_failure_fraction}};
  return j.dump(2);
}

std::uint64_t RunConfig::hash() const {
  RunConfig copy = *this;
  copy.threads = 0;
  Fnv1a h;
  h.update(copy.to_json());
  return h.digest();
}

RunConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, "config",
             {"name", "seed", "threads", "physical", "detector", "schemes", "sweep", "estimation"});
  RunConfig cfg;
  read(root, "name", cfg.name, "config");
  if (!root.contains("seed") || !root.at("seed").is_number_unsigned())
    throw ConfigError("config.seed: a non-negative integer seed is required");
  cfg.seed = root.at("seed").get<std::uint64_t>();
  read(root, "threads", cfg.threads, "config");

  if (root.contains("physical")) {
    const json &p = root.at("physical");
    check_keys(p, "physical",
               {"central_wavelength_nm", "fwhm_nm", "verdet_rad_per_tesla_m", "crystal_length_m"});
    read(p, "central_wavelength_nm", cfg.physical.central_wavelength_nm, "physical");
    read(p, "fwhm_nm", cfg.physical.fwhm_nm, "physical");
    read(p, "verdet_rad_per_tesla_m", cfg.physical.verdet_rad_per_tesla_m, "physical");
    read(p, "crystal_length_m", cfg.physical.crystal_length_m, "physical");
  }

  if (root.contains("detector")) {
    const json &d = root.at("detector");
    check_keys(d, "detector",
               {"pixel_count", "dispersion_slope_nm", "dispersion_offset_nm", "dark_mean",
                "dark_sigma", "dark_support", "quantum_efficiency", "gain_sigma_slope",
                "gain_sigma_intercept", "saturation_threshold", "photon_number_sigma_factor"});
    auto &det = cfg.detector;
    read(d, "pixel_count", det.pixel_count, "detector");
    read(d, "dispersion_slope_nm", det.dispersion.slope_nm, "detector");
    read(d, "dispersion_offset_nm", det.dispersion.offset_nm, "detector");
    read(d, "dark_mean", det.dark_mean, "detector");
    read(d, "dark_sigma", det.dark_sigma, "detector");
    if (d.contains("dark_support")) {
      const json &s = d.at("dark_support");
      if (!s.is_array() || s.size() != 2 || !s[0].is_number_integer() || !s[1].is_number_integer())
        throw ConfigError("detector.dark_support: expected [lo, hi]");
      det.dark_support = {s[0].get<int>(), s[1].get<int>()};
    }
    read(d, "quantum_efficiency", det.quantum_efficiency, "detector");
    read(d, "gain_sigma_slope", det.gain_sigma_law.slope, "detector");
    read(d, "gain_sigma_intercept", det.gain_sigma_law.intercept, "detector");
    read(d, "saturation_threshold", det.saturation_threshold, "detector");
    read(d, "photon_number_sigma_factor", det.photon_number_sigma_factor, "detector");
  }

  if (!root.contains("schemes") || !root.at("schemes").is_array())
    throw ConfigError("schemes: expected a list");
  for (const auto &s : root.at("schemes")) {
    check_keys(s, "schemes", {"scheme", "epsilon", "bias_order", "extinction_ratio"});
    SchemeConfig sc;
    std::string name;
    read(s, "scheme", name, "schemes");
    try {
      sc.scheme = scheme_from_string(name);
    } catch (const std::invalid_argument &e) {
      throw ConfigError(std::string("schemes.scheme: ") + e.what());
    }
    read(s, "epsilon", sc.epsilon, "schemes");
    read(s, "bias_order", sc.bias_order, "schemes");
    sc.extinction_ratio = read_extinction_ratio(s);
    cfg.schemes.push_back(sc);
  }

  if (!root.contains("sweep"))
    throw ConfigError("sweep: section is required");
  const json &sw = root.at("sweep");
  check_keys(sw, "sweep", {"b_true", "n_grid", "frames", "relative_step", "absolute_step_floor"});
  if (!sw.contains("b_true"))
    throw ConfigError("sweep.b_true is required");
  read(sw, "b_true", cfg.sweep.b_true, "sweep");
  cfg.sweep.n_grid = sw.contains("n_grid") ? read_grid(sw.at("n_grid"), "sweep.n_grid")
                                           : log_grid(1e5, 1e11, 24);
  read(sw, "frames", cfg.sweep.frames, "sweep");
  read(sw, "relative_step", cfg.sweep.relative_step, "sweep");
  read(sw, "absolute_step_floor", cfg.sweep.absolute_step_floor, "sweep");

  if (root.contains("estimation")) {
    const json &e = root.at("estimation");
    check_keys(e, "estimation",
               {"n_grid", "pool_size", "batch_size", "repeats", "bracket_factor", "prescan_points",
                "relative_tolerance", "max_failure_fraction"});
    auto &est = cfg.estimation;
    if (e.contains("n_grid"))
      est.n_grid = read_grid(e.at("n_grid"), "estimation.n_grid");
    read(e, "pool_size", est.pool_size, "estimation");
    read(e, "batch_size", est.batch_size, "estimation");
    read(e, "repeats", est.repeats, "estimation");
    read(e, "bracket_factor", est.bracket_factor, "estimation");
    read(e, "prescan_points", est.prescan_points, "estimation");
    read(e, "relative_tolerance", est.relative_tolerance, "estimation");
    read(e, "max_failure_fraction", est.max_failure_fraction, "estimation");
  }

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string scheme_label(const SchemeConfig &scheme) {
  std::string out(to_string(scheme.scheme));
  if (scheme.scheme == Scheme::CM)
    return out;
  out += "(eps=" + format_number(scheme.epsilon);
  if (scheme.scheme == Scheme::BWM)
    out += ",m=" + std::to_string(scheme.bias_order);
  out += ",ER=" + (std::isinf(scheme.extinction_ratio) ? std::string("inf")
                                                         : format_number(scheme.extinction_ratio));
  return out + ")";
}

} // namespace satmetro
