#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "satmetro/commands.hpp"
#include "satmetro/estimator.hpp"
#include "satmetro/fisher.hpp"
#include "satmetro/frame_io.hpp"
#include "satmetro/run_config.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace satmetro;

namespace {

std::vector<double> probs(const OutcomePMF &pmf) { return pmf.probs; }

/// Holds the detector table and meter so Python callers need not manage
/// the reference lifetimes of ForwardModel.
class Simulator {
public:
  Simulator(PhysicalConfig phys, DetectorModel det)
      : response_(det), meter_(phys, det) {}

  std::vector<double> pixel_means(const SchemeConfig &s, double photons, double field) const {
    return ForwardModel(meter_, response_, s, photons).pixel_means(field);
  }
  FisherResult fisher(const SchemeConfig &s, double photons, double field,
                      const FisherOptions &o) const {
    return total_fisher(ForwardModel(meter_, response_, s, photons), field, o);
  }
  FrameSet simulate(const SchemeConfig &s, double photons, double field, std::size_t count,
                    std::uint64_t seed) const {
    return simulate_frames(ForwardModel(meter_, response_, s, photons), field, count, seed);
  }
  double log_likelihood(const FrameSet &frames, const SchemeConfig &s, double photons,
                        double field) const {
    return satmetro::log_likelihood(frames, field, ForwardModel(meter_, response_, s, photons));
  }
  double mle(const FrameSet &frames, const SchemeConfig &s, double photons,
             std::pair<double, double> bracket) const {
    return mle_estimate(frames, bracket, ForwardModel(meter_, response_, s, photons));
  }
  PrecisionReport bootstrap(const FrameSet &pool, const SchemeConfig &s, double photons,
                            const BootstrapOptions &o) const {
    return bootstrap_precision(pool, ForwardModel(meter_, response_, s, photons), o);
  }
  std::vector<double> pixel_outcome(double mean) const { return response_.pixel_outcome(mean).probs; }
  double uncovered_fraction(const SchemeConfig &s, double field) const {
    return meter_.uncovered_fraction(s, coupling_strength(field, meter_.physical()));
  }

private:
  ResponseModel response_;
  SpectralMeter meter_;
};

} // namespace

PYBIND11_MODULE(_satmetro, m) {
  m.doc() = "Weak-measurement metrology with a saturating pixel detector";
  m.attr("__version__") = std::string(tool_version());

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NoInteriorMaximum>(m, "NoInteriorMaximum", PyExc_RuntimeError);
  py::register_exception<FrameIoError>(m, "FrameIoError", PyExc_IOError);

  py::class_<PhysicalConfig>(m, "PhysicalConfig")
      .def(py::init<>())
      .def_readwrite("central_wavelength_nm", &PhysicalConfig::central_wavelength_nm)
      .def_readwrite("fwhm_nm", &PhysicalConfig::fwhm_nm)
      .def_readwrite("verdet_rad_per_tesla_m", &PhysicalConfig::verdet_rad_per_tesla_m)
      .def_readwrite("crystal_length_m", &PhysicalConfig::crystal_length_m)
      .def("p0", &PhysicalConfig::p0)
      .def("delta_p", &PhysicalConfig::delta_p);

  py::class_<DetectorModel>(m, "DetectorModel")
      .def(py::init<>())
      .def_readwrite("pixel_count", &DetectorModel::pixel_count)
      .def_readwrite("dark_mean", &DetectorModel::dark_mean)
      .def_readwrite("dark_sigma", &DetectorModel::dark_sigma)
      .def_readwrite("quantum_efficiency", &DetectorModel::quantum_efficiency)
      .def_readwrite("saturation_threshold", &DetectorModel::saturation_threshold)
      .def_readwrite("photon_number_sigma_factor", &DetectorModel::photon_number_sigma_factor)
      .def("hash", &DetectorModel::hash)
      .def("validate", &DetectorModel::validate);

  py::enum_<Scheme>(m, "Scheme")
      .value("CM", Scheme::CM)
      .value("SWM", Scheme::SWM)
      .value("BWM", Scheme::BWM);

  py::class_<SchemeConfig>(m, "SchemeConfig")
      .def(py::init([](Scheme s, double eps, int order, double er) {
             SchemeConfig c{s, eps, order, er};
             c.validate();
             return c;
           }),
           "scheme"_a, "epsilon"_a = 0.0, "bias_order"_a = 0,
           "extinction_ratio"_a = std::numeric_limits<double>::infinity())
      .def_readwrite("scheme", &SchemeConfig::scheme)
      .def_readwrite("epsilon", &SchemeConfig::epsilon)
      .def_readwrite("bias_order", &SchemeConfig::bias_order)
      .def_readwrite("extinction_ratio", &SchemeConfig::extinction_ratio)
      .def("__repr__", &scheme_label);

  m.def("coupling_strength",
        [](double field, const PhysicalConfig &p) { return coupling_strength(field, p).k_nm; },
        "field_tesla"_a, "physical"_a = PhysicalConfig{}, "Coupling strength k in nm");
  m.def("bias_phase", &bias_phase, "epsilon"_a, "bias_order"_a, "p0"_a);
  m.def(
      "mean_shift",
      [](const SchemeConfig &s, double k_nm, const PhysicalConfig &p, double step, bool numeric) {
        const Spectrum spec = Spectrum::gaussian(p.p0(), p.delta_p(), step);
        return numeric ? mean_shift_numeric(s, {k_nm}, spec) : mean_shift_analytic(s, {k_nm}, spec);
      },
      "scheme"_a, "k_nm"_a, "physical"_a = PhysicalConfig{}, "step"_a = 1e-6,
      "numeric"_a = true, "Mean momentum shift (nm^-1) on a Gaussian meter");

  m.def("dark_noise_pmf", [](const DetectorModel &d) { return probs(dark_noise_pmf(d)); },
        "detector"_a = DetectorModel{});
  m.def("response_pmf",
        [](double n, const DetectorModel &d) { return probs(response_pmf(n, d)); }, "photons"_a,
        "detector"_a = DetectorModel{});
  m.def("saturated_response_pmf",
        [](double n, const DetectorModel &d) { return probs(saturated_response_pmf(n, d)); },
        "photons"_a, "detector"_a = DetectorModel{});
  m.def("total_variation", [](const std::vector<double> &a, const std::vector<double> &b) {
    return total_variation(OutcomePMF{a}, OutcomePMF{b});
  });

  py::class_<FisherOptions>(m, "FisherOptions")
      .def(py::init<>())
      .def_readwrite("relative_step", &FisherOptions::relative_step)
      .def_readwrite("absolute_step_floor", &FisherOptions::absolute_step_floor)
      .def_readwrite("frames", &FisherOptions::frames)
      .def_readwrite("threads", &FisherOptions::threads);

  py::class_<FisherResult>(m, "FisherResult")
      .def_readonly("fi_total", &FisherResult::fi_total)
      .def_readonly("fi_per_pixel", &FisherResult::fi_per_pixel)
      .def_readonly("crb_precision", &FisherResult::crb_precision)
      .def_readonly("frames", &FisherResult::frames)
      .def_readonly("photons", &FisherResult::photons)
      .def_readonly("field_tesla", &FisherResult::field_tesla);

  py::class_<FrameSet>(m, "FrameSet")
      .def_property_readonly("frames",
                             [](const FrameSet &s) {
                               std::vector<std::vector<int>> out;
                               for (const auto &f : s.frames)
                                 out.push_back(f.electrons);
                               return out;
                             })
      .def("__len__", [](const FrameSet &s) { return s.frames.size(); })
      .def_property_readonly("pixel_count", &FrameSet::pixel_count)
      .def_property_readonly("seed", [](const FrameSet &s) { return s.provenance.seed; })
      .def_property_readonly("photons", [](const FrameSet &s) { return s.provenance.photons; })
      .def_property_readonly("field_tesla",
                             [](const FrameSet &s) { return s.provenance.field_tesla; });
  m.def("write_pool", [](const std::filesystem::path &p, const FrameSet &s) { write_pool(p, s); });
  m.def("read_pool", &read_pool);

  py::class_<BootstrapOptions>(m, "BootstrapOptions")
      .def(py::init<>())
      .def_readwrite("batch_size", &BootstrapOptions::batch_size)
      .def_readwrite("repeats", &BootstrapOptions::repeats)
      .def_readwrite("bracket", &BootstrapOptions::bracket)
      .def_readwrite("seed", &BootstrapOptions::seed)
      .def_readwrite("max_failure_fraction", &BootstrapOptions::max_failure_fraction);

  py::class_<PrecisionReport>(m, "PrecisionReport")
      .def_readonly("estimates", &PrecisionReport::estimates)
      .def_readonly("delta_b", &PrecisionReport::delta_b)
      .def_readonly("batch_size", &PrecisionReport::batch_size)
      .def_readonly("repeats", &PrecisionReport::repeats)
      .def_readonly("failed_repeats", &PrecisionReport::failed_repeats)
      .def_readonly("failures", &PrecisionReport::failures)
      .def_readonly("ok", &PrecisionReport::ok);

  auto release = py::call_guard<py::gil_scoped_release>();
  py::class_<Simulator>(m, "Simulator")
      .def(py::init<PhysicalConfig, DetectorModel>(), "physical"_a = PhysicalConfig{},
           "detector"_a = DetectorModel{})
      .def("pixel_means", &Simulator::pixel_means, "scheme"_a, "photons"_a, "field_tesla"_a)
      .def("pixel_outcome", &Simulator::pixel_outcome, "mean_photons"_a)
      .def("uncovered_fraction", &Simulator::uncovered_fraction, "scheme"_a, "field_tesla"_a)
      .def("fisher", &Simulator::fisher, "scheme"_a, "photons"_a, "field_tesla"_a,
           "options"_a = FisherOptions{}, release)
      .def("simulate", &Simulator::simulate, "scheme"_a, "photons"_a, "field_tesla"_a, "count"_a,
           "seed"_a, release)
      .def("log_likelihood", &Simulator::log_likelihood, "frames"_a, "scheme"_a, "photons"_a,
           "field_tesla"_a, release)
      .def("mle", &Simulator::mle, "frames"_a, "scheme"_a, "photons"_a, "bracket"_a, release)
      .def("bootstrap", &Simulator::bootstrap, "pool"_a, "scheme"_a, "photons"_a, "options"_a,
           release);

  m.def("parse_config", [](const std::string &text) { return parse_config(text).to_json(); },
        "Validate a JSON run configuration and return its canonical form");

  auto command = [](int (*fn)(const CommandOptions &)) {
    return [fn](const std::filesystem::path &config, const std::filesystem::path &out,
                std::optional<std::uint64_t> seed, std::optional<unsigned> threads) {
      CommandOptions o;
      o.config = config;
      o.out_dir = out;
      o.seed = seed;
      o.threads = threads;
      py::gil_scoped_release nogil;
      return fn(o);
    };
  };
  for (auto [name, fn] : {std::pair{"fisher_sweep", &cmd_fisher_sweep},
                          std::pair{"simulate_pools", &cmd_simulate},
                          std::pair{"estimate", &cmd_estimate},
                          std::pair{"precision_sweep", &cmd_precision_sweep}})
    m.def(name, command(fn), "config"_a, "out"_a = ".", "seed"_a = py::none(),
          "threads"_a = py::none());
}
