#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hsbnn/bnn_model.hpp"
#include "hsbnn/detection_eval.hpp"
#include "hsbnn/error.hpp"
#include "hsbnn/fpca.hpp"
#include "hsbnn/hmc.hpp"
#include "hsbnn/pipeline.hpp"
#include "hsbnn/posterior_uq.hpp"
#include "hsbnn/spectra_sim.hpp"
#include "hsbnn/vi.hpp"

namespace py = pybind11;
using namespace hsbnn;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

std::vector<double> to_vec(const Eigen::Ref<const Eigen::VectorXd>& v) { return {v.data(), v.data() + v.size()}; }

// Python callables may be invoked from sampler worker threads.
LogDensity wrap_density(py::function f) {
  auto holder = std::make_shared<py::function>(std::move(f));
  return [holder](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    py::gil_scoped_acquire gil;
    auto out = (*holder)(theta).cast<std::pair<double, Eigen::VectorXd>>();
    grad = std::move(out.second);
    return out.first;
  };
}

bnn::LabeledBatch make_batch(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  bnn::LabeledBatch b{x, y};
  b.validate(static_cast<int>(x.cols()));
  return b;
}

hmc::HmcConfig hmc_config(int chains, int iterations, int warmup, int leapfrog_steps,
                          std::optional<double> step_size, std::uint64_t seed) {
  hmc::HmcConfig c;
  c.chains = chains;
  c.iterations = iterations;
  c.warmup = warmup;
  c.leapfrog_steps = leapfrog_steps;
  c.step_size = step_size;
  c.seed = seed;
  return c;
}

py::dict samples_dict(const PosteriorSamples& s) {
  py::dict d;
  d["method"] = std::string(to_string(s.method));
  d["draws"] = s.draws;
  d["chain_id"] = s.chain_id;
  d["accept_rate"] = s.accept_rate;
  d["step_size"] = s.step_size;
  d["divergences"] = s.divergences;
  return d;
}

PosteriorSamples samples_from(const Eigen::MatrixXd& draws, const std::vector<int>& layer_sizes) {
  PosteriorSamples s;
  s.draws = draws;
  s.chain_id.assign(static_cast<std::size_t>(draws.rows()), 0);
  s.layer_sizes = layer_sizes;
  return s;
}

py::dict roc_dict(const eval::RocCurve& r) {
  py::dict d;
  d["far"] = r.far;
  d["pd"] = r.pd;
  d["thresholds"] = r.thresholds;
  d["auc"] = r.auc;
  d["positives"] = r.positives;
  d["negatives"] = r.negatives;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sub-pixel target detection with Bayesian neural networks";
  m.attr("__version__") = std::string(pipeline::version());

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  // scenes
  m.def(
      "simulate_scene",
      [](const std::string& name, int height, int width, int n_discs, double noise_sd, std::uint64_t seed) {
        const auto dash = name.find('-');
        if (dash == std::string::npos) throw ConfigError("scene name must look like MLS-1200: " + name);
        sim::SceneConfig c;
        c.atmosphere = sim::parse_atmosphere(name.substr(0, dash));
        c.time = sim::parse_time(name.substr(dash + 1));
        c.height = height;
        c.width = width;
        c.n_discs = n_discs;
        c.noise_sd = noise_sd;
        c.seed = seed;
        const auto grid = sim::WavelengthGrid::uniform();
        const auto scene = sim::generate_scene(c, grid, sim::default_endmembers(grid));
        const auto bands = static_cast<py::ssize_t>(scene.bands());
        py::array_t<float> spectra({static_cast<py::ssize_t>(height), static_cast<py::ssize_t>(width), bands});
        std::copy(scene.spectra.begin(), scene.spectra.end(), spectra.mutable_data());
        py::array_t<float> abundance({static_cast<py::ssize_t>(height), static_cast<py::ssize_t>(width)});
        std::copy(scene.abundance.begin(), scene.abundance.end(), abundance.mutable_data());
        py::dict d;
        d["spectra"] = spectra;
        d["abundance"] = abundance;
        d["wavelengths"] = scene.grid.lambda;
        d["name"] = scene.config.name();
        return d;
      },
      py::arg("name") = "MLS-1200", py::arg("height") = 64, py::arg("width") = 64, py::arg("n_discs") = 20,
      py::arg("noise_sd") = 0.0003, py::arg("seed") = 0);

  // fPCA
  py::class_<fpca::FpcaBasis>(m, "FpcaBasis")
      .def_readonly("mean", &fpca::FpcaBasis::mean)
      .def_readonly("eigenfunctions", &fpca::FpcaBasis::eigenfunctions)
      .def_readonly("eigenvalues", &fpca::FpcaBasis::eigenvalues)
      .def_readonly("quad_weights", &fpca::FpcaBasis::quad_weights)
      .def_readonly("total_variance", &fpca::FpcaBasis::total_variance)
      .def("project", &fpca::project_rows, py::arg("spectra"), py::arg("k"))
      .def("reconstruct", &fpca::reconstruct, py::arg("scores"))
      .def("explained_variance", &fpca::explained_variance, py::arg("k"));
  m.def(
      "fit_fpca",
      [](const Eigen::MatrixXd& spectra, const std::vector<double>& wavelengths) {
        sim::WavelengthGrid g{wavelengths};
        g.validate();
        return fpca::fit_fpca(spectra, g);
      },
      py::arg("spectra"), py::arg("wavelengths"));

  // network
  py::class_<bnn::Model>(m, "Model")
      .def(py::init([](const std::vector<int>& layers, double prior_sd) {
             return bnn::Model(bnn::Architecture{layers}, bnn::PriorSpec{0.0, prior_sd});
           }),
           py::arg("layer_sizes") = std::vector<int>{25, 10, 10, 10, 1}, py::arg("prior_sd") = 10.0)
      .def_property_readonly("num_params", &bnn::Model::num_params)
      .def_property_readonly("layer_sizes", [](const bnn::Model& mdl) { return mdl.architecture().layer_sizes; })
      .def("forward", &bnn::Model::forward_batch, py::arg("theta"), py::arg("x"))
      .def(
          "log_posterior",
          [](const bnn::Model& mdl, const Eigen::VectorXd& theta, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
            Eigen::VectorXd grad;
            const double v = mdl.log_posterior_and_grad(theta, make_batch(x, y), grad);
            return std::make_pair(v, grad);
          },
          py::arg("theta"), py::arg("x"), py::arg("y"));

  // HMC
  m.def(
      "hmc_sample",
      [](py::function log_density, Eigen::Index dim, int chains, int iterations, int warmup, int leapfrog_steps,
         std::optional<double> step_size, std::uint64_t seed) {
        const auto f = wrap_density(std::move(log_density));
        const auto c = hmc_config(chains, iterations, warmup, leapfrog_steps, step_size, seed);
        PosteriorSamples s;
        {
          py::gil_scoped_release release;
          s = hmc::sample(f, dim, c);
        }
        return samples_dict(s);
      },
      py::arg("log_density"), py::arg("dim"), py::arg("chains") = 2, py::arg("iterations") = 1000,
      py::arg("warmup") = 500, py::arg("leapfrog_steps") = 16, py::arg("step_size") = py::none(),
      py::arg("seed") = 0);
  m.def(
      "hmc_sample_bnn",
      [](const bnn::Model& mdl, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int chains, int iterations,
         int warmup, int leapfrog_steps, std::optional<double> step_size, std::uint64_t seed) {
        const auto f = bnn::make_log_posterior(mdl, make_batch(x, y));
        const auto c = hmc_config(chains, iterations, warmup, leapfrog_steps, step_size, seed);
        PosteriorSamples s;
        {
          py::gil_scoped_release release;
          s = hmc::sample(f, static_cast<Eigen::Index>(mdl.num_params()), c);
        }
        return samples_dict(s);
      },
      py::arg("model"), py::arg("x"), py::arg("y"), py::arg("chains") = 2, py::arg("iterations") = 2500,
      py::arg("warmup") = 500, py::arg("leapfrog_steps") = 32, py::arg("step_size") = py::none(),
      py::arg("seed") = 0);
  m.def("split_rhat", &hmc::split_rhat, py::arg("chains"));

  // VI
  m.def(
      "fit_vi_bnn",
      [](const bnn::Model& mdl, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int epochs,
         double learning_rate, int mc_samples, std::uint64_t seed) {
        vi::ViConfig c;
        c.epochs = epochs;
        c.learning_rate = learning_rate;
        c.mc_samples_per_step = mc_samples;
        c.seed = seed;
        const auto batch = make_batch(x, y);
        vi::ViFit fit;
        {
          py::gil_scoped_release release;
          fit = vi::fit_vi(mdl, batch, c);
        }
        py::dict d;
        d["mu"] = fit.params.mu;
        d["sd"] = fit.params.sd();
        d["rho"] = fit.params.rho;
        d["train_loss"] = fit.train_loss;
        d["validation_loss"] = fit.validation_loss;
        return d;
      },
      py::arg("model"), py::arg("x"), py::arg("y"), py::arg("epochs") = 450, py::arg("learning_rate") = 0.01,
      py::arg("mc_samples") = 1, py::arg("seed") = 0);
  m.def(
      "draw_from_vi",
      [](const Eigen::VectorXd& mu, const Eigen::VectorXd& rho, Eigen::Index draws, std::uint64_t seed) {
        if (mu.size() != rho.size()) throw ShapeError("mu and rho differ in length");
        return vi::draw_from_vi(vi::VariationalParams{mu, rho}, draws, seed).draws;
      },
      py::arg("mu"), py::arg("rho"), py::arg("draws"), py::arg("seed") = 0);

  // predictive UQ
  m.def(
      "predictive_matrix",
      [](const bnn::Model& mdl, const Eigen::MatrixXd& draws, const Eigen::MatrixXd& x) {
        return uq::predictive_matrix(samples_from(draws, mdl.architecture().layer_sizes), mdl, x);
      },
      py::arg("model"), py::arg("draws"), py::arg("x"));
  m.def(
      "credible_interval",
      [](const std::vector<double>& d, double alpha) { return uq::credible_interval(d, alpha); },
      py::arg("draws"), py::arg("alpha"));
  m.def(
      "summarize",
      [](const std::vector<double>& d, double lower, double upper, double alpha) {
        uq::HcConfig c{lower, upper, alpha};
        c.validate();
        const auto s = uq::summarize(d, c);
        py::dict out;
        out["mean"] = s.mean;
        out["q_lo"] = s.q_lo;
        out["q_hi"] = s.q_hi;
        out["p_below"] = s.p_below;
        out["p_above"] = s.p_above;
        out["hc"] = s.hc;
        out["lc"] = s.lc;
        return out;
      },
      py::arg("draws"), py::arg("lower") = 0.2, py::arg("upper") = 0.8, py::arg("alpha") = 0.2);

  // detection metrics
  m.def(
      "roc_curve",
      [](const std::vector<double>& scores, const std::vector<bool>& positive) {
        return roc_dict(eval::roc_curve(scores, positive));
      },
      py::arg("scores"), py::arg("positive"));
  m.def(
      "pd_at_far",
      [](const std::vector<double>& scores, const std::vector<double>& abundance, double far_level,
         std::optional<std::vector<double>> edges, bool cumulative) {
        const auto r = eval::pd_at_far(scores, abundance, far_level, edges.value_or(eval::default_bin_edges()),
                                       cumulative ? eval::BinMode::Cumulative : eval::BinMode::Binned);
        py::dict d;
        d["threshold"] = r.threshold;
        d["realized_far"] = r.realized_far;
        d["bin_edges"] = r.bin_edges;
        d["pd"] = r.pd;
        d["counts"] = r.counts;
        return d;
      },
      py::arg("scores"), py::arg("abundance"), py::arg("far_level") = 0.05, py::arg("bin_edges") = py::none(),
      py::arg("cumulative") = false);

  // pipeline
  m.def(
      "run_pipeline",
      [](const std::string& config_text, const std::filesystem::path& out, std::optional<std::uint64_t> seed,
         std::optional<std::string> stage) {
        auto c = pipeline::parse_config(config_text);
        c.out_dir = out;
        if (seed) c.seed = *seed;
        c.validate();
        pipeline::RunManifest mf;
        {
          py::gil_scoped_release release;
          mf = stage ? pipeline::run_stage(c, *stage) : pipeline::run_pipeline(c);
        }
        return to_py(mf.to_json());
      },
      py::arg("config_text") = "", py::arg("out") = "hsbnn_out", py::arg("seed") = py::none(),
      py::arg("stage") = py::none());
  m.def(
      "parse_config", [](const std::string& text) { return to_py(pipeline::parse_config(text).to_json()); },
      py::arg("text"));
}
