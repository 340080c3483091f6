// Thin Python bindings. Configs cross the boundary as JSON text so the
// C++ validation and error messages apply unchanged.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "uwer/cli.hpp"

namespace py = pybind11;
using namespace uwer;

namespace {

py::array_t<float> to_array(std::span<const float> v, std::vector<py::ssize_t> shape) {
  py::array_t<float> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::dict report_dict(const train::RunReport& r, const channel::CsiDataset& ds) {
  const train::RunSummary s = train::summarize(r, ds);
  py::list acc;
  for (int k = 0; k < r.accuracy.size(); ++k) {
    py::list row;
    for (int e = 0; e < r.accuracy.size(); ++e) row.append(r.accuracy.at(k, e));
    acc.append(row);
  }
  py::dict d;
  d["seed"] = r.seed;
  d["updates"] = r.updates;
  d["skipped_updates"] = r.skipped_updates;
  d["accuracy"] = acc;
  d["env_checksums"] = r.env_checksums;
  d["nmse_db_pooled"] = s.nmse_db_pooled;
  d["nmse_db_median"] = s.nmse_db_median;
  d["persistence_nmse_db_pooled"] = metrics::nmse_db(s.persistence_nmse_pooled).db;
  d["forgetting_standard"] = s.forgetting_standard;
  d["forgetting_as_written"] = s.forgetting_as_written;
  d["pearson_r"] = s.pearson_r ? py::object(py::float_(*s.pearson_r)) : py::object(py::none());
  return d;
}

}  // namespace

PYBIND11_MODULE(_uwer, m) {
  m.doc() = "UW-ER continual CSI prediction core";
  m.attr("__version__") = cli::kVersion;

  py::register_exception<channel::ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<math::Rng>(m, "Rng")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def("next_u64", &math::Rng::next_u64)
      .def("uniform", &math::Rng::uniform)
      .def("normal", &math::Rng::normal)
      .def_static("derive_seed", &math::Rng::derive_seed, py::arg("seed"), py::arg("name"));

  m.def("bessel_j0", &math::bessel_j0, py::arg("x"));
  m.def("jakes_rho", &channel::jakes_rho, py::arg("f_doppler_hz"), py::arg("dt_s"));

  m.def(
      "uw_loss",
      [](const std::vector<double>& mu, const std::vector<double>& sigma2, const std::vector<double>& y, double beta) {
        const auto r = train::uw_loss(mu, sigma2, y, beta);
        return py::make_tuple(r.loss, r.d_mu);
      },
      py::arg("mu"), py::arg("sigma2"), py::arg("y"), py::arg("beta") = 1.0);

  py::class_<channel::CsiDataset>(m, "Dataset")
      .def_property_readonly("window_count", &channel::CsiDataset::window_count)
      .def_property_readonly("lookback", &channel::CsiDataset::lookback)
      .def_property_readonly("frame_size", &channel::CsiDataset::frame_size)
      .def_property_readonly("env_count", &channel::CsiDataset::env_count)
      .def_property_readonly("norm_scale", &channel::CsiDataset::norm_scale)
      .def("x",
           [](const channel::CsiDataset& d, std::size_t w) {
             return to_array(d.x(w), {static_cast<py::ssize_t>(d.lookback()), static_cast<py::ssize_t>(d.frame_size())});
           })
      .def("y", [](const channel::CsiDataset& d,
                   std::size_t w) { return to_array(d.y(w), {static_cast<py::ssize_t>(d.frame_size())}); })
      .def("env_ids", [](const channel::CsiDataset& d) {
        const auto ids = d.env_ids();
        return std::vector<int>(ids.begin(), ids.end());
      });

  m.def(
      "generate_dataset",
      [](const std::string& config_json) {
        const auto cfg = config::channel_from_json(config::Json::parse(config_json));
        cfg.validate();
        py::gil_scoped_release release;
        return channel::generate_dataset(cfg);
      },
      py::arg("config_json"));
  m.def("load_dataset", [](const std::string& path) { return cli::load_dataset(path); }, py::arg("path"));

  m.def(
      "run_stream",
      [](const channel::CsiDataset& ds, const std::string& config_json, std::uint64_t seed) {
        const auto cfg = config::train_from_json(config::Json::parse(config_json));
        cfg.validate();
        train::RunReport r;
        {
          py::gil_scoped_release release;
          r = train::run_stream(ds, cfg, seed);
        }
        return report_dict(r, ds);
      },
      py::arg("dataset"), py::arg("config_json"), py::arg("seed") = 0);

  m.def(
      "default_channel_config", [] { return config::to_json(channel::ChannelConfig{}).dump(); });
  m.def(
      "default_train_config", [] { return config::to_json(train::TrainConfig{}).dump(); });

  m.def(
      "cli_main",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "uwer");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        py::gil_scoped_release release;
        return cli::main(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"));
}
