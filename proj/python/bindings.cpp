#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "taegcn/checkpoint.hpp"
#include "taegcn/cli.hpp"
#include "taegcn/config.hpp"
#include "taegcn/data.hpp"
#include "taegcn/error.hpp"
#include "taegcn/gradcheck.hpp"
#include "taegcn/model.hpp"
#include "taegcn/synth.hpp"
#include "taegcn/tmsa.hpp"
#include "taegcn/train.hpp"

namespace py = pybind11;
using namespace taegcn;
using ad::Tensor;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  ad::Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::from(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::dict metrics_dict(const train::MetricsReport& r) {
  return py::module_::import("json").attr("loads")(config::to_json(r).dump());
}

data::SeriesDataset dataset_from(const Array& values, double missing_marker) {
  if (values.ndim() != 3) throw DimensionError("values must be [N, T, C]");
  return data::SeriesDataset::from_values(to_tensor(values), {}, {}, missing_marker);
}

class PyForecaster {
 public:
  explicit PyForecaster(model::Forecaster f) : f_(std::move(f)) {}

  static PyForecaster load(const std::filesystem::path& path) { return PyForecaster(checkpoint::load(path)); }

  void save(const std::filesystem::path& path) const { checkpoint::save(path, f_); }

  /// x: [B, N, T_in, C] normalized inputs -> [B, N, H] original units.
  Array predict(const Array& x) const {
    ad::NoGradGuard guard;
    return to_array(f_.predict(to_tensor(x)));
  }

  /// Per layer, the period adjacencies [M, B, N, N].
  std::vector<Array> adjacency(const Array& x) const {
    ad::NoGradGuard guard;
    const auto out = f_.model.forward_detailed(to_tensor(x), f_.static_features);
    std::vector<Array> layers;
    for (const auto& seq : out.graphs) {
      std::vector<Tensor> expanded;
      for (const auto& p : seq.periods) expanded.push_back(ad::reshape(p, {1, p.shape()[0], p.shape()[1], p.shape()[2]}));
      layers.push_back(to_array(ad::concat(expanded, 0)));
    }
    return layers;
  }

  /// Normalized input windows of `values` [N, T, C] and their raw targets.
  std::pair<Array, Array> windows(const Array& values, double missing_marker) const {
    const auto& cfg = f_.model.config();
    const data::WindowSet w(dataset_from(values, missing_marker), f_.norm, cfg.input_length, cfg.horizon,
                            cfg.target_channel);
    std::vector<std::size_t> idx(w.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return {to_array(w.inputs(idx)), to_array(w.targets(idx))};
  }

  py::dict evaluate(const Array& values, double missing_marker, std::size_t threads) const {
    const auto& cfg = f_.model.config();
    const data::WindowSet w(dataset_from(values, missing_marker), f_.norm, cfg.input_length, cfg.horizon,
                            cfg.target_channel);
    return metrics_dict(train::evaluate(f_, w, threads));
  }

  std::string config_json() const { return config::to_json(f_.model.config()).dump(); }
  std::string variant() const { return model::to_string(f_.model.variant()); }
  std::vector<std::string> node_ids() const { return f_.node_ids; }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : f_.model.parameters().items()) n += t.numel();
    return n;
  }

 private:
  model::Forecaster f_;
};

}  // namespace

PYBIND11_MODULE(_taegcn, m) {
  m.doc() = "Spatio-temporal forecasting with evolving learned graphs";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a taegcn subcommand; returns (exit_code, stdout, stderr).");

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        py::list rows;
        for (const auto& r : gradcheck::run_suite(seed)) {
          rows.append(py::make_tuple(r.name, r.max_rel_error, r.entries, r.passed()));
        }
        return rows;
      },
      py::arg("seed") = 1);

  m.def(
      "split_lengths",
      [](std::size_t steps, double train, double val, double test) {
        const auto s = data::split_lengths(steps, train, val, test);
        return py::make_tuple(s.train, s.val, s.test);
      },
      py::arg("steps"), py::arg("train") = 0.7, py::arg("val") = 0.1, py::arg("test") = 0.2);

  m.def(
      "causal_window_mask",
      [](std::size_t length, std::size_t window) {
        const auto mask = tmsa::build_causal_window_mask(length, window);
        py::array_t<bool> out({length, length});
        auto v = out.mutable_unchecked<2>();
        for (std::size_t t = 0; t < length; ++t) {
          for (std::size_t s = 0; s < length; ++s) v(t, s) = mask.allowed(t, s);
        }
        return out;
      },
      py::arg("length"), py::arg("window"));

  m.def(
      "compute_metrics",
      [](const Array& prediction, const Array& target, double missing_marker) {
        return metrics_dict(train::compute_metrics(to_tensor(prediction), to_tensor(target), missing_marker));
      },
      py::arg("prediction"), py::arg("target"), py::arg("missing_marker") = 0.0);

  m.def(
      "synth_generate",
      [](const std::string& spec_json) {
        const auto r = synth::synth_generate(synth::spec_from_json(spec_json));
        py::list adjacency, transition;
        for (const auto& a : r.adjacency) adjacency.append(to_array(a));
        for (const auto& a : r.transition) transition.append(to_array(a));
        py::dict d;
        d["values"] = to_array(r.dataset.values);
        d["adjacency"] = adjacency;
        d["transition"] = transition;
        d["regime_start"] = r.regime_start;
        return d;
      },
      py::arg("spec_json"), "Generates a regime-switching series from a JSON spec.");

  m.def(
      "default_model_config", [] { return config::to_json(model::ModelConfig{}).dump(); },
      "Default model configuration as JSON text.");
  m.def(
      "default_train_config", [] { return config::to_json(train::TrainConfig{}).dump(); },
      "Default training configuration as JSON text.");

  py::class_<PyForecaster>(m, "Forecaster")
      .def_static("load", &PyForecaster::load, py::arg("path"))
      .def("save", &PyForecaster::save, py::arg("path"))
      .def("predict", &PyForecaster::predict, py::arg("x"))
      .def("adjacency", &PyForecaster::adjacency, py::arg("x"))
      .def("windows", &PyForecaster::windows, py::arg("values"), py::arg("missing_marker") = 0.0)
      .def("evaluate", &PyForecaster::evaluate, py::arg("values"), py::arg("missing_marker") = 0.0,
           py::arg("threads") = 1)
      .def_property_readonly("config_json", &PyForecaster::config_json)
      .def_property_readonly("variant", &PyForecaster::variant)
      .def_property_readonly("node_ids", &PyForecaster::node_ids)
      .def_property_readonly("parameter_count", &PyForecaster::parameter_count);
}
