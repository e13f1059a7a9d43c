#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "trafficguard/cli.hpp"
#include "trafficguard/config.hpp"
#include "trafficguard/dataset.hpp"
#include "trafficguard/neuralnet.hpp"
#include "trafficguard/simnet.hpp"
#include "trafficguard/xai.hpp"

namespace py = pybind11;
using namespace trafficguard;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Array stack(const std::vector<Tensor>& items, const std::vector<std::size_t>& item_shape) {
  std::vector<py::ssize_t> shape = {static_cast<py::ssize_t>(items.size())};
  shape.insert(shape.end(), item_shape.begin(), item_shape.end());
  Array out(shape);
  double* p = out.mutable_data();
  for (const auto& t : items) p = std::copy(t.values().begin(), t.values().end(), p);
  return out;
}

xai::ModelFn python_model(py::function fn) {
  return [fn](const Tensor& x) {
    py::gil_scoped_acquire gil;
    return fn(to_array(x)).cast<double>();
  };
}

py::dict attribution_dict(const xai::Attribution& a) {
  py::dict d;
  d["method"] = std::string(xai::method_name(a.method));
  d["scores"] = a.scores;
  d["shape"] = a.shape;
  d["base_value"] = a.base_value;
  d["prediction"] = a.prediction;
  d["top"] = a.top;
  d["r2"] = a.meta.r2;
  d["exact"] = a.meta.exact;
  d["warnings"] = a.meta.warnings;
  return d;
}

struct Prepared {
  dataset::PreparedData data;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core bindings: simulation, dataset preparation, CNN training and explanations.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<config::RunConfig>(m, "Config")
      .def_property(
          "seed", [](const config::RunConfig& c) { return c.seed; },
          [](config::RunConfig& c, std::uint64_t s) { config::apply_seed(c, s); })
      .def_property(
          "rows", [](const config::RunConfig& c) { return c.dataset.rows; },
          [](config::RunConfig& c, int r) {
            if (!dataset::valid_window_rows(r)) throw ConfigError("rows must be 9, 18 or 36");
            c.dataset.rows = r;
          })
      .def_property(
          "duration", [](const config::RunConfig& c) { return c.scenario.duration; },
          [](config::RunConfig& c, int d) { c.scenario.duration = d; })
      .def_property(
          "epochs", [](const config::RunConfig& c) { return c.train.epochs; },
          [](config::RunConfig& c, int e) { c.train.epochs = e; })
      .def_property_readonly("busiest",
                             [](const config::RunConfig& c) { return simnet::Network(c.scenario.network).busiest(); });

  m.def("parse_config", &config::parse_run_config, py::arg("yaml_text"));
  m.def("load_config", [](const std::string& path) { return config::load_run_config(path); }, py::arg("path"));

  py::class_<simnet::RecordLog>(m, "RecordLog")
      .def_readonly("monitored_intersection", &simnet::RecordLog::monitored_intersection)
      .def_readonly("detectors_per_batch", &simnet::RecordLog::detectors_per_batch)
      .def("__len__", [](const simnet::RecordLog& r) { return r.records.size(); })
      .def_property_readonly("features",
                             [](const simnet::RecordLog& r) {
                               Array out({static_cast<py::ssize_t>(r.records.size()),
                                          static_cast<py::ssize_t>(simnet::kFeatureCount)});
                               double* p = out.mutable_data();
                               for (const auto& rec : r.records) p = std::copy(rec.features.begin(), rec.features.end(), p);
                               return out;
                             })
      .def_property_readonly("labels",
                             [](const simnet::RecordLog& r) {
                               std::vector<int> l;
                               for (const auto& rec : r.records) l.push_back(rec.label == simnet::Label::kNormal ? 1 : 0);
                               return l;
                             })
      .def_property_readonly("begin",
                             [](const simnet::RecordLog& r) {
                               std::vector<int> b;
                               for (const auto& rec : r.records) b.push_back(rec.begin);
                               return b;
                             })
      .def("to_csv", [](const simnet::RecordLog& r) { return simnet::records_to_csv(r.records); });

  m.def(
      "simulate",
      [](const config::RunConfig& c, bool control) {
        const auto& sc = c.scenario;
        if (!control) return simnet::run_scenario(sc.network, sc.attacks, sc.duration, sc.monitored);
        simnet::NetworkConfig net = sc.network;
        net.seed = config::control_seed(c.seed);
        const int monitored = sc.monitored.value_or(simnet::Network(sc.network).busiest());
        return simnet::run_scenario(net, {}, sc.control_duration, monitored);
      },
      py::arg("config"), py::arg("control") = false,
      "Runs the configured scenario, or the attack-free control run when control=True.");

  py::class_<Prepared>(m, "Prepared")
      .def_property_readonly("train_x", [](const Prepared& p) { return stack(p.data.split.train.inputs, p.data.split.train.input_shape); })
      .def_property_readonly("train_y", [](const Prepared& p) { return p.data.split.train.labels; })
      .def_property_readonly("test_x", [](const Prepared& p) { return stack(p.data.split.test.inputs, p.data.split.test.input_shape); })
      .def_property_readonly("test_y", [](const Prepared& p) { return p.data.split.test.labels; })
      .def_property_readonly("baseline", [](const Prepared& p) { return to_array(p.data.baseline); })
      .def_property_readonly("input_shape", [](const Prepared& p) { return p.data.split.train.input_shape; });

  m.def(
      "prepare",
      [](const simnet::RecordLog& records, const simnet::RecordLog& control, const config::RunConfig& c) {
        dataset::BuildOptions opts = c.dataset;
        opts.batch_rows = records.detectors_per_batch;
        return Prepared{dataset::prepare(records.records, control.records, opts)};
      },
      py::arg("records"), py::arg("control"), py::arg("config"));

  py::class_<nn::CnnModel>(m, "Model")
      .def_property_readonly("parameter_count", &nn::CnnModel::parameter_count)
      .def_property_readonly("flatten_dim", [](const nn::CnnModel& model) { return model.flatten_dim(); })
      .def("__call__", [](const nn::CnnModel& model, const Array& x) { return nn::forward(model, to_tensor(x)); })
      .def("predict",
           [](const nn::CnnModel& model, const Array& batch) {
             if (batch.ndim() != 4) throw DataError("predict expects an (N, C, R, 23) array");
             const std::size_t per = static_cast<std::size_t>(batch.size() / std::max<py::ssize_t>(1, batch.shape(0)));
             std::vector<std::size_t> shape(batch.shape() + 1, batch.shape() + 4);
             std::vector<double> out;
             for (py::ssize_t i = 0; i < batch.shape(0); ++i) {
               const double* p = batch.data() + i * per;
               out.push_back(nn::forward(model, Tensor(shape, std::vector<double>(p, p + per))));
             }
             return out;
           })
      .def("to_bytes", [](const nn::CnnModel& model) { return py::bytes(nn::serialize(model)); })
      .def_static("from_bytes", [](const py::bytes& b) { return nn::deserialize(std::string(b)); });

  m.def(
      "make_model",
      [](int channels, int rows, std::uint64_t seed) { return nn::make_model({channels, rows, 23}, seed); },
      py::arg("channels"), py::arg("rows"), py::arg("seed") = 0);

  m.def(
      "train",
      [](const Prepared& p, const config::RunConfig& c) {
        const auto& shape = p.data.split.train.input_shape;
        nn::CnnModel model = nn::make_model(
            {static_cast<int>(shape[0]), static_cast<int>(shape[1]), static_cast<int>(shape[2])}, c.seed);
        nn::TrainOptions opts;
        opts.epochs = c.train.epochs;
        opts.batch_size = c.train.batch_size;
        opts.lr = c.train.lr;
        opts.seed = c.seed;
        nn::TrainResult r;
        {
          py::gil_scoped_release release;
          r = nn::train(model, p.data.split.train, opts);
        }
        return py::make_tuple(std::move(model), r.loss_history);
      },
      py::arg("prepared"), py::arg("config"), "Returns (model, per-epoch loss history).");

  m.def(
      "evaluate",
      [](const nn::CnnModel& model, const Prepared& p) {
        const nn::Metrics mt = nn::evaluate(model, p.data.split.test);
        py::dict d;
        d["accuracy"] = mt.accuracy;
        d["precision"] = mt.hacked.precision;
        d["recall"] = mt.hacked.recall;
        d["f1"] = mt.hacked.f1;
        d["confusion"] = py::make_tuple(mt.tp, mt.fp, mt.tn, mt.fn);
        return d;
      },
      py::arg("model"), py::arg("prepared"));

  m.def(
      "occlusion",
      [](py::function fn, const Array& x, int patch_h, int patch_w, int stride) {
        xai::OcclusionOptions o{patch_h, patch_w, stride, xai::BaselinePolicy::kZero};
        return attribution_dict(xai::occlusion_map(python_model(fn), to_tensor(x), o));
      },
      py::arg("model"), py::arg("x"), py::arg("patch_h") = 1, py::arg("patch_w") = 1, py::arg("stride") = 1);

  m.def(
      "lime",
      [](py::function fn, const Array& x, int n_samples, int top_k, std::uint64_t seed) {
        xai::LimeOptions o;
        o.n_samples = n_samples;
        o.top_k = top_k;
        o.seed = seed;
        return attribution_dict(xai::lime_explain(python_model(fn), to_tensor(x), o));
      },
      py::arg("model"), py::arg("x"), py::arg("n_samples") = 1000, py::arg("top_k") = 10, py::arg("seed") = 0);

  m.def(
      "kernel_shap",
      [](py::function fn, const Array& x, const Array& baseline, int n_coalitions, std::uint64_t seed) {
        xai::ShapOptions o;
        o.n_coalitions = n_coalitions;
        o.seed = seed;
        return attribution_dict(xai::kernel_shap(python_model(fn), to_tensor(x), to_tensor(baseline), o));
      },
      py::arg("model"), py::arg("x"), py::arg("baseline"), py::arg("n_coalitions") = 2048, py::arg("seed") = 0);

  m.def(
      "pca",
      [](const Array& data, double target) {
        const Tensor t = to_tensor(data);
        const xai::PcaModel model = xai::pca_fit(t);
        py::dict d;
        d["explained_variance_ratio"] = model.explained_variance_ratio;
        d["k"] = xai::components_for_variance(model, target);
        d["coords"] = to_array(xai::pca_project(model, t, std::min<std::size_t>(2, model.n_components())));
        return d;
      },
      py::arg("data"), py::arg("variance_target") = 0.90);

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv = {"trafficguard"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line; returns (exit code, stdout, stderr).");
}
