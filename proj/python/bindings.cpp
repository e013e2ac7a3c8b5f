#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <complex>

#include "dvs/checkpoint.hpp"
#include "dvs/dataset_io.hpp"
#include "dvs/model.hpp"
#include "dvs/quant.hpp"
#include "dvs/spectral.hpp"
#include "dvs/stream.hpp"
#include "dvs/synth.hpp"
#include "dvs/train.hpp"

namespace py = pybind11;
using namespace dvs;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.storage().begin(), t.storage().end(), out.mutable_data());
  return out;
}

template <class T>
py::array_t<T> vector_array(const std::vector<T>& v) {
  py::array_t<T> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// Stack of equally shaped tensors -> (n, ...) array.
py::array_t<float> stack(const std::vector<Tensor>& ts, const Shape& each) {
  std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(ts.size())};
  shape.insert(shape.end(), each.begin(), each.end());
  py::array_t<float> out(shape);
  float* dst = out.mutable_data();
  for (const Tensor& t : ts) dst = std::copy(t.storage().begin(), t.storage().end(), dst);
  return out;
}

// (n, ...) array -> tensors of the trailing shape.
std::vector<Tensor> unstack(const FloatArray& a) {
  if (a.ndim() < 2) throw ShapeError("expected a stacked (n, ...) array");
  const Shape each(a.shape() + 1, a.shape() + a.ndim());
  const std::size_t n = static_cast<std::size_t>(a.shape(0)), per = static_cast<std::size_t>(a.size()) / std::max<std::size_t>(n, 1);
  std::vector<Tensor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(each, std::vector<float>(a.data() + i * per, a.data() + (i + 1) * per));
  return out;
}

synth::SiteProfile site_profile(const std::string& site) {
  if (site == "A" || site == "a") return synth::site_a_profile();
  if (site == "B" || site == "b") return synth::site_b_profile();
  throw ValueError("site must be 'A' or 'B', got '" + site + "'");
}

py::tuple dataset_arrays(const synth::Dataset& d) {
  std::vector<Tensor> xs;
  std::vector<int> ys;
  for (const auto& s : d.samples) {
    xs.push_back(s.values);
    ys.push_back(s.label);
  }
  return py::make_tuple(stack(xs, {d.time, d.space}), vector_array(ys));
}

synth::Dataset dataset_from(const FloatArray& samples, const std::vector<int>& labels) {
  const auto xs = unstack(samples);
  if (xs.size() != labels.size()) throw ShapeError("samples and labels differ in length");
  synth::Dataset d;
  for (std::size_t i = 0; i < xs.size(); ++i) d.samples.push_back({xs[i], labels[i], 0});
  if (!xs.empty()) {
    d.time = xs[0].dim(0);
    d.space = xs[0].dim(1);
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Depthwise-separable vibration-event classifier: float and shift-add integer engines";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ValueError>(m, "DvsValueError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "DvsIoError", PyExc_OSError);

  m.attr("CLASS_NAMES") = std::vector<std::string>(synth::class_names().begin(), synth::class_names().end());

  // ---- data ----
  m.def("gen_sample",
        [](int cls, const std::string& site, std::uint64_t seed) {
          if (cls < 0 || cls >= synth::kClasses) throw ValueError("class index out of range");
          return to_numpy(synth::gen_sample(static_cast<synth::EventClass>(cls), site_profile(site), seed).values);
        },
        py::arg("cls"), py::arg("site") = "A", py::arg("seed") = 0, "One raw 256 x 11 sample.");
  m.def("gen_site",
        [](std::array<int, synth::kClasses> counts, const std::string& site, std::uint64_t seed) {
          return dataset_arrays(synth::gen_site(counts, site_profile(site), seed));
        },
        py::arg("counts"), py::arg("site") = "A", py::arg("seed") = 7, "Returns (samples[n, 256, 11], labels[n]).");
  m.def("load_dataset", [](const std::string& path) { return dataset_arrays(io::load_dataset(path)); },
        py::arg("path"));
  m.def("save_dataset",
        [](const FloatArray& samples, const std::vector<int>& labels, const std::string& path) {
          io::save_dataset(dataset_from(samples, labels), path);
        },
        py::arg("samples"), py::arg("labels"), py::arg("path"));
  m.def("standardize", [](const FloatArray& x) { return to_numpy(synth::standardize(to_tensor(x))); }, py::arg("x"));
  m.def("prepare_input",
        [](const FloatArray& raw, const std::string& paradigm) {
          return to_numpy(train::prepare_input(to_tensor(raw), train::parse_paradigm(paradigm)));
        },
        py::arg("raw"), py::arg("paradigm") = "st", "Model input for a raw sample.");

  // ---- spectral ----
  m.def("fft",
        [](py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast> x) {
          std::vector<std::complex<double>> v(x.data(), x.data() + x.size());
          spectral::fft_inplace(v);
          return vector_array(v);
        },
        py::arg("x"), "Unnormalized forward DFT; length must be a power of two.");
  m.def("spectral_target",
        [](const FloatArray& x, const std::string& mode) {
          return to_numpy(spectral::spectral_target(to_tensor(x), spectral::parse_target_mode(mode)).tensor);
        },
        py::arg("x"), py::arg("mode") = "dft2ch");

  // ---- model ----
  py::class_<nn::Model>(m, "Model")
      .def_property_readonly("depth", [](const nn::Model& mo) { return mo.depth; })
      .def_property_readonly("input_shape", [](const nn::Model& mo) { return mo.input; })
      .def_property_readonly("hint_layer", [](const nn::Model& mo) { return mo.hint_layer; })
      .def("stats",
           [](const nn::Model& mo) {
             const auto s = nn::model_stats(mo);
             py::dict d;
             d["params"] = s.params;
             d["macs"] = s.macs;
             d["flops"] = s.flops();
             return d;
           })
      .def("forward", [](const nn::Model& mo, const FloatArray& x) { return to_numpy(nn::model_forward(mo, to_tensor(x)).logits); },
           py::arg("x"), "Logits for one model-ready input.")
      .def("predict",
           [](const nn::Model& mo, const FloatArray& xs) {
             std::vector<int> out;
             for (const Tensor& x : unstack(xs)) {
               const Tensor lg = nn::model_forward(mo, x).logits;
               out.push_back(static_cast<int>(std::max_element(lg.storage().begin(), lg.storage().end()) - lg.storage().begin()));
             }
             return out;
           },
           py::arg("xs"), "Argmax class for a stack of model-ready inputs.")
      .def("to_bytes", [](const nn::Model& mo) {
        const auto b = io::encode_model(mo);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      })
      .def("save", [](const nn::Model& mo, const std::string& path) { io::save_model(mo, path); }, py::arg("path"));

  m.def("model_build", &nn::model_build, py::arg("depth") = 3, py::arg("classes") = 3, py::arg("seed") = 7,
        py::arg("input") = Shape{1, 256, 11});
  m.def("load_model", &io::load_model, py::arg("path"));

  m.def("train",
        [](const FloatArray& x_train, const std::vector<int>& y_train, const FloatArray& x_val,
           const std::vector<int>& y_val, const std::string& paradigm, double alpha, int depth, int epochs,
           std::uint64_t seed) {
          train::TrainConfig c;
          c.paradigm = train::parse_paradigm(paradigm);
          c.alpha = alpha;
          c.depth = depth;
          c.epochs = epochs;
          c.seed = seed;
          const auto tr = dataset_from(x_train, y_train), va = dataset_from(x_val, y_val);
          train::TrainResult r;
          {
            py::gil_scoped_release release;
            r = train::train(c, train::prepare(tr, c.paradigm, c.target), train::prepare(va, c.paradigm, c.target));
          }
          py::list hist;
          for (const auto& e : r.history) {
            py::dict d;
            d["epoch"] = e.epoch;
            d["lr"] = e.lr;
            d["train_loss"] = e.train_loss;
            d["val_loss"] = e.val_loss;
            d["val_acc"] = e.val_acc;
            hist.append(d);
          }
          return py::make_tuple(r.model, r.best_epoch, r.best_val.accuracy, hist);
        },
        py::arg("x_train"), py::arg("y_train"), py::arg("x_val"), py::arg("y_val"), py::arg("paradigm") = "cd",
        py::arg("alpha") = 0.5, py::arg("depth") = 3, py::arg("epochs") = 40, py::arg("seed") = 7,
        "Trains on raw samples; returns (model, best_epoch, best_val_acc, history).");

  // ---- quantization ----
  py::class_<quant::QModel>(m, "QModel")
      .def_property_readonly("layers", [](const quant::QModel& q) { return q.layers.size(); })
      .def("forward",
           [](const quant::QModel& q, const FloatArray& x) {
             const auto r = quant::int_forward(q, to_tensor(x));
             py::dict d;
             d["logits"] = r.logits;
             d["frac"] = r.frac;
             d["predicted"] = r.predicted;
             d["overflow"] = r.overflow;
             d["dequantized"] = r.dequantized();
             return d;
           },
           py::arg("x"), "Integer-engine pass over one model-ready input.")
      .def("ir", [](const quant::QModel& q) { return quant::export_shiftadd(q).text; }, "Shift-add program text.")
      .def("save", [](const quant::QModel& q, const std::string& path) { quant::save_qmodel(q, path); }, py::arg("path"));

  m.def("quantize",
        [](const nn::Model& mo, const FloatArray& calibration, bool equalize) {
          quant::QuantizeOptions o;
          o.equalize = equalize;
          return quant::quantize_pow2(mo, unstack(calibration), o);
        },
        py::arg("model"), py::arg("calibration"), py::arg("equalize") = true,
        "Power-of-two quantization; calibration is a stack of at least 32 model-ready inputs.");
  m.def("load_qmodel", &quant::load_qmodel, py::arg("path"));
  m.def("agreement",
        [](const nn::Model& mo, const quant::QModel& q, const FloatArray& xs, const std::vector<int>& labels) {
          const auto r = quant::compare_float_int(mo, q, unstack(xs), labels);
          py::dict d;
          d["total"] = r.total;
          d["agreement"] = r.agreement;
          d["float_accuracy"] = r.float_accuracy;
          d["int_accuracy"] = r.int_accuracy;
          d["max_logit_dev"] = r.max_logit_dev;
          return d;
        },
        py::arg("model"), py::arg("qmodel"), py::arg("xs"), py::arg("labels"));

  // ---- deployment ----
  m.def("fiber_range", &stream::fiber_range, py::arg("latency_seconds"),
        "Monitorable fiber length in metres for a per-window latency.");
}
