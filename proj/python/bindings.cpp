#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "pidnet/bench.hpp"
#include "pidnet/checkpoint.hpp"
#include "pidnet/commands.hpp"
#include "pidnet/metrics.hpp"
#include "pidnet/pid_analysis.hpp"
#include "pidnet/train.hpp"

namespace py = pybind11;
using namespace pidnet;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const FloatArray& a) {
  if (a.ndim() != 4) throw ShapeError("expected a 4-d (N, C, H, W) array");
  Tensor<float> t(Shape{int(a.shape(0)), int(a.shape(1)), int(a.shape(2)), int(a.shape(3))});
  std::copy(a.data(), a.data() + a.size(), t.ptr());
  return t;
}

FloatArray to_array(const Tensor<float>& t) {
  const Shape s = t.shape();
  FloatArray a({s.n, s.c, s.h, s.w});
  std::copy(t.ptr(), t.ptr() + t.size(), a.mutable_data());
  return a;
}

// Accepts (H, W) or (N, H, W).
LabelMap to_labels(const LabelArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("expected a 2-d or 3-d label array");
  const int n = a.ndim() == 3 ? int(a.shape(0)) : 1;
  LabelMap m(n, int(a.shape(a.ndim() - 2)), int(a.shape(a.ndim() - 1)));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

LabelArray to_array(const LabelMap& m) {
  LabelArray a({m.n, m.h, m.w});
  std::copy(m.data.begin(), m.data.end(), a.mutable_data());
  return a;
}

ModelConfig make_config(const std::string& preset, const std::string& fusion,
                        const std::string& context, int classes, std::uint64_t seed) {
  ModelConfig c = ModelConfig::preset(preset);
  if (!fusion.empty()) c.fusion = parse_fusion(fusion);
  if (!context.empty()) c.context = parse_context(context);
  if (classes > 0) c.num_classes = classes;
  c.seed = seed;
  c.validate();
  return c;
}

py::dict forward(PidNet<float>& m, const FloatArray& x, bool train) {
  const auto out = m.forward(Var<float>(to_tensor(x)), train ? RunMode::kTrain : RunMode::kEval);
  py::dict d;
  if (out.aux.defined()) d["aux"] = to_array(out.aux.value());
  d["main"] = to_array(out.main.value());
  d["boundary"] = to_array(out.boundary.value());
  return d;
}

template <typename Fn>
float scalar_loss(Fn fn) {
  TapeScope<float> off(nullptr);
  return fn().value().item();
}

}  // namespace

PYBIND11_MODULE(_pidnet, m) {
  m.doc() = "PIDNet core bindings";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ValueError>(m, "ValueError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

  // pid analysis
  m.def("simulate_step",
        [](double kp, double ki, double kd, double wn, double zeta, double dt, double duration) {
          const auto tr = pid::simulate_step({kp, ki, kd}, {wn, zeta, 1.0}, dt, duration);
          py::dict d;
          d["t"] = tr.t;
          d["y"] = tr.y;
          d["e"] = tr.e;
          d["c"] = tr.c;
          d["overshoot"] = tr.overshoot;
          return d;
        },
        py::arg("kp"), py::arg("ki"), py::arg("kd"), py::arg("wn") = 1.0, py::arg("zeta") = 0.5,
        py::arg("dt") = 0.01, py::arg("duration") = 30.0);
  m.def("frequency_response",
        [](double kp, double ki, double kd, const std::vector<double>& omegas) {
          const auto fr = pid::frequency_response({kp, ki, kd}, omegas);
          py::dict d;
          d["omega"] = fr.omegas;
          d["p"] = fr.p_mag;
          d["i"] = fr.i_mag;
          d["d"] = fr.d_mag;
          d["c"] = fr.c_mag;
          return d;
        },
        py::arg("kp"), py::arg("ki"), py::arg("kd"), py::arg("omegas"));
  m.def("locality_ratio",
        [](const std::vector<int>& kernels, const std::vector<int>& strides, int window) {
          const auto r = pid::locality_ratio(pid::receptive_field_expansion(kernels, strides), window);
          return py::make_tuple(r.num, r.den);
        },
        py::arg("kernels"), py::arg("strides"), py::arg("window") = 1);

  // model
  py::class_<PidNet<float>>(m, "Model")
      .def(py::init(
               [](const std::string& preset, const std::string& fusion, const std::string& context,
                  int classes, std::uint64_t seed) {
                 return PidNet<float>(make_config(preset, fusion, context, classes, seed));
               }),
           py::arg("preset") = "tiny", py::arg("fusion") = "", py::arg("context") = "",
           py::arg("classes") = 0, py::arg("seed") = 0)
      .def("forward", &forward, py::arg("x"), py::arg("train") = false)
      .def("predict",
           [](PidNet<float>& model, const FloatArray& x) {
             const auto out = model.forward(Var<float>(to_tensor(x)), RunMode::kEval);
             const Shape s = out.main.shape();
             const int h = int(x.shape(2)), w = int(x.shape(3));
             Var<float> up = out.main;
             if (s.h != h || s.w != w) up = bilinear_resize(up, h, w);
             return to_array(argmax_channels(up.value()));
           },
           py::arg("x"))
      .def("count_params", &PidNet<float>::count_params)
      .def("count_flops", &PidNet<float>::count_flops, py::arg("h"), py::arg("w"))
      .def("count_macs", &PidNet<float>::count_macs, py::arg("h"), py::arg("w"))
      .def("fuse_bn", &PidNet<float>::fuse_bn)
      .def_property_readonly("fused", &PidNet<float>::fused)
      .def_property_readonly("num_classes", [](const PidNet<float>& x) { return x.config().num_classes; })
      .def("save", [](PidNet<float>& x, const std::string& path) { save_checkpoint(x, path); })
      .def("to_bytes", [](PidNet<float>& x) {
        const auto b = serialize_checkpoint(x);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
      });
  m.def("load", &load_checkpoint, py::arg("path"));
  m.def("from_bytes", [](const py::bytes& b) {
    const std::string s = b;
    return deserialize_checkpoint(std::vector<std::uint8_t>(s.begin(), s.end()));
  });

  // losses (values only) and metrics
  m.def("cross_entropy", [](const FloatArray& logits, const LabelArray& labels) {
    return scalar_loss([&] { return cross_entropy(Var<float>(to_tensor(logits)), to_labels(labels)).loss; });
  });
  m.def("ohem_cross_entropy", [](const FloatArray& logits, const LabelArray& labels) {
    return scalar_loss(
        [&] { return ohem_cross_entropy(Var<float>(to_tensor(logits)), to_labels(labels)).loss; });
  });
  m.def("weighted_bce", [](const FloatArray& logits, const LabelArray& gt) {
    return scalar_loss([&] { return weighted_bce(Var<float>(to_tensor(logits)), to_labels(gt)); });
  });
  m.def("bas_loss",
        [](const FloatArray& seg, const LabelArray& labels, const FloatArray& boundary, double t) {
          return scalar_loss([&] {
            return bas_loss(Var<float>(to_tensor(seg)), to_labels(labels),
                            Var<float>(to_tensor(boundary)), t);
          });
        },
        py::arg("seg"), py::arg("labels"), py::arg("boundary"), py::arg("t") = 0.8);
  m.def("extract_boundary_gt", [](const LabelArray& labels, int radius) {
    return to_array(extract_boundary_gt(to_labels(labels), radius));
  }, py::arg("labels"), py::arg("radius") = 2);
  m.def("miou", [](const LabelArray& pred, const LabelArray& gt, int classes) {
    ConfusionMatrix cm(classes);
    cm.accumulate(to_labels(pred), to_labels(gt));
    return cm.miou();
  }, py::arg("pred"), py::arg("gt"), py::arg("classes"));
  m.def("boundary_f_score", [](const LabelArray& pred, const LabelArray& gt, int radius) {
    return boundary_f_score(to_labels(pred), to_labels(gt), radius);
  }, py::arg("pred"), py::arg("gt"), py::arg("radius") = 1);

  // data and training
  m.def("gen_scene",
        [](std::uint64_t seed, std::uint64_t index, int height, int width, int classes) {
          SceneSpec spec;
          spec.seed = seed;
          spec.height = height;
          spec.width = width;
          spec.num_classes = classes;
          const Sample s = gen_scene(spec, index);
          return py::make_tuple(to_array(s.image), to_array(s.labels));
        },
        py::arg("seed"), py::arg("index"), py::arg("height") = 64, py::arg("width") = 64,
        py::arg("classes") = 3);
  m.def("poly_lr", &poly_lr, py::arg("base_lr"), py::arg("iter"), py::arg("max_iter"),
        py::arg("power") = 0.9);
  m.def("train_desk",
        [](std::uint64_t seed, int iters, int train_scenes, int val_scenes) {
          DeskSetup d = desk_setup(seed);
          d.train.iters = iters;
          const SceneDataset train(d.scenes, 0, train_scenes);
          const SceneDataset val(d.scenes, d.val_first, val_scenes);
          PidNet<float> model(d.model);
          TrainResult r;
          {
            py::gil_scoped_release release;
            r = train_loop(model, d.train, train, &val);
          }
          py::list rows;
          for (const auto& row : r.rows) rows.append(metrics_csv_row(row));
          return py::make_tuple(std::move(model), r.final_eval.miou, r.final_eval.boundary_f, rows);
        },
        py::arg("seed") = 0, py::arg("iters") = 2000, py::arg("train_scenes") = 400,
        py::arg("val_scenes") = 50);

  // command line
  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  });
}
