// Python bindings for the dense-prediction core: raw ops, metrics, geometry
// summaries, and a thin Net wrapper. Arrays cross the boundary as float32
// (images, weights) or uint8 (label maps).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fcn/metrics.hpp"
#include "fcn/net.hpp"
#include "fcn/ops.hpp"
#include "fcn/zoo.hpp"

namespace py = pybind11;
using namespace fcn;

namespace {

Tensor tensor_from(const py::array& arr) {
  py::array_t<float, py::array::c_style | py::array::forcecast> a(arr);
  if (a.ndim() != 4) throw DataError("expected a 4-D array (n, c, h, w)");
  Tensor t(int(a.shape(0)), int(a.shape(1)), int(a.shape(2)), int(a.shape(3)));
  std::memcpy(t.data.data(), a.data(), t.size() * sizeof(float));
  return t;
}

py::array_t<float> array_from(const Tensor& t) {
  py::array_t<float> a({t.n(), t.c(), t.h(), t.w()});
  std::memcpy(a.mutable_data(), t.data.data(), t.size() * sizeof(float));
  return a;
}

LabelMap labels_from(const py::array& arr) {
  py::array_t<uint8_t, py::array::c_style | py::array::forcecast> a(arr);
  if (a.ndim() != 2) throw DataError("expected a 2-D uint8 label map");
  LabelMap m(int(a.shape(0)), int(a.shape(1)));
  std::memcpy(m.data.data(), a.data(), m.data.size());
  return m;
}

py::dict metric_dict(const MetricSet& m) {
  py::dict d;
  d["pixel_acc"] = m.pixel_acc;
  d["mean_acc"] = m.mean_acc;
  d["mean_iu"] = m.mean_iu;
  d["fw_iu"] = m.fw_iu;
  return d;
}

// Net plus its description, so geometry queries stay available.
struct PyNet {
  NetSpec spec;
  Net<float> net;

  explicit PyNet(const std::string& path)
      : spec(load_net(path)), net(spec) {}

  py::array_t<float> forward(const py::array& x) {
    return array_from(net.forward(tensor_from(x)));
  }

  py::list summaries() const {
    py::list rows;
    std::vector<GeomSummary> sums = node_summaries(spec);
    for (size_t i = 0; i < spec.nodes.size(); ++i)
      rows.append(py::make_tuple(spec.nodes[i].name, sums[i].K.str(),
                                 sums[i].S.str()));
    return rows;
  }
};

}  // namespace

PYBIND11_MODULE(py_fcn, m) {
  m.doc() = "dense-prediction core: convolution ops, metrics, net geometry";

  py::register_exception<Error>(m, "CoreError");

  m.def(
      "conv2d",
      [](const py::array& x, const py::array& w, py::object bias, int stride,
         int pad, int dilation) {
        Tensor xt = tensor_from(x), wt = tensor_from(w);
        LayerGeom g = conv_geom(wt.h(), stride, pad);
        g.dilation = dilation;
        if (bias.is_none())
          return array_from(conv2d_forward<float>(xt, wt, nullptr, g));
        Tensor bt = tensor_from(bias.cast<py::array>());
        return array_from(conv2d_forward(xt, wt, &bt, g));
      },
      py::arg("x"), py::arg("w"), py::arg("bias") = py::none(),
      py::arg("stride") = 1, py::arg("pad") = 0, py::arg("dilation") = 1);

  m.def(
      "deconv2d",
      [](const py::array& x, const py::array& w, int factor, int pad) {
        Tensor xt = tensor_from(x), wt = tensor_from(w);
        return array_from(deconv2d_forward(xt, wt, deconv_geom(wt.h(), factor, pad)));
      },
      py::arg("x"), py::arg("w"), py::arg("factor"), py::arg("pad") = 0);

  m.def(
      "bilinear_kernel",
      [](int factor, int channels) {
        return array_from(bilinear_kernel<float>(factor, channels));
      },
      py::arg("factor"), py::arg("channels") = 1);

  m.def(
      "segmentation_metrics",
      [](const py::array& pred, const py::array& truth, int classes) {
        ConfusionMatrix cm(classes);
        accumulate(cm, labels_from(pred), labels_from(truth));
        return metric_dict(compute_metrics(cm));
      },
      py::arg("pred"), py::arg("truth"), py::arg("classes"));

  m.def(
      "iu_upper_bound",
      [](const py::array& truth, int factor, int classes, bool majority) {
        return iu_upper_bound(labels_from(truth), factor, classes, majority);
      },
      py::arg("truth"), py::arg("factor"), py::arg("classes"),
      py::arg("majority") = false);

  py::class_<PyNet>(m, "Net")
      .def(py::init<const std::string&>(), py::arg("description_path"))
      .def("init_params", [](PyNet& n, uint64_t seed) { n.net.init_params(seed); },
           py::arg("seed") = 1)
      .def("load_checkpoint",
           [](PyNet& n, const std::string& path, bool allow_missing) {
             n.net.load(read_checkpoint(path), allow_missing);
           },
           py::arg("path"), py::arg("allow_missing") = false)
      .def("save_checkpoint",
           [](PyNet& n, const std::string& path) {
             write_checkpoint(path, n.net.save());
           },
           py::arg("path"))
      .def("forward", &PyNet::forward, py::arg("x"))
      .def("summaries", &PyNet::summaries)
      .def("class_count", [](const PyNet& n) { return n.spec.class_count(); });
}
