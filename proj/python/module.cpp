#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "provmark/attack_sim.hpp"
#include "provmark/corpus.hpp"
#include "provmark/evaluate.hpp"
#include "provmark/metrics.hpp"
#include "provmark/pipeline.hpp"
#include "provmark/poisson.hpp"
#include "provmark/train.hpp"

namespace py = pybind11;
using namespace provmark;

namespace {

Image array_to_image(const py::array_t<double>& a) {
  if (a.ndim() != 3 || a.shape(0) != 3)
    throw Error("BadShape", "expected a (3,H,W) float64 array");
  Image img = Image::zeros(3, (int)a.shape(1), (int)a.shape(2));
  auto r = a.unchecked<3>();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) img.at(c, y, x) = r(c, y, x);
  return img;
}

py::array_t<double> image_to_array(const Image& img) {
  py::array_t<double> a({img.channels, img.height, img.width});
  auto w = a.mutable_unchecked<3>();
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) w(c, y, x) = img.at(c, y, x);
  return a;
}

ManipulationMask array_to_mask(const py::array_t<double>& a, bool binary) {
  if (a.ndim() != 2) throw Error("BadShape", "expected a (H,W) float64 array");
  ManipulationMask m;
  m.height = (int)a.shape(0);
  m.width = (int)a.shape(1);
  m.binary = binary;
  m.data = ArrayX((Eigen::Index)m.height * m.width);
  auto r = a.unchecked<2>();
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) m.data[y * m.width + x] = r(y, x);
  return m;
}

py::array_t<double> mask_to_array(const ManipulationMask& m) {
  py::array_t<double> a({m.height, m.width});
  auto w = a.mutable_unchecked<2>();
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) w(y, x) = m.data[y * m.width + x];
  return a;
}

}  // namespace

PYBIND11_MODULE(_provmark, m) {
  m.doc() = "tamper-resilient versatile watermarking pipeline";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(PyExc_RuntimeError,
                      (std::string(e.kind()) + ": " + e.what()).c_str());
    }
  });

  m.def("default_config", [] { return config_to_json(RunConfig{}); });

  m.def(
      "synth_corpus",
      [](int count, int resolution, uint64_t seed) {
        std::vector<py::array_t<double>> out;
        for (const Image& im : synth_corpus(count, resolution, seed))
          out.push_back(image_to_array(im));
        return out;
      },
      py::arg("count"), py::arg("resolution"), py::arg("seed"));

  m.def(
      "poisson_blend",
      [](const py::array_t<double>& src, const py::array_t<double>& dst,
         const py::array_t<double>& mask) {
        return image_to_array(poisson_blend(array_to_image(src), array_to_image(dst),
                                            array_to_mask(mask, true)));
      },
      py::arg("source"), py::arg("target"), py::arg("mask"));

  m.def(
      "psnr",
      [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return psnr(array_to_image(a), array_to_image(b));
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "ssim",
      [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return ssim(array_to_image(a), array_to_image(b));
      },
      py::arg("a"), py::arg("b"));

  py::class_<Pipeline>(m, "Pipeline")
      .def(py::init([](const std::string& config_json) {
             RunConfig cfg = config_from_json(config_json);
             cfg.validate();
             return new Pipeline(cfg);
           }),
           py::arg("config_json"))
      .def_static("load", &Pipeline::load)
      .def("save", [](const Pipeline& p, const std::string& path) {
        p.save(path, 0);
      })
      .def("config_json", [](const Pipeline& p) { return config_to_json(p.cfg); })
      .def("embed",
           [](const Pipeline& p, const py::array_t<double>& img,
              const std::string& code_hex) {
             Image image = array_to_image(img);
             OwnershipCode code = hex_to_code(code_hex, p.cfg.urw.n_bits);
             return image_to_array(p.embed(image, p.make_payload(image, code)));
           },
           py::arg("image"), py::arg("code_hex"))
      .def("extract",
           [](const Pipeline& p, const py::array_t<double>& img) {
             ExtractionResult ex = p.extractor.extract(array_to_image(img));
             return code_to_hex(ex.code);
           })
      .def("verify",
           [](const Pipeline& p, const py::array_t<double>& img) {
             VerifyResult v = run_verify(p, array_to_image(img));
             py::dict d;
             d["code_hex"] = code_to_hex(v.code);
             d["mask"] = mask_to_array(v.mask);
             d["mask_soft"] = mask_to_array(v.mask_soft);
             d["recovered"] = image_to_array(v.recovered);
             return d;
           })
      .def("attack",
           [](const Pipeline& p, const py::array_t<double>& img,
              const py::array_t<double>& source, const std::string& arm,
              uint64_t seed) {
             Rng rng(seed);
             AttackOutcome out =
                 simulate_attack(array_to_image(img), array_to_image(source),
                                 ablation_attack_config(arm), &p.face, rng);
             return py::make_tuple(image_to_array(out.edited),
                                   mask_to_array(out.ground_truth_mask),
                                   out.stages);
           },
           py::arg("image"), py::arg("source"), py::arg("arm"), py::arg("seed"))
      .def("train",
           [](Pipeline& p, const std::vector<py::array_t<double>>& images) {
             std::vector<Image> corpus;
             for (const auto& a : images) corpus.push_back(array_to_image(a));
             TrainResult r = train_joint(p, corpus);
             std::vector<double> totals;
             for (const auto& e : r.log) totals.push_back(e.total);
             return totals;
           });

  m.def(
      "bit_accuracy",
      [](const std::string& a_hex, const std::string& b_hex, int n) {
        return bit_accuracy(hex_to_code(a_hex, n), hex_to_code(b_hex, n));
      },
      py::arg("a_hex"), py::arg("b_hex"), py::arg("n_bits"));
}
