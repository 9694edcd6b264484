#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ebim/attack.hpp"
#include "ebim/dataset.hpp"
#include "ebim/error.hpp"
#include "ebim/model.hpp"
#include "ebim/stats.hpp"
#include "ebim/strength.hpp"
#include "ebim/study.hpp"

namespace py = pybind11;
using namespace ebim;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, C) arrays in [0, 1].
Image to_image(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw py::value_error("image array must be (H, W) or (H, W, C)");
  const int h = int(a.shape(0)), w = int(a.shape(1));
  const int c = a.ndim() == 3 ? int(a.shape(2)) : 1;
  return Image({w, h, c}, std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_image(const Image& img) {
  std::vector<py::ssize_t> shape{img.height(), img.width()};
  if (img.channels() != 1) shape.push_back(img.channels());
  Array out(shape);
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

Plane to_plane(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("map array must be (H, W)");
  return Plane(int(a.shape(1)), int(a.shape(0)), std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_plane_array(const Plane& p) {
  Array out({py::ssize_t(p.height()), py::ssize_t(p.width())});
  std::copy(p.data().begin(), p.data().end(), out.mutable_data());
  return out;
}

py::dict report_dict(const TestReport& r) {
  py::dict d;
  d["method"] = r.method;
  d["statistic"] = r.statistic;
  d["p_value"] = r.p_value;
  d["n"] = r.n;
  d["tail"] = tail_name(r.tail);
  d["df"] = r.df;
  d["zeros_dropped"] = r.zeros_dropped;
  return d;
}

Tail to_tail(const std::string& s) {
  if (s == "greater") return Tail::greater;
  if (s == "less") return Tail::less;
  throw py::value_error("tail must be 'greater' or 'less'");
}

AttackConfig make_config(std::optional<int> target, double certainty, double stepsize, int max_iter, double budget) {
  AttackConfig c;
  c.mode = target ? AttackMode::targeted : AttackMode::untargeted;
  c.target_label = target.value_or(0);
  c.certainty = certainty;
  c.stepsize = stepsize;
  c.max_iterations = max_iter;
  c.linf_budget = budget;
  return c;
}

py::dict result_dict(const AttackResult& r) {
  py::dict d;
  d["method"] = r.method;
  d["adversarial"] = from_image(r.adversarial);
  d["original_label"] = r.original_label;
  d["label"] = r.final_prediction.label;
  d["certainty"] = r.final_prediction.certainty;
  d["probabilities"] = r.final_prediction.probabilities;
  d["iterations"] = r.iterations;
  d["success"] = r.success;
  d["linf"] = r.perturbation.linf;
  d["l2"] = r.perturbation.l2;
  d["l0"] = r.perturbation.l0;
  d["strength_map"] = from_plane_array(r.strength_map);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Entropy-localized adversarial attacks, strength maps and study statistics.";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string msg = std::string(errc_name(e.code())) + ": " + e.what();
      switch (e.code()) {
        case Errc::io: PyErr_SetString(PyExc_OSError, msg.c_str()); break;
        case Errc::not_found: PyErr_SetString(PyExc_KeyError, msg.c_str()); break;
        default: PyErr_SetString(PyExc_ValueError, msg.c_str());
      }
    }
  });

  // images
  m.def("load_image", [](const std::filesystem::path& p) { return from_image(load_image(p)); });
  m.def("save_image", [](const Array& a, const std::filesystem::path& p) { save_image(to_image(a), p); });
  m.def("distances", [](const Array& a, const Array& b) {
    const Distances d = distances(to_image(a), to_image(b));
    return py::dict(py::arg("linf") = d.linf, py::arg("l2") = d.l2, py::arg("l0") = d.l0);
  });

  // strength maps
  m.def("local_entropy", [](const Array& gray, int radius, int bins) {
    return from_plane_array(local_entropy(to_plane(gray), radius, bins).values);
  }, py::arg("gray"), py::arg("radius") = kDefaultEntropyRadius, py::arg("bins") = kDefaultEntropyBins);
  m.def("entropy_strength_map", [](const Array& img, int radius, int bins, double threshold) {
    return from_plane_array(entropy_strength_map(to_image(img), {radius, bins, threshold, GrayWeights::mean}));
  }, py::arg("image"), py::arg("radius") = kDefaultEntropyRadius, py::arg("bins") = kDefaultEntropyBins,
     py::arg("threshold") = kDefaultEntropyThreshold);
  m.def("kappa", [](const Array& e) { return kappa(to_plane(e)); }, py::arg("e"));
  m.def("perlin_map", [](int w, int h, int cell, int octaves, std::uint64_t seed) {
    return from_plane_array(perlin_map(w, h, cell, octaves, seed));
  }, py::arg("width"), py::arg("height"), py::arg("cell"), py::arg("octaves"), py::arg("seed"));
  m.def("adjust_to_kappa", [](const Array& e, double target, double tol, const std::string& method) {
    if (method != "brightness" && method != "threshold") throw py::value_error("method must be brightness or threshold");
    return from_plane_array(adjust_to_kappa(StrengthMap(to_plane(e)), target, tol,
                                            method == "threshold" ? KappaMethod::threshold : KappaMethod::brightness));
  }, py::arg("e"), py::arg("target"), py::arg("tol") = kDefaultKappaTolerance, py::arg("method") = "brightness");
  m.def("dilate", [](const Array& e, int r) { return from_plane_array(dilate(StrengthMap(to_plane(e)), r)); },
        py::arg("e"), py::arg("radius"));
  m.def("erode", [](const Array& e, int r) { return from_plane_array(erode(StrengthMap(to_plane(e)), r)); },
        py::arg("e"), py::arg("radius"));

  // model
  py::class_<Model>(m, "Model")
      .def_static("reference", [](int w, int h, int c, int classes, std::uint64_t seed) {
        return Model::reference({w, h, c}, classes, seed);
      }, py::arg("width"), py::arg("height"), py::arg("channels"), py::arg("classes"), py::arg("seed"))
      .def_static("load", &load_weights)
      .def("save", [](const Model& self, const std::filesystem::path& p) { save_weights(self, p); })
      .def_property_readonly("num_classes", &Model::num_classes)
      .def_property_readonly("architecture", &Model::architecture)
      .def("parameter_count", &Model::parameter_count)
      .def("predict", [](const Model& self, const Array& x) {
        const Prediction p = forward(self, to_image(x));
        return py::make_tuple(p.label, p.certainty, p.probabilities);
      })
      .def("loss", [](const Model& self, const Array& x, int label) { return loss(self, to_image(x), label); })
      .def("input_gradient", [](const Model& self, const Array& x, int label) {
        const Image img = to_image(x);
        const InputGradient g = input_gradient(self, img, label);
        Array out(from_image(img).request().shape);
        std::copy(g.data.begin(), g.data.end(), out.mutable_data());
        return out;
      });

  m.def("train_synthetic", [](int per_class, int test_per_class, int epochs, double lr, std::uint64_t seed) {
    const Dataset tr = make_synthetic_dataset(per_class, seed);
    const Dataset te = make_synthetic_dataset(test_per_class, seed + 1);
    TrainOptions o;
    o.epochs = epochs;
    o.learning_rate = lr;
    o.seed = seed;
    TrainResult r = [&] {
      py::gil_scoped_release release;
      return train(Model::reference(tr.front().image.shape(), kSyntheticClasses, seed), tr, te, o);
    }();
    return py::make_tuple(std::move(r.model), r.train_accuracy, r.test_accuracy);
  }, py::arg("per_class"), py::arg("test_per_class"), py::arg("epochs") = 8, py::arg("lr") = 0.05,
     py::arg("seed") = 1);
  m.def("synthetic_dataset", [](int per_class, std::uint64_t seed) {
    py::list images, labels;
    for (const Sample& s : make_synthetic_dataset(per_class, seed)) {
      images.append(from_image(s.image));
      labels.append(s.label);
    }
    return py::make_tuple(images, labels);
  }, py::arg("per_class"), py::arg("seed") = 1);

  // attacks
  m.def("fgsm", [](const Model& model, const Array& x, double eps) { return result_dict(fgsm(model, to_image(x), eps)); },
        py::arg("model"), py::arg("image"), py::arg("eps"));
  m.def("bim", [](const Model& model, const Array& x, std::optional<int> target, double certainty, double stepsize,
                  int max_iter, double budget) {
    return result_dict(bim(model, to_image(x), make_config(target, certainty, stepsize, max_iter, budget)));
  }, py::arg("model"), py::arg("image"), py::arg("target_label") = py::none(), py::arg("certainty") = 0.99,
     py::arg("stepsize") = 0.004, py::arg("max_iter") = 1000, py::arg("linf_budget") = 1.0);
  m.def("localized_bim", [](const Model& model, const Array& x, const Array& e, std::optional<int> target,
                            double certainty, double stepsize, int max_iter, double budget) {
    return result_dict(localized_bim(model, to_image(x), make_config(target, certainty, stepsize, max_iter, budget),
                                     StrengthMap(to_plane(e))));
  }, py::arg("model"), py::arg("image"), py::arg("strength_map"), py::arg("target_label") = py::none(),
     py::arg("certainty") = 0.99, py::arg("stepsize") = 0.004, py::arg("max_iter") = 1000,
     py::arg("linf_budget") = 1.0);
  m.def("ebim", [](const Model& model, const Array& x, std::optional<int> target, double certainty, double stepsize,
                   int max_iter, double budget, double threshold) {
    EntropyParams p;
    p.threshold = threshold;
    return result_dict(ebim_attack(model, to_image(x), make_config(target, certainty, stepsize, max_iter, budget), p));
  }, py::arg("model"), py::arg("image"), py::arg("target_label") = py::none(), py::arg("certainty") = 0.99,
     py::arg("stepsize") = 0.004, py::arg("max_iter") = 1000, py::arg("linf_budget") = 1.0,
     py::arg("entropy_threshold") = kDefaultEntropyThreshold);

  // statistics
  m.def("paired_t", [](std::vector<double> a, std::vector<double> b, const std::string& tail) {
    return report_dict(paired_t_one_tailed(a, b, to_tail(tail)));
  }, py::arg("a"), py::arg("b"), py::arg("tail") = "greater");
  m.def("one_sample_t", [](std::vector<double> a, double mu0, const std::string& tail) {
    return report_dict(one_sample_t_one_tailed(a, mu0, to_tail(tail)));
  }, py::arg("a"), py::arg("mu0"), py::arg("tail") = "greater");
  m.def("wilcoxon", [](std::vector<double> d, const std::string& tail) {
    return report_dict(wilcoxon_signed_rank(d, to_tail(tail)));
  }, py::arg("d"), py::arg("tail") = "greater");
  m.def("shapiro_wilk", [](std::vector<double> x) { return report_dict(shapiro_wilk(x)); });
  m.def("cohens_d", [](std::vector<double> a, std::vector<double> b) { return cohens_d_paired(a, b); });
  m.def("t_power", &t_power, py::arg("d"), py::arg("n"), py::arg("alpha") = kStudyAlpha);
  m.def("aggregate_responses", [](const std::filesystem::path& jsonl) {
    return aggregate_results(read_responses(jsonl)).dump();
  }, "Aggregate report of a response log, as a JSON string.");
}
