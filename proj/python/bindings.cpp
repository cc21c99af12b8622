// Python bindings. Masks cross the boundary as (H, W) uint8 arrays, images
// as (3, H, W) float64 arrays and pixel lists as (N, 2) int arrays of (x, y).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "leprompter/backbone.hpp"
#include "leprompter/error.hpp"
#include "leprompter/morphology.hpp"
#include "leprompter/promptgen.hpp"
#include "leprompter/raster_io.hpp"
#include "leprompter/trainer.hpp"

namespace py = pybind11;
using namespace leprompter;

namespace {

using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using ImageArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

BinaryMask to_mask(const MaskArray& a) {
    if (a.ndim() != 2) throw ShapeError("mask must be a 2-D array");
    const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    return BinaryMask(w, h, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

MaskArray from_mask(const BinaryMask& m) {
    MaskArray out({m.height(), m.width()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

Image to_image(const ImageArray& a) {
    if (a.ndim() != 3 || a.shape(0) != 3) throw ShapeError("image must have shape (3, H, W)");
    Image img(static_cast<int>(a.shape(2)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), img.data.begin());
    return img;
}

ImageArray from_image(const Image& img) {
    ImageArray out({3, img.height, img.width});
    std::copy(img.data.begin(), img.data.end(), out.mutable_data());
    return out;
}

ImageArray from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    ImageArray out(shape);
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

py::array_t<int> from_pixels(const std::vector<Pixel>& pts) {
    py::array_t<int> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{2}});
    auto r = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        r(i, 0) = pts[i].x;
        r(i, 1) = pts[i].y;
    }
    return out;
}

std::vector<Pixel> to_pixels(const py::array_t<int, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2 || a.shape(1) != 2) throw ShapeError("pixel list must have shape (N, 2)");
    std::vector<Pixel> pts;
    auto r = a.unchecked<2>();
    for (py::ssize_t i = 0; i < a.shape(0); ++i) pts.push_back({r(i, 0), r(i, 1)});
    return pts;
}

py::dict metrics_dict(const Metrics& m) {
    py::dict d;
    d["oa"] = m.oa;
    d["f1"] = m.f1;
    d["miou"] = m.miou;
    d["tp"] = m.confusion.tp;
    d["fp"] = m.confusion.fp;
    d["fn"] = m.confusion.fn;
    d["tn"] = m.confusion.tn;
    return d;
}

std::vector<PixelCluster> clusters_of(const BinaryMask& m, double eps, int min_pts) {
    return dbscan(m, {eps, min_pts});
}

Scene scene_from(const py::handle& obj) {
    auto d = obj.cast<py::dict>();
    Scene s;
    s.id = d["id"].cast<std::string>();
    s.image = to_image(d["image"].cast<ImageArray>());
    s.mask = to_mask(d["mask"].cast<MaskArray>());
    return s;
}

py::dict scene_dict(const Scene& s) {
    py::dict d;
    d["id"] = s.id;
    d["image"] = from_image(s.image);
    d["mask"] = from_mask(s.mask);
    return d;
}

std::vector<Scene> scenes_from(const py::iterable& items) {
    std::vector<Scene> out;
    for (auto item : items) out.push_back(scene_from(item));
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Lake prompt benchmark synthesis and prompt-enhanced segmentation";

    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ShapeError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const IoError& e) {
            PyErr_SetString(PyExc_OSError, e.what());
        }
    });

    m.def("load_mask", [](const std::filesystem::path& p) { return from_mask(load_mask(p)); }, py::arg("path"));
    m.def("save_mask", [](const MaskArray& a, const std::filesystem::path& p) { save_mask(to_mask(a), p); },
          py::arg("mask"), py::arg("path"));

    m.def("synth", [](int count, int size, std::uint64_t seed, int blob_min, int blob_max, double noise_std) {
              SynthConfig c{count, size, seed, blob_min, blob_max, noise_std};
              c.validate();
              py::list out;
              for (const auto& s : gen_synthetic_dataset(c)) out.append(scene_dict(s));
              return out;
          },
          py::arg("count") = 16, py::arg("size") = 32, py::arg("seed") = 0, py::arg("blob_min") = 1,
          py::arg("blob_max") = 3, py::arg("noise_std") = 0.1,
          "List of scenes as dicts with 'id', 'image' (3, H, W) and 'mask' (H, W).");

    m.def("dbscan", [](const MaskArray& a, double eps, int min_pts) {
              py::list out;
              for (const auto& c : clusters_of(to_mask(a), eps, min_pts)) out.append(from_pixels(c.pixels));
              return out;
          },
          py::arg("mask"), py::arg("eps") = 1.5, py::arg("min_pts") = 4);

    auto morph = [](BinaryMask (*op)(const BinaryMask&, const StructuringElement&, int)) {
        return [op](const MaskArray& a, int se_size, int iterations) {
            return from_mask(op(to_mask(a), StructuringElement::square(se_size), iterations));
        };
    };
    m.def("dilate", morph(&dilate), py::arg("mask"), py::arg("se_size") = 3, py::arg("iterations") = 1);
    m.def("erode", morph(&erode), py::arg("mask"), py::arg("se_size") = 3, py::arg("iterations") = 1);
    m.def("close", [](const MaskArray& a, int se_size) {
              return from_mask(close(to_mask(a), StructuringElement::square(se_size)));
          },
          py::arg("mask"), py::arg("se_size") = 3);
    m.def("trace_contours", [](const MaskArray& a) {
              py::list out;
              for (const auto& c : trace_contours(to_mask(a))) out.append(from_pixels(c.points));
              return out;
          },
          py::arg("mask"));
    m.def("fill_contours", [](const std::vector<py::array_t<int, py::array::c_style | py::array::forcecast>>& cs,
                              int width, int height) {
              std::vector<Contour> contours;
              for (const auto& c : cs) contours.push_back({to_pixels(c), true});
              return from_mask(fill_contours(contours, width, height));
          },
          py::arg("contours"), py::arg("width"), py::arg("height"));

    m.def("gen_random_points", [](const MaskArray& a, int k, std::uint64_t seed, double eps, int min_pts) {
              const auto mask = to_mask(a);
              return from_pixels(gen_random_points(mask, clusters_of(mask, eps, min_pts), k, seed).prompt.points);
          },
          py::arg("mask"), py::arg("k") = 3, py::arg("seed") = 0, py::arg("eps") = 1.5, py::arg("min_pts") = 4);
    m.def("gen_center_points",
          [](const MaskArray& a, int k, std::uint64_t seed, int shift, double eps, int min_pts) {
              const auto mask = to_mask(a);
              return from_pixels(
                  gen_center_points(mask, clusters_of(mask, eps, min_pts), k, seed, shift).prompt.points);
          },
          py::arg("mask"), py::arg("k") = 9, py::arg("seed") = 0, py::arg("shift") = 2, py::arg("eps") = 1.5,
          py::arg("min_pts") = 4);
    m.def("gen_box", [](const MaskArray& a, double eps, int min_pts) -> py::object {
              const auto box = gen_box(clusters_of(to_mask(a), eps, min_pts));
              if (!box) return py::none();
              return py::make_tuple(box->x_min, box->y_min, box->x_max, box->y_max);
          },
          py::arg("mask"), py::arg("eps") = 1.5, py::arg("min_pts") = 4, "(x_min, y_min, x_max, y_max) or None");
    m.def("gen_unfilled_mask", [](const MaskArray& a, std::uint64_t seed, double ratio) {
              UnfilledMaskParams p;
              p.sample_ratio = ratio;
              const auto r = gen_unfilled_mask(to_mask(a), seed, p);
              return py::make_tuple(from_mask(r.prompt.raster), r.sample_count);
          },
          py::arg("mask"), py::arg("seed") = 0, py::arg("ratio") = 0.008, "(raster, sample_count)");
    m.def("gen_filled_mask", [](const MaskArray& a) {
              return from_mask(gen_filled_mask({MaskKind::Unfilled, to_mask(a)}).raster);
          },
          py::arg("unfilled"));

    m.def("build_benchmark",
          [](const py::iterable& scenes, std::uint64_t seed, int points, double eps, int min_pts,
             std::optional<std::filesystem::path> out_dir, int jobs) {
              BenchmarkConfig c;
              c.master_seed = seed;
              c.point_count = points;
              c.dbscan = {eps, min_pts};
              c.jobs = jobs;
              const auto data = scenes_from(scenes);
              std::string text;
              {
                  py::gil_scoped_release release;
                  text = manifest_to_json(build_benchmark(data, c, out_dir));
              }
              return py::module_::import("json").attr("loads")(text);
          },
          py::arg("scenes"), py::arg("seed") = 0, py::arg("points") = kMaxPoints, py::arg("eps") = 1.5,
          py::arg("min_pts") = 4, py::arg("out_dir") = py::none(), py::arg("jobs") = 1,
          "Manifest as a dict; rasters and manifest.json are written when out_dir is given.");

    m.def("compute_metrics", [](const MaskArray& pred, const MaskArray& gt) {
              return metrics_dict(compute_metrics(to_mask(pred), to_mask(gt)));
          },
          py::arg("pred"), py::arg("gt"));
    m.def("metrics_from_confusion", [](std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn) {
              return metrics_dict(metrics_from_confusion({tp, fp, fn, tn}));
          },
          py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn"));

    py::class_<LakeModel>(m, "Model")
        .def(py::init([](int channels, int heads, int mlp_hidden, int reduction, int input_size, std::uint64_t seed) {
                 ModelConfig c;
                 c.seed = seed;
                 c.backbone.channels = channels;
                 c.backbone.input_size = input_size;
                 c.prompt.channels = channels;
                 c.prompt.heads = heads;
                 c.prompt.mlp_hidden = mlp_hidden;
                 c.prompt.reduction = reduction;
                 return LakeModel(c);
             }),
             py::arg("channels") = 32, py::arg("heads") = 2, py::arg("mlp_hidden") = 64, py::arg("reduction") = 2,
             py::arg("input_size") = 32, py::arg("seed") = 0)
        .def_static("load", &load_checkpoint, py::arg("path"))
        .def("save", [](const LakeModel& self, const std::filesystem::path& p) { save_checkpoint(self, p); },
             py::arg("path"))
        .def("count_params", &LakeModel::count_params, py::arg("include_prompt") = false)
        .def("logits", [](const LakeModel& self, const ImageArray& img) {
                 return from_tensor(self.forward_prompt_free(to_image(img)).value());
             },
             py::arg("image"), "Prompt-free logits of shape (2, H, W).")
        .def("predict", [](const LakeModel& self, const ImageArray& img) {
                 return from_mask(argmax_mask(self.forward_prompt_free(to_image(img))));
             },
             py::arg("image"))
        .def("evaluate", [](const LakeModel& self, const py::iterable& scenes) {
                 const auto data = scenes_from(scenes);
                 Metrics r;
                 {
                     py::gil_scoped_release release;
                     r = evaluate(self, data);
                 }
                 return metrics_dict(r);
             },
             py::arg("scenes"))
        .def("train",
             [](LakeModel& self, const py::iterable& scenes, const std::optional<std::filesystem::path>& manifest,
                int total_steps, int prompt_steps, int batch_size, double lr, double weight_decay, std::uint64_t seed,
                const std::string& prompt, bool flip) {
                 TrainConfig c;
                 c.total_steps = total_steps;
                 c.prompt_steps = prompt_steps;
                 c.batch_size = batch_size;
                 c.lr = lr;
                 c.weight_decay = weight_decay;
                 c.seed = seed;
                 c.combination = parse_prompt_combination(prompt);
                 c.horizontal_flip = flip;
                 const auto data = scenes_from(scenes);
                 std::optional<BenchmarkManifest> man;
                 if (manifest) man = load_manifest(*manifest);
                 TrainResult r;
                 {
                     py::gil_scoped_release release;
                     r = train_two_stage(self, data, man ? &*man : nullptr, c);
                 }
                 py::list log;
                 for (const auto& s : r.log) {
                     py::dict d;
                     d["step"] = s.step;
                     d["mode"] = to_string(s.mode);
                     d["loss"] = s.loss;
                     log.append(d);
                 }
                 return log;
             },
             py::arg("scenes"), py::arg("manifest") = py::none(), py::arg("total_steps") = 2000,
             py::arg("prompt_steps") = 500, py::arg("batch_size") = 16, py::arg("lr") = 6e-5,
             py::arg("weight_decay") = 0.01, py::arg("seed") = 0, py::arg("prompt") = "random_points:3",
             py::arg("flip") = true, "Two-stage training; returns the step log.");
}
