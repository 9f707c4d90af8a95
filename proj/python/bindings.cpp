// pybind11 bindings for the cbctcad core: volumes move across the boundary as
// numpy float32 arrays with (z, y, x) axis order.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>

#include "cbctcad/denoise.hpp"
#include "cbctcad/diagnosis.hpp"
#include "cbctcad/errors.hpp"
#include "cbctcad/fdk.hpp"
#include "cbctcad/harness.hpp"
#include "cbctcad/io.hpp"
#include "cbctcad/metrics.hpp"
#include "cbctcad/phantom.hpp"
#include "cbctcad/projector.hpp"

namespace py = pybind11;
using namespace cbctcad;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::array_t<float> volume_to_numpy(const Volume& v) {
    py::array_t<float> arr({v.dims[2], v.dims[1], v.dims[0]});
    std::copy(v.data.begin(), v.data.end(), arr.mutable_data());
    return arr;
}

Volume numpy_to_volume(const FloatArray& arr, const std::array<double, 3>& spacing_mm) {
    if (arr.ndim() != 3) throw std::invalid_argument("expected a 3-d array (z, y, x)");
    const std::array<int, 3> dims{static_cast<int>(arr.shape(2)),
                                  static_cast<int>(arr.shape(1)),
                                  static_cast<int>(arr.shape(0))};
    Volume v = Volume::centered(dims, spacing_mm);
    std::copy(arr.data(), arr.data() + arr.size(), v.data.begin());
    return v;
}

Image numpy_to_image(const FloatArray& arr) {
    if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-d array (rows, cols)");
    Image img(static_cast<int>(arr.shape(1)), static_cast<int>(arr.shape(0)));
    std::copy(arr.data(), arr.data() + arr.size(), img.data.begin());
    return img;
}

py::array_t<float> image_to_numpy(const Image& img) {
    py::array_t<float> arr({img.height, img.width});
    std::copy(img.data.begin(), img.data.end(), arr.mutable_data());
    return arr;
}

py::array_t<float> projections_to_numpy(const ProjectionSet& set) {
    const int n = static_cast<int>(set.views.size());
    const int px = set.geom.detector_px;
    py::array_t<float> arr({n, px, px});
    float* out = arr.mutable_data();
    for (const auto& view : set.views) {
        out = std::copy(view.data.begin(), view.data.end(), out);
    }
    return arr;
}

ConeBeamGeometry sparse_geometry(int n_views) {
    if (n_views < 2) throw std::invalid_argument("need at least 2 views");
    ConeBeamGeometry g = make_default_geometry();
    g.angles_deg = half_scan_angles(180.0 / n_views, 180.0);
    return g;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "cone-beam CT simulation, denoising, and sinus diagnosis core";

    py::register_exception<FieldOfViewError>(m, "FieldOfViewError");
    py::register_exception<InsufficientCoverageError>(m, "InsufficientCoverageError");
    py::register_exception<NoSinusFoundError>(m, "NoSinusFoundError");
    py::register_exception<TrainingFailureError>(m, "TrainingFailureError");

    py::class_<ConeBeamGeometry>(m, "Geometry")
        .def(py::init<>())
        .def_readwrite("sod_mm", &ConeBeamGeometry::sod_mm)
        .def_readwrite("oid_mm", &ConeBeamGeometry::oid_mm)
        .def_readwrite("detector_mm", &ConeBeamGeometry::detector_mm)
        .def_readwrite("detector_px", &ConeBeamGeometry::detector_px)
        .def_readwrite("angles_deg", &ConeBeamGeometry::angles_deg)
        .def("coverage_deg", &ConeBeamGeometry::coverage_deg)
        .def("to_json", [](const ConeBeamGeometry& g) { return geometry_to_json(g).dump(); });

    m.def("default_geometry", &make_default_geometry,
          "90 half-scan views, 2 degree steps, 256 px detector.");
    m.def("sparse_geometry", &sparse_geometry, py::arg("n_views"),
          "Default geometry resampled to n uniform half-scan views.");
    m.def("half_scan_angles", &half_scan_angles, py::arg("step_deg"),
          py::arg("arc_deg") = 180.0);

    m.def(
        "generate_phantom",
        [](std::uint64_t seed, const std::string& left, const std::string& right,
           std::array<int, 3> dims, double extent_mm) {
            const GeneratedCase c = generate_case(seed, label_from_name(left),
                                                  label_from_name(right), dims, extent_mm);
            return py::make_tuple(volume_to_numpy(c.labeled.volume),
                                  c.labeled.key_slice_range,
                                  c.labeled.volume.spacing_mm);
        },
        py::arg("seed"), py::arg("left") = "healthy", py::arg("right") = "healthy",
        py::arg("dims") = std::array<int, 3>{64, 64, 64}, py::arg("extent_mm") = 180.0,
        "Returns (volume[z,y,x] float32, key_slice_range, spacing_mm).");

    m.def(
        "forward_project",
        [](const FloatArray& vol, std::array<double, 3> spacing_mm,
           const ConeBeamGeometry& geom) {
            return projections_to_numpy(forward_project(numpy_to_volume(vol, spacing_mm), geom));
        },
        py::arg("volume"), py::arg("spacing_mm"), py::arg("geometry"),
        "Cone-beam line integrals, shape (views, rows, cols).");

    m.def(
        "fdk_reconstruct",
        [](const FloatArray& projections, const ConeBeamGeometry& geom,
           std::array<int, 3> dims, std::array<double, 3> spacing_mm,
           const std::string& window, bool parker) {
            if (projections.ndim() != 3) {
                throw std::invalid_argument("expected projections of shape (views, rows, cols)");
            }
            const int n = static_cast<int>(projections.shape(0));
            const int rows = static_cast<int>(projections.shape(1));
            const int cols = static_cast<int>(projections.shape(2));
            if (n != static_cast<int>(geom.angles_deg.size()) || rows != geom.detector_px ||
                cols != geom.detector_px) {
                throw std::invalid_argument("projection shape does not match the geometry");
            }
            ProjectionSet set;
            set.geom = geom;
            const float* p = projections.data();
            const std::size_t per_view = static_cast<std::size_t>(rows) * cols;
            for (int i = 0; i < n; ++i) {
                Image view(cols, rows);
                std::copy(p, p + per_view, view.data.begin());
                p += per_view;
                set.views.push_back(std::move(view));
            }
            FdkOptions opt;
            opt.dims = dims;
            opt.spacing_mm = spacing_mm;
            opt.window = filter_window_from_name(window);
            opt.parker = parker;
            return volume_to_numpy(fdk_reconstruct(set, opt));
        },
        py::arg("projections"), py::arg("geometry"),
        py::arg("dims") = std::array<int, 3>{64, 64, 64},
        py::arg("spacing_mm") = std::array<double, 3>{2.8125, 2.8125, 2.8125},
        py::arg("window") = "hann", py::arg("parker") = false);

    m.def(
        "synthesize_pcbct",
        [](const FloatArray& vol, std::array<double, 3> spacing_mm, int n_views) {
            const Volume clean = numpy_to_volume(vol, spacing_mm);
            return volume_to_numpy(synthesize_pcbct(clean, sparse_geometry(n_views)));
        },
        py::arg("volume"), py::arg("spacing_mm"), py::arg("n_views") = 90,
        "Sparse-view projection + FDK round trip onto the same grid.");

    m.def(
        "tv_denoise",
        [](const FloatArray& img, double weight, int iterations) {
            return image_to_numpy(tv_denoise(numpy_to_image(img),
                                             TvConfig{weight, iterations, 0.125}));
        },
        py::arg("image"), py::arg("weight") = 0.1, py::arg("iterations") = 40);

    py::class_<Denoiser>(m, "Denoiser")
        .def_static("load", [](const std::filesystem::path& p) { return load_denoiser(p); })
        .def("denoise_volume",
             [](const Denoiser& d, const FloatArray& vol, std::array<double, 3> spacing_mm) {
                 return volume_to_numpy(d.denoise_volume(numpy_to_volume(vol, spacing_mm)));
             },
             py::arg("volume"), py::arg("spacing_mm") = std::array<double, 3>{1, 1, 1});

    py::class_<DiagnosisModel>(m, "DiagnosisModel")
        .def_static("load",
                    [](const std::filesystem::path& p) { return load_diagnosis_model(p); })
        .def("diagnose",
             [](const DiagnosisModel& model, const FloatArray& vol,
                std::array<double, 3> spacing_mm) {
                 const Diagnosis d = diagnose(model.selector, model.classifier,
                                              numpy_to_volume(vol, spacing_mm));
                 py::dict out;
                 out["slice_interval"] = d.slice_interval;
                 py::list sides;
                 for (const auto& s : d.sides) {
                     py::dict side;
                     side["label"] = label_name(s.label);
                     side["probabilities"] = s.probabilities;
                     sides.append(side);
                 }
                 out["sides"] = sides;
                 return out;
             },
             py::arg("volume"), py::arg("spacing_mm") = std::array<double, 3>{1, 1, 1});

    m.def(
        "psnr",
        [](const FloatArray& a, const FloatArray& b, double data_range) {
            return psnr(numpy_to_image(a), numpy_to_image(b), data_range);
        },
        py::arg("reference"), py::arg("test"), py::arg("data_range") = 1.0);

    m.def(
        "ssim",
        [](const FloatArray& a, const FloatArray& b, double data_range) {
            SsimOptions opt;
            opt.data_range = data_range;
            return ssim(numpy_to_image(a), numpy_to_image(b), opt);
        },
        py::arg("reference"), py::arg("test"), py::arg("data_range") = 1.0);

    m.def("roc_auc", &roc_auc, py::arg("labels"), py::arg("scores"));

    m.def(
        "run_experiment",
        [](const std::string& config_json, const std::string& out_dir) {
            ExperimentConfig cfg;
            if (!config_json.empty()) {
                cfg = experiment_config_from_json(Json::parse(config_json));
            }
            if (!out_dir.empty()) cfg.out_dir = out_dir;
            const ExperimentResult result = run_experiment(cfg);
            py::dict out;
            out["out_dir"] = result.out_dir.string();
            out["table"] = comparison_to_table(result.comparison);
            return out;
        },
        py::arg("config_json") = std::string{}, py::arg("out_dir") = std::string{},
        "Runs the two-arm study; reports land in out_dir/reports.");
}
