#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lumidiff/config.hpp"
#include "lumidiff/error.hpp"
#include "lumidiff/frequency.hpp"
#include "lumidiff/losses.hpp"
#include "lumidiff/metrics.hpp"
#include "lumidiff/pipeline.hpp"

namespace py = pybind11;
using namespace lumidiff;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// numpy H x W or H x W x C  <->  planar C x H x W
Tensor to_tensor(const Array& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("expected an H x W or H x W x C array");
    const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
    Tensor t({c, h, w});
    const double* p = a.data();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int k = 0; k < c; ++k) t(k, y, x) = p[(static_cast<std::size_t>(y) * w + x) * c + k];
    return t;
}

Array to_array(const Tensor& t) {
    Array a({t.height(), t.width(), t.channels()});
    double* p = a.mutable_data();
    for (int y = 0; y < t.height(); ++y)
        for (int x = 0; x < t.width(); ++x)
            for (int k = 0; k < t.channels(); ++k)
                p[(static_cast<std::size_t>(y) * t.width() + x) * t.channels() + k] = t(k, y, x);
    return a;
}

Image to_image(const Array& a) { return Image(to_tensor(a)); }

RunConfig config_with(const std::optional<std::filesystem::path>& path, const std::map<std::string, std::string>& overrides) {
    RunConfig cfg = path ? load_config(*path) : RunConfig{};
    apply_overrides(cfg, {overrides.begin(), overrides.end()});
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_lumidiff, m) {
    m.doc() = "Zero-reference low-light enhancement (C++ core)";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<LoadError>(m, "LoadError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());

    m.def("load_image", [](const std::filesystem::path& p) { return to_array(load_image(p).tensor()); }, py::arg("path"),
          "Read an image as float64 H x W x C in [0, 1].");
    m.def("save_image", [](const Array& a, const std::filesystem::path& p) { save_image(to_image(a), p); },
          py::arg("image"), py::arg("path"));

    m.def(
        "dwt2",
        [](const Array& a) {
            const auto p = frequency::dwt2(to_tensor(a));
            return py::make_tuple(to_array(p.ll), to_array(p.lh), to_array(p.hl), to_array(p.hh));
        },
        py::arg("x"), "One-level orthonormal Haar transform: (LL, LH, HL, HH).");
    m.def(
        "idwt2",
        [](const Array& ll, const Array& lh, const Array& hl, const Array& hh) {
            return to_array(frequency::idwt2({to_tensor(ll), to_tensor(lh), to_tensor(hl), to_tensor(hh)}));
        },
        py::arg("ll"), py::arg("lh"), py::arg("hl"), py::arg("hh"));
    m.def(
        "dft_amp_pha",
        [](const Array& a) {
            const auto s = frequency::dft_amp_pha(to_tensor(a));
            return py::make_tuple(to_array(s.amp), to_array(s.pha));
        },
        py::arg("x"), "Per-channel 2-D DFT amplitude and phase.");

    m.def("psnr", [](const Array& a, const Array& b) { return metrics::psnr(to_image(a), to_image(b)); });
    m.def("ssim", [](const Array& a, const Array& b) { return metrics::ssim(to_image(a), to_image(b)); });
    m.def("loe", [](const Array& e, const Array& o, int size) { return metrics::loe(to_image(e), to_image(o), size); },
          py::arg("enhanced"), py::arg("original"), py::arg("size") = 50);
    m.def("niqe",
          [](const Array& a, const std::filesystem::path& model) {
              return metrics::niqe(to_image(a), metrics::NiqeModel::load(model));
          },
          py::arg("image"), py::arg("model"));

    const losses::LossWeights w;
    m.def("color_loss", [](const Array& a) { return losses::color_loss(to_image(a)); });
    m.def("spa_loss", [w](const Array& e, const Array& l) { return losses::spa_loss(to_image(e), to_image(l), w); });
    m.def("content_loss", [w](const Array& e, const Array& r) { return losses::content_loss(to_image(e), to_image(r), w); });
    m.def("spectral_loss", [w](const Array& e, const Array& r) { return losses::spectral_loss(to_image(e), to_image(r), w); });

    m.def(
        "config_toml",
        [](std::optional<std::filesystem::path> path, std::map<std::string, std::string> overrides) {
            return config_with(path, overrides).to_toml();
        },
        py::arg("path") = py::none(), py::arg("overrides") = std::map<std::string, std::string>{},
        "Resolved configuration as canonical TOML.");
    m.def(
        "config_hash",
        [](std::optional<std::filesystem::path> path, std::map<std::string, std::string> overrides) {
            return config_with(path, overrides).hash_hex();
        },
        py::arg("path") = py::none(), py::arg("overrides") = std::map<std::string, std::string>{});

    m.def(
        "train",
        [](std::optional<std::filesystem::path> path, std::map<std::string, std::string> overrides, bool resume) {
            const RunConfig cfg = config_with(path, overrides);
            pipeline::TrainOptions opt;
            opt.resume = resume;
            std::vector<double> totals;
            opt.on_iteration = [&](std::int64_t, const losses::LossBreakdown& b) { totals.push_back(b.total); };
            py::gil_scoped_release release;
            pipeline::train(cfg, opt);
            return totals;
        },
        py::arg("config") = py::none(), py::arg("overrides") = std::map<std::string, std::string>{},
        py::arg("resume") = false, "Train and return the per-iteration total loss.");

    m.def(
        "enhance",
        [](const std::filesystem::path& checkpoint, const Array& image, std::optional<std::uint64_t> seed) {
            const auto model = pipeline::load_checkpoint(checkpoint);
            const Image low = to_image(image);
            pipeline::Enhancement r;
            {
                py::gil_scoped_release release;
                r = pipeline::enhance_image(model, low, seed.value_or(model.config.seed));
            }
            return py::make_tuple(to_array(r.enhanced.tensor()), to_array(r.illumination.tensor()));
        },
        py::arg("checkpoint"), py::arg("image"), py::arg("seed") = py::none(),
        "Enhance one image; returns (enhanced, illumination).");
}
