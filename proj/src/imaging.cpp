#include "lumidiff/imaging.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "lumidiff/error.hpp"
#include "lumidiff/rng.hpp"

namespace fs = std::filesystem;

namespace lumidiff {

void validate_image_tensor(const Tensor& t) {
    const Shape s = t.shape();
    if (s.c != 1 && s.c != 3) throw FormatError("image must have 1 or 3 channels, got " + std::to_string(s.c));
    if (s.h < 2 || s.w < 2) throw ShapeError("image must be at least 2x2, got " + s.str());
    for (double v : t.values()) {
        if (!std::isfinite(v)) throw NumericError("image contains a non-finite value");
        if (v < 0.0 || v > 1.0) throw NumericError("image value " + std::to_string(v) + " outside [0,1]");
    }
}

Image::Image(int height, int width, int channels, double fill) : Image(Tensor({channels, height, width}, fill)) {}

Image::Image(Tensor pixels) : pixels_(std::move(pixels)) { validate_image_tensor(pixels_); }

Image Image::clamped(Tensor pixels) {
    for (double& v : pixels.values())
        if (std::isfinite(v)) v = std::clamp(v, 0.0, 1.0);
    return Image(std::move(pixels));
}

Image load_image(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw IoError("cannot read image " + path.string());
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw IoError("cannot decode image " + path.string());
    const int ch = raw.channels();
    if (ch != 1 && ch != 3 && ch != 4)
        throw FormatError(path.string() + ": unsupported channel count " + std::to_string(ch));
    double scale;
    switch (raw.depth()) {
        case CV_8U: scale = 1.0 / 255.0; break;
        case CV_16U: scale = 1.0 / 65535.0; break;
        default: throw FormatError(path.string() + ": only 8- and 16-bit images are supported");
    }
    const int out_c = ch == 1 ? 1 : 3;
    Tensor t({out_c, raw.rows, raw.cols});
    cv::Mat as_double;
    raw.convertTo(as_double, CV_MAKETYPE(CV_64F, ch), scale);
    for (int y = 0; y < raw.rows; ++y) {
        const double* row = as_double.ptr<double>(y);
        for (int x = 0; x < raw.cols; ++x)
            for (int c = 0; c < out_c; ++c) {
                // OpenCV stores BGR(A); the library works in RGB and drops alpha.
                const int dst = out_c == 3 ? 2 - c : c;
                t(dst, y, x) = row[x * ch + c];
            }
    }
    return crop_to_even(Image(std::move(t)));
}

void save_image(const Image& img, const fs::path& path) {
    const int ch = img.channels();
    cv::Mat out(img.height(), img.width(), CV_MAKETYPE(CV_8U, ch));
    for (int y = 0; y < img.height(); ++y) {
        auto* row = out.ptr<unsigned char>(y);
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < ch; ++c) {
                const int src = ch == 3 ? 2 - c : c;
                const double q = std::floor(img(src, y, x) * 255.0 + 0.5);
                row[x * ch + c] = static_cast<unsigned char>(std::clamp(q, 0.0, 255.0));
            }
    }
    const auto parent = path.parent_path();
    if (!parent.empty() && !fs::is_directory(parent)) throw IoError("output directory missing: " + parent.string());
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), out, {cv::IMWRITE_PNG_COMPRESSION, 6});
    } catch (const cv::Exception& e) {
        throw IoError("cannot write " + path.string() + ": " + e.what());
    }
    if (!ok) throw IoError("cannot write " + path.string());
}

Image crop(const Image& img, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || y0 + h > img.height() || x0 + w > img.width())
        throw ShapeError("crop window exceeds image bounds");
    Tensor t({img.channels(), h, w});
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) t(c, y, x) = img(c, y0 + y, x0 + x);
    return Image(std::move(t));
}

Image crop_to_even(const Image& img) {
    const int h = img.height() & ~1;
    const int w = img.width() & ~1;
    if (h == img.height() && w == img.width()) return img;
    return crop(img, (img.height() - h) / 2, (img.width() - w) / 2, h, w);
}

Image to_rgb(const Image& img) {
    if (img.channels() == 3) return img;
    Tensor t({3, img.height(), img.width()});
    for (int c = 0; c < 3; ++c) std::copy(img.tensor().values().begin(), img.tensor().values().end(), t.channel(c).begin());
    return Image(std::move(t));
}

void DatasetSpec::validate() const {
    if (root.empty()) throw ConfigError("dataset.root: no dataset directory given");
    if (patch_size < 2 || patch_size % 2 != 0) throw ConfigError("dataset.patch_size must be even and >= 2");
    if (batch_size < 1) throw ConfigError("dataset.batch_size must be >= 1");
}

std::vector<fs::path> list_images(const fs::path& root, const std::string& glob) {
    if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (fnmatch(glob.c_str(), name.c_str(), 0) == 0) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

Dataset::Dataset(DatasetSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const auto files = list_images(spec_.root, spec_.glob);
    if (files.empty()) throw DataError("no images matching '" + spec_.glob + "' in " + spec_.root.string());
    for (const auto& f : files) {
        Image img = load_image(f);
        if (img.height() < spec_.patch_size || img.width() < spec_.patch_size) {
            std::cerr << "warning: skipping " << f.filename().string() << " (" << img.width() << "x" << img.height()
                      << " is smaller than patch " << spec_.patch_size << ")\n";
            continue;
        }
        images_.push_back(to_rgb(img));
        names_.push_back(f.filename().string());
    }
    if (images_.empty()) throw DataError("every image in " + spec_.root.string() + " is smaller than the patch size");
}

std::vector<Image> Dataset::sample_batch(std::uint64_t seed) const {
    Rng rng(mix_seed(spec_.shuffle_seed, seed));
    std::vector<Image> batch;
    batch.reserve(spec_.batch_size);
    const int p = spec_.patch_size;
    for (int b = 0; b < spec_.batch_size; ++b) {
        const Image& src = images_[rng.uniform_int(0, static_cast<int>(images_.size()) - 1)];
        const int y0 = rng.uniform_int(0, src.height() - p);
        const int x0 = rng.uniform_int(0, src.width() - p);
        batch.push_back(crop(src, y0, x0, p, p));
    }
    return batch;
}

std::vector<Image> sample_batch(const DatasetSpec& spec, std::uint64_t seed) { return Dataset(spec).sample_batch(seed); }

}  // namespace lumidiff
