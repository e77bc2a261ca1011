#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lumidiff/tensor.hpp"

namespace lumidiff {

/// H x W x C raster with intensities in [0, 1], stored planar (C x H x W).
/// C is 1 or 3 (RGB). Construction validates range and finiteness.
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels, double fill = 0.0);
    /// Takes ownership of a C x H x W tensor; throws unless it is a valid image.
    explicit Image(Tensor pixels);

    /// Clamps into [0, 1] first (non-finite values are still rejected).
    static Image clamped(Tensor pixels);

    int height() const noexcept { return pixels_.height(); }
    int width() const noexcept { return pixels_.width(); }
    int channels() const noexcept { return pixels_.channels(); }
    const Tensor& tensor() const noexcept { return pixels_; }
    double operator()(int c, int y, int x) const noexcept { return pixels_(c, y, x); }
    bool empty() const noexcept { return pixels_.empty(); }

private:
    Tensor pixels_;
};

void validate_image_tensor(const Tensor& t);

Image load_image(const std::filesystem::path& path);
/// Writes an 8-bit PNG with round-half-up quantization.
void save_image(const Image& img, const std::filesystem::path& path);

/// Center-crops to even height and width.
Image crop_to_even(const Image& img);
Image crop(const Image& img, int y0, int x0, int h, int w);
/// Replicates a single channel to RGB; RGB passes through.
Image to_rgb(const Image& img);

struct DatasetSpec {
    std::filesystem::path root;
    std::string glob = "*.png";
    int patch_size = 256;
    int batch_size = 4;
    std::uint64_t shuffle_seed = 0;

    void validate() const;
};

/// Files directly inside `root` whose names match `glob`, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& root, const std::string& glob);

/// Loaded training images. Only low-light inputs are read.
class Dataset {
public:
    explicit Dataset(DatasetSpec spec);

    const DatasetSpec& spec() const noexcept { return spec_; }
    std::size_t size() const noexcept { return images_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }

    /// batch_size random patch_size x patch_size x 3 crops; a pure function of
    /// (contents, spec, seed).
    std::vector<Image> sample_batch(std::uint64_t seed) const;

private:
    DatasetSpec spec_;
    std::vector<Image> images_;
    std::vector<std::string> names_;
};

std::vector<Image> sample_batch(const DatasetSpec& spec, std::uint64_t seed);

}  // namespace lumidiff
