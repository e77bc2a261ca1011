#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lumidiff/imaging.hpp"
#include "lumidiff/losses.hpp"

namespace lumidiff::metrics {

/// 10 log10(1 / MSE); +inf when the images are identical.
double psnr(const Image& a, const Image& b);

/// Mean SSIM, the same routine used by the content loss.
double ssim(const Image& a, const Image& b, const losses::SsimParams& p = {});

/// Lightness order error: max-channel lightness, nearest-sampled to at most
/// size x size, mean XOR of pairwise ">=" indicators over all ordered pairs, x 1000.
double loe(const Image& enhanced, const Image& original, int size = 50);

// ---- NIQE ----------------------------------------------------------------

inline constexpr int kNiqeFeatures = 36;

struct NiqeModel {
    int patch_size = 96;
    std::vector<double> mu;   ///< D
    std::vector<double> cov;  ///< D x D, row-major

    int dim() const noexcept { return static_cast<int>(mu.size()); }
    void validate() const;
    void save(const std::filesystem::path& path) const;
    static NiqeModel load(const std::filesystem::path& path);
    bool operator==(const NiqeModel&) const = default;
};

/// ITU-R 601 luma on a 0..255 scale, 1 x H x W.
Tensor luma255(const Image& img);

/// Mean-subtracted contrast-normalized coefficients with a 7x7 Gaussian
/// (sigma 7/6) and replicate borders. Optionally returns the local deviation map.
Tensor mscn(const Tensor& gray, Tensor* local_sigma = nullptr);

/// 18 natural-scene-statistics features of one MSCN patch.
std::vector<double> patch_features(const Tensor& mscn_patch);

/// Per-patch 36-dimensional features (two scales). When `sharpness` is given it
/// receives the mean local deviation of each patch at the finest scale.
std::vector<std::vector<double>> image_features(const Image& img, int patch_size,
                                                std::vector<double>* sharpness = nullptr);

double niqe(const Image& img, const NiqeModel& model);

/// Fits a pristine model from natural images, keeping patches whose sharpness
/// exceeds `sharpness_fraction` of the per-image maximum.
NiqeModel fit_niqe(const std::vector<Image>& pristine, int patch_size = 96, double sharpness_fraction = 0.75);

// ---- directory evaluation ----------------------------------------------

struct ImageScores {
    std::string name;
    std::optional<double> psnr;
    std::optional<double> ssim;
    std::optional<double> niqe;
    std::optional<double> loe;
};

struct MeanScores {
    std::optional<double> psnr;
    std::optional<double> ssim;
    std::optional<double> niqe;
    std::optional<double> loe;
    int psnr_inf_count = 0;  ///< images with infinite PSNR, left out of the PSNR mean
};

struct Report {
    std::vector<ImageScores> per_image;
    MeanScores means;
    std::string config_hash;

    std::string to_json() const;
    std::string to_csv() const;
    void write(const std::filesystem::path& json_path, const std::filesystem::path& csv_path) const;
};

struct EvaluateOptions {
    std::filesystem::path enhanced;
    std::optional<std::filesystem::path> reference;
    /// Low-light originals for LOE; falls back to `reference`. Without either, LOE is skipped.
    std::optional<std::filesystem::path> originals;
    std::optional<NiqeModel> niqe_model;
    int loe_size = 50;
    std::string config_hash;
};

/// Scores every image in `enhanced`. Filenames must match across directories;
/// orphans raise DataError listing them.
Report evaluate_pairs(const EvaluateOptions& options);

}  // namespace lumidiff::metrics
