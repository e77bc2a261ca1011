#pragma once

#include <limits>

#include "lumidiff/autodiff.hpp"
#include "lumidiff/imaging.hpp"

namespace lumidiff::losses {

struct LossWeights {
    double omega = 0.1;       ///< illumination smoothness
    double varpi = 0.2;       ///< semantic guidance
    double vartheta1 = 1.0;   ///< spectral amplitude
    double vartheta2 = 1.0;   ///< spectral phase
    /// Bandwidth of the smoothness weights; +inf gives uniform weights.
    double gamma_sigma = 0.1;
    int ssim_window = 11;
    double ssim_k1 = 0.01;
    double ssim_k2 = 0.03;
    int spa_region = 4;

    void validate() const;
};

/// Gaussian-window SSIM settings. The default is the usual 11-tap, sigma 1.5,
/// dynamic range 1 form; it is the only SSIM used anywhere in the library.
struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    static SsimParams from(const LossWeights& w) { return {w.ssim_window, 1.5, w.ssim_k1, w.ssim_k2, 1.0}; }
};

/// Normalized 1-D Gaussian taps.
std::vector<double> gaussian_taps(int window, double sigma);

/// Mean SSIM over channels and 'valid' window positions.
ad::Var ssim(const ad::Var& a, const ad::Var& b, const SsimParams& p = {});
double ssim(const Tensor& a, const Tensor& b, const SsimParams& p = {});

/// mean((eps_pred - eps_true)^2) + mean((illum_hat - illum)^2).
ad::Var diffusion_loss(const ad::Var& eps_true, const ad::Var& eps_pred, const ad::Var& illum_hat,
                       const ad::Var& illum);
double diffusion_loss(const Tensor& eps_true, const Tensor& eps_pred, const Image& illum_hat, const Image& illum);

/// Edge-aware smoothness over a 5 x 5 neighbourhood:
///   (1/N) sum_k (1/|K(k)|) sum_{n in K(k), n != k} gamma_kn (|dIhat|_1 + |dI|_1),
/// K(k) clipped at the borders,
/// with channel-mean absolute differences and
///   gamma_kn = exp(-sum_c (I_k,c - I_n,c)^2 / (2 sigma^2)).
ad::Var smooth_loss(const ad::Var& illum_hat, const ad::Var& illum, const LossWeights& w);
double smooth_loss(const Image& illum_hat, const Image& illum, const LossWeights& w);

/// (1 - SSIM(lap(E), lap(R))) + (1 - SSIM(E, R)).
ad::Var content_loss(const ad::Var& enhanced, const ad::Var& structure, const LossWeights& w);
double content_loss(const Image& enhanced, const Image& structure, const LossWeights& w);

/// Amplitude/phase L1 between DFTs of the stacked detail subbands [LH|HL|HH].
/// Phase differences are wrapped to (-pi, pi].
ad::Var spectral_loss(const ad::Var& enhanced, const ad::Var& structure, const LossWeights& w);
double spectral_loss(const Image& enhanced, const Image& structure, const LossWeights& w);

/// Sum of squared differences of channel means over (R,G), (R,B), (G,B).
ad::Var color_loss(const ad::Var& enhanced);
double color_loss(const Image& enhanced);

/// Region-level spatial consistency on channel-averaged spa_region x spa_region
/// block means; each 4-neighbour pair counts in both directions; divided by the
/// number of regions.
ad::Var spa_loss(const ad::Var& enhanced, const ad::Var& low, const LossWeights& w);
double spa_loss(const Image& enhanced, const Image& low, const LossWeights& w);

struct RecParts {
    double content = 0.0;
    double spectral = 0.0;
    double prob = 0.0;
    double clip = 0.0;
};

/// content + spectral + varpi * (prob + clip).
double rec_loss(const RecParts& parts, const LossWeights& w);
ad::Var rec_loss(const ad::Var& content, const ad::Var& spectral, const ad::Var& prob, const ad::Var& clip,
                 const LossWeights& w);

struct TotalParts {
    double diff = 0.0;
    double smooth = 0.0;
    double rec = 0.0;
    double col = 0.0;
    double spa = 0.0;
};

struct LossBreakdown {
    double diff = 0.0;
    double smooth = 0.0;
    double rec = 0.0;
    double col = 0.0;
    double spa = 0.0;
    double total = 0.0;

    bool all_finite() const noexcept;
};

/// diff + omega * smooth + rec + col + spa, with the breakdown.
LossBreakdown total_loss(const TotalParts& parts, const LossWeights& w);
ad::Var total_loss(const ad::Var& diff, const ad::Var& smooth, const ad::Var& rec, const ad::Var& col,
                   const ad::Var& spa, const LossWeights& w);

}  // namespace lumidiff::losses
