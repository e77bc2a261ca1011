#pragma once

#include "lumidiff/autodiff.hpp"
#include "lumidiff/imaging.hpp"
#include "lumidiff/tensor.hpp"

/// Deterministic frequency-domain transforms.
///
/// Haar convention (orthonormal, rows then columns). For a 2x2 block
/// [[a, b], [c, d]]:
///   LL = (a + b + c + d) / 2     LH = (a + b - c - d) / 2
///   HL = (a - b + c - d) / 2     HH = (a - b - c + d) / 2
/// so a constant image c maps to LL = 2c and zero details.
///
/// The DFT is the unnormalized forward transform
///   X[u, v] = sum_{y, x} x[y, x] exp(-2 pi i (u y / H + v x / W)),
/// applied per channel.
namespace lumidiff::frequency {

struct WaveletPyramid {
    Tensor ll;
    Tensor lh;
    Tensor hl;
    Tensor hh;
};

WaveletPyramid dwt2(const Tensor& x);
inline WaveletPyramid dwt2(const Image& img) { return dwt2(img.tensor()); }
Tensor idwt2(const WaveletPyramid& pyr);

struct Spectrum {
    Tensor amp;  ///< magnitude, >= 0
    Tensor pha;  ///< principal argument in (-pi, pi]
};

Spectrum dft_amp_pha(const Tensor& x);
/// Real part of the inverse DFT of amp * exp(i pha).
Tensor inverse_dft(const Spectrum& s);

/// 5-point Laplacian [[0,1,0],[1,-4,1],[0,1,0]] with replicate padding.
Tensor laplacian(const Tensor& x);
inline Tensor laplacian(const Image& img) { return laplacian(img.tensor()); }

/// Wraps angles into (-pi, pi].
double wrap_angle(double a) noexcept;

// ---- differentiable forms ------------------------------------------------------
/// Subbands stacked along channels: [LL | LH | HL | HH], each C channels.
ad::Var dwt2(const ad::Var& x);
/// Inverse of the stacked layout produced by dwt2.
ad::Var idwt2(const ad::Var& stacked);
ad::Var laplacian(const ad::Var& x);
/// [amp | pha] stacked along channels.
ad::Var dft_amp_pha(const ad::Var& x);
/// Derivative 1 almost everywhere.
ad::Var wrap_angle(const ad::Var& x);

}  // namespace lumidiff::frequency
