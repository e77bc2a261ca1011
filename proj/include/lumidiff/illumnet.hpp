#pragma once

#include <cstdint>
#include <span>

#include "lumidiff/autodiff.hpp"
#include "lumidiff/imaging.hpp"
#include "lumidiff/nn.hpp"

namespace lumidiff::illumnet {

struct IllumNetConfig {
    int hidden = 16;
    int layers = 3;
    /// Floor applied to every Retinex division.
    double epsilon_div = 1e-4;
    /// Initial bias of the squashing layer; sigmoid(0) = 0.5.
    double output_bias = 0.0;
};

/// Upper bound that keeps the estimator lightweight.
inline constexpr std::size_t kMaxParameters = 10000;

/// Small convolutional illumination estimator. The squashed output s in (0,1)
/// is mapped to I_M = I_L + (1 - I_L) * s, so I_L <= I_M <= 1 by construction.
class IllumNet {
public:
    explicit IllumNet(IllumNetConfig config = {}, std::uint64_t seed = 0);

    const IllumNetConfig& config() const noexcept { return config_; }
    const nn::ParameterSet& params() const noexcept { return params_; }
    nn::ParameterSet& params() noexcept { return params_; }

    /// Differentiable forward pass on a 3 x H x W input.
    ad::Var forward(std::span<const ad::Var> p, const ad::Var& low) const;

private:
    IllumNetConfig config_;
    nn::ParameterSet params_;
};

Image estimate_illumination(const IllumNet& net, const Image& low);

/// I_R = clamp(I_L / max(I_M, eps), 0, 1).
Image retinex_decompose(const Image& low, const Image& illum, double epsilon_div = 1e-4);
ad::Var retinex_decompose(const ad::Var& low, const ad::Var& illum, double epsilon_div);

}  // namespace lumidiff::illumnet
