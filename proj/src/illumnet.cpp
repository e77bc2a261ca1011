#include "lumidiff/illumnet.hpp"

#include "lumidiff/error.hpp"

namespace lumidiff::illumnet {

IllumNet::IllumNet(IllumNetConfig config, std::uint64_t seed) : config_(config) {
    if (config_.layers < 2) throw ConfigError("model.illum_layers must be >= 2");
    if (config_.hidden < 1) throw ConfigError("model.illum_width must be >= 1");
    if (!(config_.epsilon_div > 0.0)) throw ConfigError("model.epsilon_div must be > 0");
    Rng rng(mix_seed(seed, 0x111u));
    int in = 3;
    for (int l = 0; l < config_.layers; ++l) {
        const bool last = l + 1 == config_.layers;
        const int out = last ? 3 : config_.hidden;
        params_.add("conv" + std::to_string(l) + ".weight", nn::conv_weight(rng, out, in, 3, last ? 0.1 : 1.0));
        params_.add("conv" + std::to_string(l) + ".bias", Tensor({out, 1, 1}, last ? config_.output_bias : 0.0));
        in = out;
    }
    if (params_.count() >= kMaxParameters)
        throw ConfigError("illumination network has " + std::to_string(params_.count()) + " parameters; limit is " +
                          std::to_string(kMaxParameters));
}

ad::Var IllumNet::forward(std::span<const ad::Var> p, const ad::Var& low) const {
    if (low.shape().c != 3) throw ShapeError("illumination network expects RGB input, got " + low.shape().str());
    if (p.size() != params_.tensors()) throw ShapeError("illumination network: wrong parameter count");
    ad::Var h = low;
    for (int l = 0; l < config_.layers; ++l) {
        h = ad::conv2d(h, p[2 * l], p[2 * l + 1]);
        h = (l + 1 == config_.layers) ? ad::sigmoid(h) : ad::silu(h);
    }
    // I_M = I_L + (1 - I_L) * s
    const ad::Var headroom = ad::add_scalar(ad::neg(low), 1.0);
    return ad::add(low, ad::mul(headroom, h));
}

Image estimate_illumination(const IllumNet& net, const Image& low) {
    ad::NoGradGuard guard;
    const auto p = net.params().bind(false);
    const ad::Var out = net.forward(p, ad::constant(to_rgb(low).tensor()));
    return Image::clamped(out.value());
}

ad::Var retinex_decompose(const ad::Var& low, const ad::Var& illum, double epsilon_div) {
    require_same_shape(low.value(), illum.value(), "retinex_decompose");
    return ad::clamp(ad::div(low, ad::maximum(illum, epsilon_div)), 0.0, 1.0);
}

Image retinex_decompose(const Image& low, const Image& illum, double epsilon_div) {
    ad::NoGradGuard guard;
    return Image(retinex_decompose(ad::constant(low.tensor()), ad::constant(illum.tensor()), epsilon_div).value());
}

}  // namespace lumidiff::illumnet
