#include "lumidiff/diffusion.hpp"

#include <cmath>

#include "lumidiff/error.hpp"
#include "lumidiff/frequency.hpp"

namespace lumidiff::diffusion {

void NoiseSchedule::check(int t) const {
    if (t < 1 || t > steps())
        throw IndexError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
}

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
    NoiseSchedule s;
    s.beta = std::move(betas);
    double prod = 1.0;
    for (double b : s.beta) {
        if (!(b >= 0.0 && b < 1.0)) throw ConfigError("beta values must lie in [0, 1)");
        s.alpha.push_back(1.0 - b);
        prod *= 1.0 - b;
        s.alpha_bar.push_back(prod);
        s.sigma.push_back(std::sqrt(b));
    }
    return s;
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw ConfigError("schedule.timesteps must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ConfigError("schedule betas must satisfy 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(steps);
    for (int i = 0; i < steps; ++i)
        betas[i] = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (steps - 1);
    return schedule_from_betas(std::move(betas));
}

SamplingPlan respace(const NoiseSchedule& base, int steps) {
    const int T = base.steps();
    if (steps < 1 || steps > T)
        throw ConfigError("sampling steps " + std::to_string(steps) + " must lie in [1, " + std::to_string(T) + "]");
    SamplingPlan plan;
    if (steps == T) {
        plan.schedule = base;
        for (int t = 1; t <= T; ++t) plan.model_timesteps.push_back(t);
        return plan;
    }
    std::vector<double> betas;
    double prev_abar = 1.0;
    for (int k = 1; k <= steps; ++k) {
        const int t = static_cast<int>((static_cast<long>(k) * T + steps - 1) / steps);
        plan.model_timesteps.push_back(t);
        const double abar = base.alpha_bar[t - 1];
        betas.push_back(1.0 - abar / prev_abar);
        prev_abar = abar;
    }
    plan.schedule = schedule_from_betas(std::move(betas));
    return plan;
}

Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    sched.check(t);
    require_same_shape(x0, eps, "q_sample");
    const double a = std::sqrt(sched.alpha_bar[t - 1]);
    const double b = std::sqrt(1.0 - sched.alpha_bar[t - 1]);
    Tensor out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

ad::Var q_sample(const ad::Var& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    sched.check(t);
    require_same_shape(x0.value(), eps, "q_sample");
    const double a = std::sqrt(sched.alpha_bar[t - 1]);
    const double b = std::sqrt(1.0 - sched.alpha_bar[t - 1]);
    Tensor scaled_eps = eps;
    scaled_eps *= b;
    return ad::add(ad::mul_scalar(x0, a), ad::constant(std::move(scaled_eps)));
}

namespace {

struct StepCoefficients {
    double inv_sqrt_alpha;
    double eps_coeff;
    double sigma;
};

StepCoefficients coefficients(int t, const NoiseSchedule& sched) {
    sched.check(t);
    const double beta = sched.beta[t - 1];
    return {1.0 / std::sqrt(sched.alpha[t - 1]), beta / std::sqrt(1.0 - sched.alpha_bar[t - 1]),
            t == 1 ? 0.0 : sched.sigma[t - 1]};
}

}  // namespace

Tensor p_sample_step(const Tensor& x_t, int t, const Tensor& eps_pred, const NoiseSchedule& sched, const Tensor& noise) {
    ad::NoGradGuard guard;
    return p_sample_step(ad::constant(x_t), t, ad::constant(eps_pred), sched, noise).value();
}

ad::Var p_sample_step(const ad::Var& x_t, int t, const ad::Var& eps_pred, const NoiseSchedule& sched,
                      const Tensor& noise) {
    require_same_shape(x_t.value(), eps_pred.value(), "p_sample_step");
    const auto k = coefficients(t, sched);
    ad::Var mu = ad::mul_scalar(ad::sub(x_t, ad::mul_scalar(eps_pred, k.eps_coeff)), k.inv_sqrt_alpha);
    if (noise.empty() || k.sigma == 0.0) return mu;
    require_same_shape(x_t.value(), noise, "p_sample_step noise");
    Tensor scaled = noise;
    scaled *= k.sigma;
    return ad::add(mu, ad::constant(std::move(scaled)));
}

NoisePredictor::NoisePredictor(NoisePredictorConfig config, std::uint64_t seed) : config_(config) {
    if (config_.levels < 1) throw ConfigError("model.unet_levels must be >= 1");
    if (config_.base_width < 2 || config_.base_width % 2 != 0) throw ConfigError("model.unet_width must be even and >= 2");
    Rng rng(mix_seed(seed, 0x222u));
    const int c = config_.base_width;
    auto width = [c](int l) { return c << l; };
    params_.add("temb.weight", nn::linear_weight(rng, c, c));
    params_.add("temb.bias", Tensor({c, 1, 1}));
    for (int l = 0; l < config_.levels; ++l) {
        params_.add("temb_proj" + std::to_string(l) + ".weight", nn::linear_weight(rng, width(l), c, 0.5));
        params_.add("temb_proj" + std::to_string(l) + ".bias", Tensor({width(l), 1, 1}));
    }
    params_.add("conv_in.weight", nn::conv_weight(rng, c, config_.in_channels, 3));
    params_.add("conv_in.bias", Tensor({c, 1, 1}));
    for (int l = 0; l < config_.levels; ++l) {
        const int in = l == 0 ? c : width(l - 1);
        const std::string tag = "down" + std::to_string(l);
        params_.add(tag + ".a.weight", nn::conv_weight(rng, width(l), in, 3));
        params_.add(tag + ".a.bias", Tensor({width(l), 1, 1}));
        params_.add(tag + ".b.weight", nn::conv_weight(rng, width(l), width(l), 3));
        params_.add(tag + ".b.bias", Tensor({width(l), 1, 1}));
    }
    for (int l = config_.levels - 2; l >= 0; --l) {
        const std::string tag = "up" + std::to_string(l);
        params_.add(tag + ".weight", nn::conv_weight(rng, width(l), width(l + 1) + width(l), 3));
        params_.add(tag + ".bias", Tensor({width(l), 1, 1}));
    }
    params_.add("conv_out.weight", nn::conv_weight(rng, config_.out_channels, c, 3, 0.1));
    params_.add("conv_out.bias", Tensor({config_.out_channels, 1, 1}));
}

ad::Var NoisePredictor::forward(std::span<const ad::Var> p, const ad::Var& x_t, const ad::Var& cond, int t) const {
    if (p.size() != params_.tensors()) throw ShapeError("noise predictor: wrong parameter count");
    const int m = size_multiple();
    if (x_t.shape().h % m != 0 || x_t.shape().w % m != 0)
        throw ShapeError("noise predictor input " + x_t.shape().str() + " must have sides divisible by " +
                         std::to_string(m));
    if (x_t.shape().c + cond.shape().c != config_.in_channels)
        throw ShapeError("noise predictor expects " + std::to_string(config_.in_channels) + " input channels");
    std::size_t cur = 0;
    auto next = [&]() -> const ad::Var& { return p[cur++]; };

    const ad::Var temb0 = ad::constant(nn::timestep_embedding(t, config_.base_width));
    const ad::Var& tw = next();
    const ad::Var& tb = next();
    const ad::Var temb = ad::silu(ad::linear(temb0, tw, tb));
    std::vector<ad::Var> level_bias;
    for (int l = 0; l < config_.levels; ++l) {
        const ad::Var& w = next();
        const ad::Var& b = next();
        level_bias.push_back(ad::linear(temb, w, b));
    }

    const ad::Var inputs[2] = {x_t, cond};
    const ad::Var& wi = next();
    const ad::Var& bi = next();
    ad::Var h = ad::conv2d(ad::concat_channels(inputs), wi, bi);
    std::vector<ad::Var> skips;
    for (int l = 0; l < config_.levels; ++l) {
        if (l > 0) h = ad::avg_pool(h, 2);
        const ad::Var& wa = next();
        const ad::Var& ba = next();
        h = ad::silu(ad::add_channel_bias(ad::conv2d(h, wa, ba), level_bias[l]));
        const ad::Var& wb = next();
        const ad::Var& bb = next();
        h = ad::silu(ad::conv2d(h, wb, bb));
        skips.push_back(h);
    }
    for (int l = config_.levels - 2; l >= 0; --l) {
        const ad::Var parts[2] = {ad::upsample_nearest(h, 2), skips[l]};
        const ad::Var& w = next();
        const ad::Var& b = next();
        h = ad::silu(ad::add_channel_bias(ad::conv2d(ad::concat_channels(parts), w, b), level_bias[l]));
    }
    const ad::Var& wo = next();
    const ad::Var& bo = next();
    return ad::conv2d(h, wo, bo);
}

ad::Var p_sample_step(const ad::Var& x_t, int t, const ad::Var& cond, const NoisePredictor& net,
                      std::span<const ad::Var> p, const NoiseSchedule& sched, const Tensor& noise, int model_t) {
    if (cond.shape().h != x_t.shape().h || cond.shape().w != x_t.shape().w)
        throw ShapeError("conditioning " + cond.shape().str() + " does not match x_t " + x_t.shape().str());
    sched.check(t);
    const ad::Var eps = net.forward(p, x_t, cond, model_t);
    return p_sample_step(x_t, t, eps, sched, noise);
}

Tensor p_sample_step(const Tensor& x_t, int t, const Tensor& cond, const NoisePredictor& net,
                     const NoiseSchedule& sched, const Tensor& noise) {
    ad::NoGradGuard guard;
    const auto p = net.params().bind(false);
    return p_sample_step(ad::constant(x_t), t, ad::constant(cond), net, p, sched, noise, t).value();
}

ad::Var conditioning(const ad::Var& structure, const ad::Var& low) {
    const int c = structure.shape().c;
    const ad::Var parts[2] = {ad::add_scalar(ad::slice_channels(frequency::dwt2(structure), 0, c), -kLowBandOffset),
                              ad::add_scalar(ad::slice_channels(frequency::dwt2(low), 0, c), -kLowBandOffset)};
    return ad::concat_channels(parts);
}

ad::Var reverse_chain(const NoisePredictor& net, std::span<const ad::Var> p, const ad::Var& cond,
                      const SamplingPlan& plan, Rng& rng, const StepObserver& observer) {
    const Shape ll{net.config().out_channels, cond.shape().h, cond.shape().w};
    ad::Var x = ad::constant(rng.normal_tensor(ll));
    const int steps = plan.schedule.steps();
    for (int k = steps; k >= 1; --k) {
        const Tensor noise = k > 1 ? rng.normal_tensor(ll) : Tensor{};
        x = p_sample_step(x, k, cond, net, p, plan.schedule, noise, plan.model_timesteps[k - 1]);
        if (observer) observer(k);
    }
    return x;
}

ad::Var assemble_illumination(const ad::Var& sampled_ll, const ad::Var& illum_bands, const Tensor& low) {
    const int c = sampled_ll.shape().c;
    if (illum_bands.shape().c != 4 * c) throw ShapeError("illumination subbands do not match sampled LL");
    const ad::Var parts[2] = {ad::add_scalar(sampled_ll, kLowBandOffset), ad::slice_channels(illum_bands, c, 3 * c)};
    const ad::Var full = frequency::idwt2(ad::concat_channels(parts));
    return ad::clamp(full, low, Tensor(low.shape(), 1.0));
}

Image sample_illumination(const Image& structure, const Image& low, const Image& illum, const NoisePredictor& net,
                          const SamplingPlan& plan, std::uint64_t seed, const StepObserver& observer) {
    require_same_shape(structure.tensor(), low.tensor(), "sample_illumination");
    require_same_shape(illum.tensor(), low.tensor(), "sample_illumination");
    ad::NoGradGuard guard;
    const auto p = net.params().bind(false);
    const ad::Var low_v = ad::constant(low.tensor());
    const ad::Var cond = conditioning(ad::constant(structure.tensor()), low_v);
    Rng rng(seed);
    const ad::Var ll = reverse_chain(net, p, cond, plan, rng, observer);
    const ad::Var bands = frequency::dwt2(ad::constant(illum.tensor()));
    return Image::clamped(assemble_illumination(ll, bands, low.tensor()).value());
}

ad::Var enhance(const ad::Var& low, const ad::Var& illum_hat, double epsilon_div) {
    require_same_shape(low.value(), illum_hat.value(), "enhance");
    return ad::clamp(ad::div(low, ad::maximum(illum_hat, epsilon_div)), 0.0, 1.0);
}

Image enhance(const Image& low, const Image& illum_hat, double epsilon_div) {
    ad::NoGradGuard guard;
    return Image(enhance(ad::constant(low.tensor()), ad::constant(illum_hat.tensor()), epsilon_div).value());
}

}  // namespace lumidiff::diffusion
