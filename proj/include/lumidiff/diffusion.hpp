#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lumidiff/autodiff.hpp"
#include "lumidiff/imaging.hpp"
#include "lumidiff/nn.hpp"

namespace lumidiff::diffusion {

/// Variance schedule indexed by timestep t = 1..T (stored at t - 1).
struct NoiseSchedule {
    std::vector<double> beta;
    std::vector<double> alpha;      ///< 1 - beta
    std::vector<double> alpha_bar;  ///< cumulative product of alpha
    std::vector<double> sigma;      ///< sqrt(beta)

    int steps() const noexcept { return static_cast<int>(beta.size()); }
    /// Throws IndexError unless 1 <= t <= T.
    void check(int t) const;
};

/// Linear beta from beta_start (t = 1) to beta_end (t = T).
NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);
NoiseSchedule schedule_from_betas(std::vector<double> betas);

/// A shorter chain over a subset of the training timesteps. `schedule` holds the
/// respaced betas 1 - abar[t_k] / abar[t_{k-1}]; `model_timesteps[k - 1]` is the
/// training timestep fed to the noise predictor at plan step k.
struct SamplingPlan {
    NoiseSchedule schedule;
    std::vector<int> model_timesteps;
};

/// Uniform stride: t_k = ceil(k * T / steps), k = 1..steps. steps == T is the full chain.
SamplingPlan respace(const NoiseSchedule& base, int steps);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);
ad::Var q_sample(const ad::Var& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

/// One reverse step from a given noise estimate:
/// mu = (x_t - beta_t / sqrt(1 - abar_t) * eps_pred) / sqrt(alpha_t); returns mu + sigma_t * noise,
/// with sigma forced to 0 at t = 1. An empty `noise` tensor means zero noise.
Tensor p_sample_step(const Tensor& x_t, int t, const Tensor& eps_pred, const NoiseSchedule& sched,
                     const Tensor& noise);
ad::Var p_sample_step(const ad::Var& x_t, int t, const ad::Var& eps_pred, const NoiseSchedule& sched,
                      const Tensor& noise);

struct NoisePredictorConfig {
    int in_channels = 9;  ///< noisy LL + LL(I_R) + LL(I_L)
    int out_channels = 3;
    int base_width = 32;
    int levels = 3;
};

/// Conditional U-Net eps_theta(x_t, t | cond) on LL-band arrays. Channel width
/// doubles per level; a sinusoidal timestep embedding adds a per-channel bias
/// at every level.
class NoisePredictor {
public:
    explicit NoisePredictor(NoisePredictorConfig config = {}, std::uint64_t seed = 0);

    const NoisePredictorConfig& config() const noexcept { return config_; }
    const nn::ParameterSet& params() const noexcept { return params_; }
    nn::ParameterSet& params() noexcept { return params_; }
    /// LL height and width must be multiples of this.
    int size_multiple() const noexcept { return 1 << (config_.levels - 1); }

    ad::Var forward(std::span<const ad::Var> p, const ad::Var& x_t, const ad::Var& cond, int t) const;

private:
    NoisePredictorConfig config_;
    nn::ParameterSet params_;
};

/// Full reverse step with the network: eps_theta is evaluated on concat(x_t, cond).
ad::Var p_sample_step(const ad::Var& x_t, int t, const ad::Var& cond, const NoisePredictor& net,
                      std::span<const ad::Var> p, const NoiseSchedule& sched, const Tensor& noise, int model_t);
Tensor p_sample_step(const Tensor& x_t, int t, const Tensor& cond, const NoisePredictor& net,
                     const NoiseSchedule& sched, const Tensor& noise);

/// Maps an LL band (range [0, 2] for a [0, 1] image) to the model's [-1, 1] space and back.
inline constexpr double kLowBandOffset = 1.0;

/// concat(LL(I_R) - 1, LL(I_L) - 1), the conditioning stack fed to eps_theta.
ad::Var conditioning(const ad::Var& structure, const ad::Var& low);

using StepObserver = std::function<void(int plan_step)>;

/// Runs plan.schedule.steps() reverse steps from x_T ~ N(0, I). Draw order is
/// x_T, then one noise array per step with k > 1.
ad::Var reverse_chain(const NoisePredictor& net, std::span<const ad::Var> p, const ad::Var& cond,
                      const SamplingPlan& plan, Rng& rng, const StepObserver& observer = {});

/// Rebuilds a full-resolution illumination map from a sampled LL band (model
/// space) and the detail subbands of the initial estimate, clamped into [I_L, 1].
ad::Var assemble_illumination(const ad::Var& sampled_ll, const ad::Var& illum_bands, const Tensor& low);

/// Inference: samples the LL band of the illumination under (I_R, I_L) and
/// reconstructs the full-resolution map using I_M's detail subbands.
Image sample_illumination(const Image& structure, const Image& low, const Image& illum, const NoisePredictor& net,
                          const SamplingPlan& plan, std::uint64_t seed, const StepObserver& observer = {});

/// I_E = clamp(I_L / max(I_M_hat, eps), 0, 1).
Image enhance(const Image& low, const Image& illum_hat, double epsilon_div = 1e-4);
ad::Var enhance(const ad::Var& low, const ad::Var& illum_hat, double epsilon_div);

}  // namespace lumidiff::diffusion
