#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lumidiff/config.hpp"
#include "lumidiff/diffusion.hpp"
#include "lumidiff/guidance.hpp"
#include "lumidiff/illumnet.hpp"
#include "lumidiff/losses.hpp"
#include "lumidiff/nn.hpp"
#include "lumidiff/rng.hpp"

namespace lumidiff::pipeline {

/// Everything a training run or an enhancement needs: both networks, their
/// optimizer states, the schedule, the training RNG and the iteration counter.
struct TrainState {
    RunConfig config;
    diffusion::NoiseSchedule schedule;
    illumnet::IllumNet illum;
    diffusion::NoisePredictor unet;
    nn::Adam illum_opt;
    nn::Adam unet_opt;
    Rng rng;
    std::int64_t iteration = 0;

    /// Fresh networks seeded from config.seed.
    static TrainState initialize(const RunConfig& config);
};

/// Channel-max illumination prior used when the estimator is ablated.
Tensor channel_max_prior(const Tensor& low);

/// One optimization step on a batch of RGB patches. Losses are averaged over
/// the batch; both networks are updated from the same total (or alternately
/// when train.update_mode = "alternating"). Throws TrainingError, leaving the
/// state untouched, when any loss term is non-finite.
losses::LossBreakdown train_step(TrainState& state, const std::vector<Image>& batch, const guidance::Encoder& encoder);

struct TrainOptions {
    /// Continue from an existing checkpoint at config.checkpoint_path().
    bool resume = false;
    /// Called after every iteration.
    std::function<void(std::int64_t, const losses::LossBreakdown&)> on_iteration;
};

/// Runs iterations up to config.iterations, appending to <output_dir>/loss.csv,
/// writing the checkpoint every train.checkpoint_every iterations and at the end,
/// and a resolved_config.toml snapshot.
TrainState train(const RunConfig& config, const TrainOptions& options = {});

// ---- checkpoints ----------------------------------------------------------

/// Binary layout: "LMDFCKPT", u32 version, u64 config hash, then the iteration,
/// trajectory config text, betas, both parameter sets, both optimizer states,
/// RNG state, and a trailing FNV-1a checksum of everything before it.
std::string serialize_checkpoint(const TrainState& state);
TrainState deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
/// Throws LoadError for a missing, truncated or corrupted file.
TrainState load_checkpoint(const std::filesystem::path& path);

// ---- inference --------------------------------------------------------------

struct Enhancement {
    Image enhanced;
    Image illumination;
};

/// Illumination estimate, Retinex split, full sampling chain and division.
/// Inputs whose sides are not multiples of the network stride are
/// edge-padded for processing and cropped back.
Enhancement enhance_image(const TrainState& model, const Image& low, std::uint64_t seed);

/// Per-file seed derived from a global seed and a file name.
std::uint64_t file_seed(std::uint64_t seed, const std::string& name);

}  // namespace lumidiff::pipeline
