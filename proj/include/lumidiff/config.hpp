#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "lumidiff/diffusion.hpp"
#include "lumidiff/guidance.hpp"
#include "lumidiff/illumnet.hpp"
#include "lumidiff/imaging.hpp"
#include "lumidiff/losses.hpp"

namespace lumidiff {

/// Flat TOML subset: [table] headers, `key = value` with basic strings,
/// integers, floats (incl. inf/nan), booleans, and `#` comments.
using TomlValue = std::variant<bool, std::int64_t, double, std::string>;
using TomlDocument = std::map<std::string, TomlValue>;  // dotted keys, e.g. "train.iterations"

TomlDocument parse_toml(const std::string& text, const std::string& source = "<string>");
/// Parses a command-line override value: true/false, integer, float, or a bare/quoted string.
TomlValue parse_toml_scalar(const std::string& text);

enum class UpdateMode { joint, alternating };

struct Ablation {
    bool no_illumnet = false;  ///< channel-max prior instead of the estimator; diffusion sees I_L only
    bool no_arm = false;       ///< drop content, spectral and semantic terms
    bool no_semantic = false;  ///< drop the semantic terms only
};

struct PathsConfig {
    std::filesystem::path output_dir = "runs/default";
    std::filesystem::path checkpoint;  ///< empty: <output_dir>/checkpoint.bin
    std::filesystem::path niqe_model = "data/niqe_pristine.bin";
};

struct ScheduleConfig {
    int timesteps = 200;
    double beta_start = 1e-4;
    double beta_end = 0.04;
    int sample_steps = 20;
};

struct RunConfig {
    std::uint64_t seed = 0;

    int iterations = 500;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 1.0;
    int rec_sample_steps = 4;
    int checkpoint_every = 100;
    UpdateMode update_mode = UpdateMode::joint;

    DatasetSpec dataset;
    ScheduleConfig schedule;
    illumnet::IllumNetConfig illum;
    int unet_width = 32;
    int unet_levels = 3;
    losses::LossWeights loss;
    guidance::GuidanceConfig guidance;
    Ablation ablation;
    PathsConfig paths;

    /// Checks every field; throws ConfigError naming the offending key.
    /// `need_dataset` additionally requires dataset.root to exist.
    void validate(bool need_dataset) const;

    /// Canonical TOML with every key.
    std::string to_toml() const;

    /// Canonical TOML of the settings that determine the training trajectory:
    /// no file paths, and train.iterations / train.checkpoint_every at defaults.
    std::string trajectory_toml() const;

    /// FNV-1a of trajectory_toml().
    std::uint64_t hash() const;
    std::string hash_hex() const;

    std::filesystem::path checkpoint_path() const;
    diffusion::NoisePredictorConfig unet() const { return {9, 3, unet_width, unet_levels}; }
};

/// Applies one dotted key; throws ConfigError for unknown keys or bad types.
void apply_setting(RunConfig& cfg, const std::string& key, const TomlValue& value);

RunConfig config_from_toml(const std::string& text, const std::string& source = "<string>");
RunConfig load_config(const std::filesystem::path& path);

/// Full dotted key for `key`; a bare leaf name such as "iterations" resolves
/// when it is unambiguous.
std::string resolve_key(const std::string& key);

/// Applies `--key value` style pairs (keys without the leading dashes).
void apply_overrides(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& overrides);

void write_resolved_config(const RunConfig& cfg, const std::filesystem::path& dir);

}  // namespace lumidiff
