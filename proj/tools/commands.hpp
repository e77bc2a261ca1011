#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lumidiff::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Splits leftover `--key value` / `--key=value` tokens. Throws ConfigError on
/// a dangling key or a positional token.
Overrides parse_overrides(const std::vector<std::string>& args);

/// Config used when --config is absent: the first lumidiff.toml found in the
/// directories of $LUMIDIFF_CONFIG_PATH (colon separated), then the working directory.
std::optional<std::filesystem::path> find_default_config();

struct TrainArgs {
    std::optional<std::filesystem::path> config;
    bool resume = false;
    bool quiet = false;
    Overrides overrides;
};
int cmd_train(const TrainArgs& args);

struct EnhanceArgs {
    std::filesystem::path checkpoint;
    std::filesystem::path input;
    std::filesystem::path output;
    std::optional<std::uint64_t> seed;
    bool save_illumination = false;
    int jobs = 1;
};
int cmd_enhance(const EnhanceArgs& args);

struct EvaluateArgs {
    std::filesystem::path enhanced;
    std::optional<std::filesystem::path> reference;
    std::optional<std::filesystem::path> originals;
    std::optional<std::filesystem::path> niqe_model;
    std::optional<std::filesystem::path> config;
    std::filesystem::path output = "report";
    int loe_size = 50;
};
int cmd_evaluate(const EvaluateArgs& args);

struct FitNiqeArgs {
    std::filesystem::path input;
    std::filesystem::path output;
    int patch_size = 96;
    double sharpness = 0.75;
};
int cmd_fit_niqe(const FitNiqeArgs& args);

}  // namespace lumidiff::cli
