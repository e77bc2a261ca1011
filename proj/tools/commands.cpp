#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "lumidiff/config.hpp"
#include "lumidiff/error.hpp"
#include "lumidiff/metrics.hpp"
#include "lumidiff/pipeline.hpp"

namespace lumidiff::cli {

namespace fs = std::filesystem;

Overrides parse_overrides(const std::vector<std::string>& args) {
    Overrides out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a.rfind("--", 0) != 0 || a.size() <= 2) throw ConfigError("unexpected argument '" + a + "'");
        std::string key = a.substr(2);
        const auto eq = key.find('=');
        if (eq != std::string::npos) {
            out.emplace_back(key.substr(0, eq), key.substr(eq + 1));
            continue;
        }
        if (i + 1 >= args.size()) throw ConfigError("override '" + a + "' needs a value");
        out.emplace_back(key, args[++i]);
    }
    return out;
}

std::optional<fs::path> find_default_config() {
    std::vector<fs::path> dirs;
    if (const char* env = std::getenv("LUMIDIFF_CONFIG_PATH")) {
        std::stringstream ss(env);
        std::string part;
        while (std::getline(ss, part, ':'))
            if (!part.empty()) dirs.emplace_back(part);
    }
    dirs.emplace_back(".");
    for (const auto& d : dirs)
        if (fs::is_regular_file(d / "lumidiff.toml")) return d / "lumidiff.toml";
    return std::nullopt;
}

namespace {

RunConfig resolve_config(const std::optional<fs::path>& explicit_path, const Overrides& overrides) {
    RunConfig cfg;
    if (explicit_path) {
        cfg = load_config(*explicit_path);
    } else if (auto found = find_default_config()) {
        cfg = load_config(*found);
    }
    apply_overrides(cfg, overrides);
    return cfg;
}

}  // namespace

int cmd_train(const TrainArgs& args) {
    const RunConfig cfg = resolve_config(args.config, args.overrides);
    cfg.validate(true);
    pipeline::TrainOptions opts;
    opts.resume = args.resume;
    if (!args.quiet) {
        const std::int64_t every = std::max<std::int64_t>(1, cfg.iterations / 20);
        opts.on_iteration = [every, total = cfg.iterations](std::int64_t it, const losses::LossBreakdown& b) {
            if (it % every == 0 || it == total)
                std::printf("iter %lld/%d  total %.6f  diff %.5f  smooth %.5f  rec %.5f  col %.5f  spa %.5f\n",
                            static_cast<long long>(it), total, b.total, b.diff, b.smooth, b.rec, b.col, b.spa);
        };
    }
    const auto st = pipeline::train(cfg, opts);
    std::printf("checkpoint: %s (iteration %lld, config %s)\n", cfg.checkpoint_path().string().c_str(),
                static_cast<long long>(st.iteration), cfg.hash_hex().c_str());
    return kExitOk;
}

int cmd_enhance(const EnhanceArgs& args) {
    if (args.jobs < 1) throw ConfigError("--jobs must be >= 1");
    const pipeline::TrainState model = pipeline::load_checkpoint(args.checkpoint);
    const std::uint64_t seed = args.seed.value_or(model.config.seed);

    std::vector<fs::path> inputs;
    if (fs::is_directory(args.input)) {
        for (const auto& p : list_images(args.input, "*")) {
            std::string ext = p.extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
            if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" || ext == ".tiff")
                inputs.push_back(p);
        }
    } else if (fs::exists(args.input)) {
        inputs.push_back(args.input);
    } else {
        throw ConfigError("input '" + args.input.string() + "' does not exist");
    }
    if (inputs.empty()) throw DataError("no images in '" + args.input.string() + "'");
    fs::create_directories(args.output);
    if (args.save_illumination) fs::create_directories(args.output / "illumination");

    std::atomic<std::size_t> next{0};
    std::atomic<int> failures{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < inputs.size(); i = next++) {
            const fs::path& in = inputs[i];
            const std::string name = in.stem().string() + ".png";
            try {
                const Image low = load_image(in);
                const auto r = pipeline::enhance_image(model, low, pipeline::file_seed(seed, in.filename().string()));
                save_image(r.enhanced, args.output / name);
                if (args.save_illumination) save_image(r.illumination, args.output / "illumination" / name);
                std::lock_guard lock(log_mutex);
                std::printf("%s -> %s\n", in.string().c_str(), (args.output / name).string().c_str());
            } catch (const Error& e) {
                ++failures;
                std::lock_guard lock(log_mutex);
                std::fprintf(stderr, "warning: %s: %s\n", in.string().c_str(), e.what());
            }
        }
    };
    const int n = std::min<int>(args.jobs, static_cast<int>(inputs.size()));
    std::vector<std::thread> pool;
    for (int j = 1; j < n; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failures == static_cast<int>(inputs.size())) {
        std::fprintf(stderr, "error: every input failed\n");
        return kExitFailure;
    }
    return kExitOk;
}

namespace {

std::string fmt(const std::optional<double>& v, int precision) {
    if (!v) return "-";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, *v);
    return buf;
}

}  // namespace

int cmd_evaluate(const EvaluateArgs& args) {
    metrics::EvaluateOptions opt;
    opt.enhanced = args.enhanced;
    opt.reference = args.reference;
    opt.originals = args.originals;
    opt.loe_size = args.loe_size;
    if (args.loe_size < 1) throw ConfigError("--loe-size must be >= 1");
    RunConfig cfg;
    if (args.config) {
        cfg = load_config(*args.config);
        opt.config_hash = cfg.hash_hex();
    }
    if (args.niqe_model) {
        opt.niqe_model = metrics::NiqeModel::load(*args.niqe_model);
    } else if (fs::is_regular_file(cfg.paths.niqe_model)) {
        opt.niqe_model = metrics::NiqeModel::load(cfg.paths.niqe_model);
    } else {
        std::fprintf(stderr, "warning: no NIQE model at '%s'; NIQE skipped (run fit-niqe)\n",
                     cfg.paths.niqe_model.string().c_str());
    }
    for (const auto* dir : {&args.enhanced}) {
        if (!fs::is_directory(*dir)) throw ConfigError("'" + dir->string() + "' is not a directory");
    }
    if (args.reference && !fs::is_directory(*args.reference))
        throw ConfigError("'" + args.reference->string() + "' is not a directory");
    if (args.originals && !fs::is_directory(*args.originals))
        throw ConfigError("'" + args.originals->string() + "' is not a directory");

    const auto report = metrics::evaluate_pairs(opt);
    fs::path json = args.output, csv = args.output;
    json.replace_extension(".json");
    csv.replace_extension(".csv");
    if (json.has_parent_path()) fs::create_directories(json.parent_path());
    report.write(json, csv);

    const auto& m = report.means;
    std::printf("%-8s %10s\n", "metric", "mean");
    if (m.psnr || m.psnr_inf_count) std::printf("%-8s %10s\n", "PSNR", fmt(m.psnr, 3).c_str());
    if (m.ssim) std::printf("%-8s %10s\n", "SSIM", fmt(m.ssim, 3).c_str());
    if (m.niqe) std::printf("%-8s %10s\n", "NIQE", fmt(m.niqe, 3).c_str());
    if (m.loe) std::printf("%-8s %10s\n", "LOE", fmt(m.loe, 3).c_str());
    if (m.psnr_inf_count) std::printf("(%d identical image(s) left out of the PSNR mean)\n", m.psnr_inf_count);
    std::printf("report: %s, %s\n", json.string().c_str(), csv.string().c_str());
    return kExitOk;
}

int cmd_fit_niqe(const FitNiqeArgs& args) {
    if (!fs::is_directory(args.input)) throw ConfigError("'" + args.input.string() + "' is not a directory");
    std::vector<Image> images;
    for (const auto& p : list_images(args.input, "*")) {
        try {
            images.push_back(load_image(p));
        } catch (const Error& e) {
            std::fprintf(stderr, "warning: %s: %s\n", p.string().c_str(), e.what());
        }
    }
    if (images.empty()) throw DataError("no readable images in '" + args.input.string() + "'");
    const auto model = metrics::fit_niqe(images, args.patch_size, args.sharpness);
    if (args.output.has_parent_path()) fs::create_directories(args.output.parent_path());
    model.save(args.output);
    std::printf("NIQE model from %zu image(s), %d features -> %s\n", images.size(), model.dim(),
                args.output.string().c_str());
    return kExitOk;
}

}  // namespace lumidiff::cli
