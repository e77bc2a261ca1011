#include <cstdio>
#include <exception>

#include "CLI11.hpp"
#include "commands.hpp"
#include "lumidiff/error.hpp"

using namespace lumidiff;

int main(int argc, char** argv) {
    CLI::App app{"lumidiff: zero-reference low-light enhancement"};
    app.require_subcommand(1);

    cli::TrainArgs train;
    std::string train_config;
    auto* t = app.add_subcommand("train", "train both networks; extra --key value pairs override config keys");
    t->add_option("-c,--config", train_config, "TOML config (default: lumidiff.toml on $LUMIDIFF_CONFIG_PATH or .)");
    t->add_flag("--resume", train.resume, "continue from the checkpoint of this run");
    t->add_flag("-q,--quiet", train.quiet, "no progress output");
    t->allow_extras();

    cli::EnhanceArgs enhance;
    std::uint64_t seed = 0;
    auto* e = app.add_subcommand("enhance", "enhance an image or a directory of images");
    e->add_option("--checkpoint", enhance.checkpoint, "trained checkpoint")->required();
    e->add_option("-i,--input", enhance.input, "image file or directory")->required();
    e->add_option("-o,--output", enhance.output, "output directory")->required();
    auto* seed_opt = e->add_option("--seed", seed, "sampling seed (default: the training seed)");
    e->add_flag("--save-illumination", enhance.save_illumination, "also write the sampled illumination map");
    e->add_option("-j,--jobs", enhance.jobs, "parallel workers")->check(CLI::PositiveNumber);

    cli::EvaluateArgs evaluate;
    std::string ref, orig, niqe, eval_config;
    auto* v = app.add_subcommand("evaluate", "score enhanced images; writes <output>.json and <output>.csv");
    v->add_option("--enhanced", evaluate.enhanced, "directory of enhanced images")->required();
    auto* ref_opt = v->add_option("--reference", ref, "directory of ground-truth images (PSNR, SSIM)");
    auto* orig_opt = v->add_option("--input", orig, "directory of low-light inputs (LOE)");
    auto* niqe_opt = v->add_option("--niqe-model", niqe, "NIQE model file (default: paths.niqe_model)");
    auto* cfg_opt = v->add_option("-c,--config", eval_config, "config whose hash is recorded in the report");
    v->add_option("-o,--output", evaluate.output, "report path without extension");
    v->add_option("--loe-size", evaluate.loe_size, "LOE grid side");

    cli::FitNiqeArgs fit;
    auto* f = app.add_subcommand("fit-niqe", "fit a NIQE model on a directory of pristine images");
    f->add_option("-i,--input", fit.input, "directory of pristine images")->required();
    f->add_option("-o,--output", fit.output, "model file")->required();
    f->add_option("--patch-size", fit.patch_size, "patch side");
    f->add_option("--sharpness", fit.sharpness, "fraction of sharpest patches kept");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err) == 0 ? cli::kExitOk : cli::kExitUsage;
    }

    try {
        if (*t) {
            if (!train_config.empty()) train.config = train_config;
            train.overrides = cli::parse_overrides(t->remaining());
            return cli::cmd_train(train);
        }
        if (*e) {
            if (*seed_opt) enhance.seed = seed;
            return cli::cmd_enhance(enhance);
        }
        if (*v) {
            if (*ref_opt) evaluate.reference = ref;
            if (*orig_opt) evaluate.originals = orig;
            if (*niqe_opt) evaluate.niqe_model = niqe;
            if (*cfg_opt) evaluate.config = eval_config;
            return cli::cmd_evaluate(evaluate);
        }
        return cli::cmd_fit_niqe(fit);
    } catch (const ConfigError& err) {
        std::fprintf(stderr, "config error: %s\n", err.what());
        return cli::kExitUsage;
    } catch (const LoadError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return cli::kExitUsage;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return cli::kExitFailure;
    }
}
