#include <cmath>
#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "lumidiff/config.hpp"
#include "lumidiff/error.hpp"

using namespace lumidiff;

TEST_CASE("toml subset parsing") {
    const auto doc = parse_toml(R"(
seed = 7   # trailing comment
[train]
iterations = 12
learning_rate = 2.5e-4
update_mode = "alternating"
[guidance]
positive = "say \"hi\"\tnow"
negative = 'raw \t'
[ablation]
no_arm = true
[loss]
gamma_sigma = inf
)");
    CHECK(std::get<std::int64_t>(doc.at("seed")) == 7);
    CHECK(std::get<std::int64_t>(doc.at("train.iterations")) == 12);
    CHECK(std::get<double>(doc.at("train.learning_rate")) == 2.5e-4);
    CHECK(std::get<std::string>(doc.at("guidance.positive")) == "say \"hi\"\tnow");
    CHECK(std::get<std::string>(doc.at("guidance.negative")) == "raw \\t");
    CHECK(std::get<bool>(doc.at("ablation.no_arm")));
    CHECK(std::isinf(std::get<double>(doc.at("loss.gamma_sigma"))));

    CHECK_THROWS_AS(parse_toml("a = 1\na = 2"), ConfigError);
    CHECK_THROWS_AS(parse_toml("a = [1, 2]"), ConfigError);
    CHECK_THROWS_AS(parse_toml("[[arr]]"), ConfigError);
    CHECK_THROWS_AS(parse_toml("just words"), ConfigError);
    CHECK_THROWS_AS(parse_toml("s = \"open"), ConfigError);
}

TEST_CASE("config schema: values, types and unknown keys") {
    const RunConfig c = config_from_toml("seed = 3\n[train]\niterations = 12\nupdate_mode = \"alternating\"\n"
                                         "[model]\nunet_width = 16\n[guidance]\nprob_prompt = \"positive\"\n");
    CHECK(c.seed == 3);
    CHECK(c.iterations == 12);
    CHECK(c.update_mode == UpdateMode::alternating);
    CHECK(c.unet_width == 16);
    CHECK(c.guidance.prob_prompt == guidance::ProbPrompt::positive);
    CHECK(c.loss.omega == 0.1);  // untouched default

    CHECK_THROWS_AS(config_from_toml("[train]\niterationz = 3\n"), ConfigError);
    CHECK_THROWS_AS(config_from_toml("[train]\niterations = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(config_from_toml("[train]\nupdate_mode = \"sideways\"\n"), ConfigError);
    CHECK_THROWS_AS(config_from_toml("seed = -1\n"), ConfigError);
    try {
        config_from_toml("[loss]\nomega = \"lots\"\n", "cfg.toml");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("loss.omega") != std::string::npos);
    }
    CHECK_THROWS_AS(load_config("/nonexistent/lumidiff.toml"), ConfigError);
}

TEST_CASE("overrides resolve leaf names and keep string paths verbatim") {
    CHECK(resolve_key("iterations") == "train.iterations");
    CHECK(resolve_key("omega") == "loss.omega");
    CHECK(resolve_key("train.iterations") == "train.iterations");
    CHECK(resolve_key("no_such_key") == "no_such_key");

    RunConfig c;
    apply_overrides(c, {{"iterations", "9"}, {"loss.varpi", "0"}, {"root", "1e3"}, {"no_semantic", "true"}});
    CHECK(c.iterations == 9);
    CHECK(c.loss.varpi == 0.0);
    CHECK(c.dataset.root == "1e3");
    CHECK(c.ablation.no_semantic);
    CHECK_THROWS_AS(apply_overrides(c, {{"nonsense", "1"}}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(c, {{"iterations", "many"}}), ConfigError);
}

TEST_CASE("validation names the offending key") {
    auto expect_key = [](RunConfig c, const std::string& key, bool need_dataset = false) {
        try {
            c.validate(need_dataset);
            FAIL("expected ConfigError for " << key);
        } catch (const ConfigError& e) {
            CHECK_MESSAGE(std::string(e.what()).find(key) != std::string::npos, e.what());
        }
    };
    RunConfig ok;
    CHECK_NOTHROW(ok.validate(false));
    expect_key(ok, "dataset.root", true);
    RunConfig c = ok;
    c.iterations = 0;
    expect_key(c, "train.iterations");
    c = ok;
    c.dataset.patch_size = 7;
    expect_key(c, "dataset.patch_size");
    c = ok;
    c.unet_width = 3;
    expect_key(c, "model.unet_width");
    c = ok;
    c.guidance.upsilon = 1.5;
    expect_key(c, "guidance.upsilon");
    c = ok;
    c.schedule.sample_steps = 500;
    expect_key(c, "schedule.sample_steps");
    c = ok;
    c.guidance.backend = guidance::BackendKind::pretrained;
    expect_key(c, "guidance.weights");
    c = ok;
    c.dataset.root = "/nonexistent/dir";
    expect_key(c, "dataset.root", true);
}

TEST_CASE("canonical toml round trips") {
    RunConfig c;
    c.seed = 11;
    c.learning_rate = 3.3e-4;
    c.loss.gamma_sigma = std::numeric_limits<double>::infinity();
    c.guidance.prompts.positive = "a \"quoted\" prompt";
    c.dataset.root = "some/dir";
    c.paths.output_dir = "runs/x";
    c.update_mode = UpdateMode::alternating;
    const std::string text = c.to_toml();
    const RunConfig back = config_from_toml(text);
    CHECK(back.to_toml() == text);
    CHECK(back.hash() == c.hash());
    CHECK(back.dataset.root == "some/dir");
    CHECK(back.learning_rate == c.learning_rate);
}

TEST_CASE("config hash tracks the trajectory only") {
    const RunConfig base;
    CHECK(base.hash_hex().size() == 16);
    RunConfig c = base;
    c.iterations = 9999;
    c.checkpoint_every = 3;
    c.paths.output_dir = "elsewhere";
    c.paths.niqe_model = "other.bin";
    c.dataset.root = "moved/data";
    CHECK(c.hash() == base.hash());
    for (auto mutate : std::vector<std::function<void(RunConfig&)>>{
             [](RunConfig& r) { r.seed = 1; }, [](RunConfig& r) { r.learning_rate *= 2; },
             [](RunConfig& r) { r.loss.omega = 0.2; }, [](RunConfig& r) { r.ablation.no_arm = true; },
             [](RunConfig& r) { r.unet_width = 16; }, [](RunConfig& r) { r.schedule.beta_end = 0.02; }}) {
        RunConfig m = base;
        mutate(m);
        CHECK(m.hash() != base.hash());
    }
    CHECK(base.checkpoint_path() == std::filesystem::path("runs/default/checkpoint.bin"));
}

TEST_CASE("resolved config snapshot is loadable") {
    const auto dir = test::scratch_dir("resolved");
    RunConfig c;
    c.seed = 5;
    c.dataset.root = dir;
    write_resolved_config(c, dir);
    const RunConfig back = load_config(dir / "resolved_config.toml");
    CHECK(back.seed == 5);
    CHECK(back.hash() == c.hash());
}
