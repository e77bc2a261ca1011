#include "lumidiff/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lumidiff/error.hpp"
#include "lumidiff/frequency.hpp"

namespace lumidiff::pipeline {

namespace {

nn::AdamConfig adam_config(const RunConfig& c) { return {c.learning_rate, c.beta1, c.beta2, c.adam_eps}; }

std::string describe(const losses::LossBreakdown& b) {
    std::ostringstream os;
    os << "diff=" << b.diff << " smooth=" << b.smooth << " rec=" << b.rec << " col=" << b.col << " spa=" << b.spa
       << " total=" << b.total;
    return os.str();
}

// Sum of scalar Vars, or a zero constant for an empty list.
ad::Var accumulate(const std::vector<ad::Var>& xs) {
    if (xs.empty()) return ad::scalar(0.0);
    ad::Var s = xs.front();
    for (std::size_t i = 1; i < xs.size(); ++i) s = ad::add(s, xs[i]);
    return s;
}

struct ImageLosses {
    ad::Var diff, smooth, rec, col, spa;
};

ImageLosses image_losses(const TrainState& st, const Image& img, std::span<const ad::Var> p_illum,
                         std::span<const ad::Var> p_unet, const diffusion::SamplingPlan& rec_plan,
                         const guidance::Encoder& enc, Rng& rng) {
    const RunConfig& cfg = st.config;
    const double eps_div = cfg.illum.epsilon_div;
    const ad::Var low = ad::constant(img.tensor());

    ad::Var illum, structure;
    if (cfg.ablation.no_illumnet) {
        illum = ad::constant(channel_max_prior(img.tensor()));
        structure = low;
    } else {
        illum = st.illum.forward(p_illum, low);
        structure = illumnet::retinex_decompose(low, illum, eps_div);
    }

    const ad::Var bands = frequency::dwt2(illum);
    const ad::Var x0 = ad::add_scalar(ad::slice_channels(bands, 0, 3), -diffusion::kLowBandOffset);
    const int t = rng.uniform_int(1, st.schedule.steps());
    const Tensor eps = rng.normal_tensor(x0.shape());
    const ad::Var x_t = diffusion::q_sample(x0, t, eps, st.schedule);
    const ad::Var cond = diffusion::conditioning(structure, low);
    const ad::Var eps_pred = st.unet.forward(p_unet, x_t, cond, t);

    const ad::Var ll_hat = diffusion::reverse_chain(st.unet, p_unet, cond, rec_plan, rng);
    const ad::Var illum_hat = diffusion::assemble_illumination(ll_hat, bands, img.tensor());
    const ad::Var enhanced = diffusion::enhance(low, illum_hat, eps_div);

    ImageLosses out;
    out.diff = losses::diffusion_loss(ad::constant(eps), eps_pred, illum_hat, illum);
    out.smooth = losses::smooth_loss(illum_hat, illum, cfg.loss);
    ad::Var content = ad::scalar(0.0), spectral = ad::scalar(0.0), prob = ad::scalar(0.0), clip = ad::scalar(0.0);
    if (!cfg.ablation.no_arm) {
        content = losses::content_loss(enhanced, structure, cfg.loss);
        spectral = losses::spectral_loss(enhanced, structure, cfg.loss);
        if (!cfg.ablation.no_semantic) {
            prob = guidance::prob_loss(enc, cfg.guidance.prompts, enhanced, cfg.guidance.upsilon,
                                       cfg.guidance.prob_prompt);
            clip = guidance::clip_loss(enc, cfg.guidance.prompts, structure, enhanced);
        }
    }
    out.rec = losses::rec_loss(content, spectral, prob, clip, cfg.loss);
    out.col = losses::color_loss(enhanced);
    out.spa = losses::spa_loss(enhanced, low, cfg.loss);
    return out;
}

void apply_update(nn::ParameterSet& params, nn::Adam& opt, std::span<const double> grads) {
    auto flat = params.flatten();
    opt.step(flat, grads);
    params.assign(flat);
}

}  // namespace

TrainState TrainState::initialize(const RunConfig& config) {
    TrainState st{config,
                  diffusion::make_schedule(config.schedule.timesteps, config.schedule.beta_start,
                                           config.schedule.beta_end),
                  illumnet::IllumNet(config.illum, mix_seed(config.seed, 1)),
                  diffusion::NoisePredictor(config.unet(), mix_seed(config.seed, 2)),
                  {},
                  {},
                  Rng(mix_seed(config.seed, 3)),
                  0};
    st.illum_opt = nn::Adam(adam_config(config), st.illum.params().count());
    st.unet_opt = nn::Adam(adam_config(config), st.unet.params().count());
    return st;
}

Tensor channel_max_prior(const Tensor& low) {
    Tensor out(low.shape());
    const Shape s = low.shape();
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
            double m = low(0, y, x);
            for (int c = 1; c < s.c; ++c) m = std::max(m, low(c, y, x));
            for (int c = 0; c < s.c; ++c) out(c, y, x) = m;
        }
    return out;
}

losses::LossBreakdown train_step(TrainState& st, const std::vector<Image>& batch, const guidance::Encoder& enc) {
    if (batch.empty()) throw DataError("train_step needs a non-empty batch");
    const RunConfig& cfg = st.config;
    const auto rec_plan = diffusion::respace(st.schedule, cfg.rec_sample_steps);
    const auto p_illum = st.illum.params().bind(!cfg.ablation.no_illumnet);
    const auto p_unet = st.unet.params().bind(true);
    Rng rng = st.rng;

    std::vector<ad::Var> diff, smooth, rec, col, spa;
    try {
        for (const Image& raw : batch) {
            const Image img = to_rgb(raw);
            const auto l = image_losses(st, img, p_illum, p_unet, rec_plan, enc, rng);
            diff.push_back(l.diff);
            smooth.push_back(l.smooth);
            rec.push_back(l.rec);
            col.push_back(l.col);
            spa.push_back(l.spa);
        }
    } catch (const NumericError& e) {
        // NaN/inf reached an operator that validates its input
        throw TrainingError("non-finite value at iteration " + std::to_string(st.iteration + 1), e.what());
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    auto avg = [inv_b](const std::vector<ad::Var>& xs) { return ad::mul_scalar(accumulate(xs), inv_b); };
    const ad::Var d = avg(diff), s = avg(smooth), r = avg(rec), c = avg(col), a = avg(spa);
    const ad::Var total = losses::total_loss(d, s, r, c, a, cfg.loss);

    losses::LossBreakdown b{d.item(), s.item(), r.item(), c.item(), a.item(), total.item()};
    if (!b.all_finite()) throw TrainingError("non-finite loss at iteration " + std::to_string(st.iteration + 1), describe(b));

    ad::backward(total);
    auto g_illum = nn::flatten_grads(p_illum);
    auto g_unet = nn::flatten_grads(p_unet);
    for (const auto* g : {&g_illum, &g_unet})
        for (double v : *g)
            if (!std::isfinite(v))
                throw TrainingError("non-finite gradient at iteration " + std::to_string(st.iteration + 1), describe(b));
    const std::span<double> groups[2] = {g_illum, g_unet};
    nn::clip_global_norm(groups, cfg.grad_clip);

    const std::int64_t it = st.iteration + 1;
    const bool alternating = cfg.update_mode == UpdateMode::alternating;
    const bool step_illum = !cfg.ablation.no_illumnet && (!alternating || it % 2 == 1);
    const bool step_unet = !alternating || it % 2 == 0;
    if (step_illum) apply_update(st.illum.params(), st.illum_opt, g_illum);
    if (step_unet) apply_update(st.unet.params(), st.unet_opt, g_unet);
    st.rng = rng;
    st.iteration = it;
    return b;
}

namespace {

std::string csv_row(std::int64_t it, const losses::LossBreakdown& b) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(it), b.diff,
                  b.smooth, b.rec, b.col, b.spa, b.total);
    return buf;
}

constexpr const char* kCsvHeader = "iteration,diff,smooth,rec,col,spa,total\n";

// Keeps the header and the rows up to `iteration`, so a resumed run never
// duplicates or skips a row.
void truncate_log(const std::filesystem::path& path, std::int64_t iteration) {
    std::string kept = kCsvHeader;
    std::ifstream is(path);
    std::string line;
    bool first = true;
    while (is && std::getline(is, line)) {
        if (first) {
            first = false;
            continue;
        }
        if (line.empty()) continue;
        if (std::stoll(line.substr(0, line.find(','))) <= iteration) kept += line + "\n";
    }
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << kept;
}

}  // namespace

TrainState train(const RunConfig& config, const TrainOptions& options) {
    config.validate(true);
    const auto encoder = guidance::make_encoder(config.guidance);
    const Dataset data(config.dataset);
    const auto ckpt = config.checkpoint_path();
    std::filesystem::create_directories(config.paths.output_dir);
    write_resolved_config(config, config.paths.output_dir);

    TrainState st = TrainState::initialize(config);
    if (options.resume && std::filesystem::exists(ckpt)) {
        TrainState saved = load_checkpoint(ckpt);
        if (saved.config.hash() != config.hash())
            throw ConfigError("checkpoint '" + ckpt.string() + "' was written with a different configuration (hash " +
                              saved.config.hash_hex() + ", current " + config.hash_hex() + ")");
        saved.config = config;  // keep paths and iteration budget from the caller
        st = std::move(saved);
        if (st.iteration > config.iterations)
            throw ConfigError("checkpoint is at iteration " + std::to_string(st.iteration) +
                              ", beyond train.iterations = " + std::to_string(config.iterations));
    }
    const auto log_path = config.paths.output_dir / "loss.csv";
    truncate_log(log_path, st.iteration);
    std::ofstream log(log_path, std::ios::app);
    if (!log) throw IoError("cannot append to '" + log_path.string() + "'");

    while (st.iteration < config.iterations) {
        const auto batch = data.sample_batch(mix_seed(config.seed, static_cast<std::uint64_t>(st.iteration + 1)));
        const auto b = train_step(st, batch, *encoder);
        log << csv_row(st.iteration, b);
        log.flush();
        if (options.on_iteration) options.on_iteration(st.iteration, b);
        if (config.checkpoint_every > 0 && st.iteration % config.checkpoint_every == 0 &&
            st.iteration != config.iterations)
            save_checkpoint(st, ckpt);
    }
    save_checkpoint(st, ckpt);
    return st;
}

std::uint64_t file_seed(std::uint64_t seed, const std::string& name) { return mix_seed(seed, fnv1a(name)); }

namespace {

Image pad_edge(const Image& img, int h, int w) {
    Tensor out({img.channels(), h, w});
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out(c, y, x) = img(c, std::min(y, img.height() - 1), std::min(x, img.width() - 1));
    return Image(std::move(out));
}

}  // namespace

Enhancement enhance_image(const TrainState& model, const Image& input, std::uint64_t seed) {
    const RunConfig& cfg = model.config;
    const Image low_in = to_rgb(input);
    const int m = 2 * model.unet.size_multiple();
    const int h = (low_in.height() + m - 1) / m * m;
    const int w = (low_in.width() + m - 1) / m * m;
    const Image low = (h == low_in.height() && w == low_in.width()) ? low_in : pad_edge(low_in, h, w);

    Image illum, structure;
    if (cfg.ablation.no_illumnet) {
        illum = Image(channel_max_prior(low.tensor()));
        structure = low;
    } else {
        illum = illumnet::estimate_illumination(model.illum, low);
        structure = illumnet::retinex_decompose(low, illum, cfg.illum.epsilon_div);
    }
    const auto plan = diffusion::respace(model.schedule, cfg.schedule.sample_steps);
    Image illum_hat = diffusion::sample_illumination(structure, low, illum, model.unet, plan, seed);
    Image enhanced = diffusion::enhance(low, illum_hat, cfg.illum.epsilon_div);
    if (low.height() != low_in.height() || low.width() != low_in.width()) {
        illum_hat = crop(illum_hat, 0, 0, low_in.height(), low_in.width());
        enhanced = crop(enhanced, 0, 0, low_in.height(), low_in.width());
    }
    return {std::move(enhanced), std::move(illum_hat)};
}

}  // namespace lumidiff::pipeline
