#include "lumidiff/losses.hpp"

#include <algorithm>
#include <cmath>

#include "lumidiff/error.hpp"
#include "lumidiff/frequency.hpp"

namespace lumidiff::losses {

namespace {

ad::Var c(const Tensor& t) { return ad::constant(t); }

double eval(const ad::Var& v) { return v.item(); }

}  // namespace

void LossWeights::validate() const {
    auto nonneg = [](double v, const char* name) {
        if (!(v >= 0.0)) throw ConfigError(std::string("loss.") + name + " must be >= 0");
    };
    nonneg(omega, "omega");
    nonneg(varpi, "varpi");
    nonneg(vartheta1, "vartheta1");
    nonneg(vartheta2, "vartheta2");
    if (!(gamma_sigma > 0.0)) throw ConfigError("loss.gamma_sigma must be > 0");
    if (ssim_window < 1 || ssim_window % 2 == 0) throw ConfigError("loss.ssim_window must be a positive odd integer");
    if (!(ssim_k1 > 0.0) || !(ssim_k2 > 0.0)) throw ConfigError("loss.ssim_k1 and loss.ssim_k2 must be > 0");
    if (spa_region < 1) throw ConfigError("loss.spa_region must be >= 1");
}

std::vector<double> gaussian_taps(int window, double sigma) {
    if (window < 1 || window % 2 == 0) throw ConfigError("SSIM window must be a positive odd integer");
    std::vector<double> taps(window);
    const int r = window / 2;
    double total = 0.0;
    for (int i = 0; i < window; ++i) {
        const double d = i - r;
        taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += taps[i];
    }
    for (double& t : taps) t /= total;
    return taps;
}

ad::Var ssim(const ad::Var& a, const ad::Var& b, const SsimParams& p) {
    require_same_shape(a.value(), b.value(), "ssim");
    if (a.shape().h < p.window || a.shape().w < p.window)
        throw ShapeError("ssim needs at least " + std::to_string(p.window) + "x" + std::to_string(p.window) +
                         " inputs, got " + a.shape().str());
    const auto taps = gaussian_taps(p.window, p.sigma);
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    const ad::Var mu_a = ad::filter_valid(a, taps);
    const ad::Var mu_b = ad::filter_valid(b, taps);
    const ad::Var mu_aa = ad::square(mu_a);
    const ad::Var mu_bb = ad::square(mu_b);
    const ad::Var mu_ab = ad::mul(mu_a, mu_b);
    const ad::Var s_aa = ad::sub(ad::filter_valid(ad::square(a), taps), mu_aa);
    const ad::Var s_bb = ad::sub(ad::filter_valid(ad::square(b), taps), mu_bb);
    const ad::Var s_ab = ad::sub(ad::filter_valid(ad::mul(a, b), taps), mu_ab);
    const ad::Var num = ad::mul(ad::add_scalar(ad::mul_scalar(mu_ab, 2.0), c1), ad::add_scalar(ad::mul_scalar(s_ab, 2.0), c2));
    const ad::Var den = ad::mul(ad::add_scalar(ad::add(mu_aa, mu_bb), c1), ad::add_scalar(ad::add(s_aa, s_bb), c2));
    return ad::mean(ad::div(num, den));
}

double ssim(const Tensor& a, const Tensor& b, const SsimParams& p) {
    ad::NoGradGuard guard;
    return eval(ssim(c(a), c(b), p));
}

ad::Var diffusion_loss(const ad::Var& eps_true, const ad::Var& eps_pred, const ad::Var& illum_hat,
                       const ad::Var& illum) {
    require_same_shape(eps_true.value(), eps_pred.value(), "diffusion_loss (noise)");
    require_same_shape(illum_hat.value(), illum.value(), "diffusion_loss (illumination)");
    return ad::add(ad::mean(ad::square(ad::sub(eps_pred, eps_true))), ad::mean(ad::square(ad::sub(illum_hat, illum))));
}

double diffusion_loss(const Tensor& eps_true, const Tensor& eps_pred, const Image& illum_hat, const Image& illum) {
    ad::NoGradGuard guard;
    return eval(diffusion_loss(c(eps_true), c(eps_pred), c(illum_hat.tensor()), c(illum.tensor())));
}

ad::Var smooth_loss(const ad::Var& illum_hat, const ad::Var& illum, const LossWeights& w) {
    require_same_shape(illum_hat.value(), illum.value(), "smooth_loss");
    const Tensor& a = illum_hat.value();
    const Tensor& b = illum.value();
    const Shape s = a.shape();
    const int hw = s.h * s.w;
    const double inv_two_var = std::isinf(w.gamma_sigma) ? 0.0 : 1.0 / (2.0 * w.gamma_sigma * w.gamma_sigma);
    const double norm = 1.0 / (static_cast<double>(hw) * s.c);  // mean over pixels and channels
    constexpr int r = 2;

    // fn(k, n, 1 / |K(k)|) for every ordered pair; border pixels have fewer neighbours
    auto visit = [s](auto&& fn) {
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                const int ny_count = std::min(y + r, s.h - 1) - std::max(y - r, 0) + 1;
                const int nx_count = std::min(x + r, s.w - 1) - std::max(x - r, 0) + 1;
                const int count = ny_count * nx_count - 1;
                if (count == 0) continue;
                const double inv = 1.0 / count;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        const int ny = y + dy;
                        const int nx = x + dx;
                        if ((dy == 0 && dx == 0) || ny < 0 || ny >= s.h || nx < 0 || nx >= s.w) continue;
                        fn(y * s.w + x, ny * s.w + nx, inv);
                    }
            }
    };
    auto gamma = [s, hw, inv_two_var](const Tensor& b, int k, int n) {
        if (inv_two_var == 0.0) return 1.0;
        double d2 = 0.0;
        for (int ch = 0; ch < s.c; ++ch) {
            const double d = b[ch * hw + k] - b[ch * hw + n];
            d2 += d * d;
        }
        return std::exp(-d2 * inv_two_var);
    };

    double total = 0.0;
    visit([&](int k, int n, double inv) {
        double l1 = 0.0;
        for (int ch = 0; ch < s.c; ++ch)
            l1 += std::abs(a[ch * hw + k] - a[ch * hw + n]) + std::abs(b[ch * hw + k] - b[ch * hw + n]);
        total += inv * gamma(b, k, n) * l1;
    });

    return ad::make_result(Tensor::scalar(total * norm), {illum_hat, illum},
                           [s, hw, inv_two_var, norm, visit, gamma](ad::Node& self) {
        const double g0 = self.grad[0] * norm;
        const Tensor& a = self.input_value(0);
        const Tensor& b = self.input_value(1);
        Tensor* ga = self.input_needs_grad(0) ? &self.input_grad(0) : nullptr;
        Tensor* gb = self.input_needs_grad(1) ? &self.input_grad(1) : nullptr;
        auto sgn = [](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); };
        visit([&](int k, int n, double inv) {
            const double gm = inv * gamma(b, k, n);
            double l1 = 0.0;
            for (int ch = 0; ch < s.c; ++ch) {
                const int ik = ch * hw + k;
                const int in = ch * hw + n;
                const double da = sgn(a[ik] - a[in]) * gm * g0;
                const double db = sgn(b[ik] - b[in]) * gm * g0;
                if (ga) {
                    (*ga)[ik] += da;
                    (*ga)[in] -= da;
                }
                if (gb) {
                    (*gb)[ik] += db;
                    (*gb)[in] -= db;
                }
                l1 += std::abs(a[ik] - a[in]) + std::abs(b[ik] - b[in]);
            }
            if (gb && inv_two_var != 0.0) {
                // d gamma / d b_k = -gamma * 2 (b_k - b_n) * inv_two_var
                const double coeff = -2.0 * inv_two_var * gm * l1 * g0;
                for (int ch = 0; ch < s.c; ++ch) {
                    const int ik = ch * hw + k;
                    const int in = ch * hw + n;
                    const double d = coeff * (b[ik] - b[in]);
                    (*gb)[ik] += d;
                    (*gb)[in] -= d;
                }
            }
        });
    });
}

double smooth_loss(const Image& illum_hat, const Image& illum, const LossWeights& w) {
    ad::NoGradGuard guard;
    return eval(smooth_loss(c(illum_hat.tensor()), c(illum.tensor()), w));
}

ad::Var content_loss(const ad::Var& enhanced, const ad::Var& structure, const LossWeights& w) {
    require_same_shape(enhanced.value(), structure.value(), "content_loss");
    const SsimParams p = SsimParams::from(w);
    const ad::Var edge = ad::add_scalar(ad::neg(ssim(frequency::laplacian(enhanced), frequency::laplacian(structure), p)), 1.0);
    const ad::Var plain = ad::add_scalar(ad::neg(ssim(enhanced, structure, p)), 1.0);
    return ad::add(edge, plain);
}

double content_loss(const Image& enhanced, const Image& structure, const LossWeights& w) {
    ad::NoGradGuard guard;
    return eval(content_loss(c(enhanced.tensor()), c(structure.tensor()), w));
}

ad::Var spectral_loss(const ad::Var& enhanced, const ad::Var& structure, const LossWeights& w) {
    require_same_shape(enhanced.value(), structure.value(), "spectral_loss");
    const int ch = enhanced.shape().c;
    auto spectrum = [ch](const ad::Var& img) {
        return frequency::dft_amp_pha(ad::slice_channels(frequency::dwt2(img), ch, 3 * ch));
    };
    const ad::Var se = spectrum(enhanced);
    const ad::Var sr = spectrum(structure);
    const int k = 3 * ch;
    const ad::Var amp = ad::mean(ad::abs(ad::sub(ad::slice_channels(se, 0, k), ad::slice_channels(sr, 0, k))));
    const ad::Var pha = ad::mean(
        ad::abs(frequency::wrap_angle(ad::sub(ad::slice_channels(se, k, k), ad::slice_channels(sr, k, k)))));
    return ad::add(ad::mul_scalar(amp, w.vartheta1), ad::mul_scalar(pha, w.vartheta2));
}

double spectral_loss(const Image& enhanced, const Image& structure, const LossWeights& w) {
    ad::NoGradGuard guard;
    return eval(spectral_loss(c(enhanced.tensor()), c(structure.tensor()), w));
}

ad::Var color_loss(const ad::Var& enhanced) {
    if (enhanced.shape().c != 3) throw ShapeError("color_loss expects 3 channels, got " + enhanced.shape().str());
    const ad::Var m = ad::spatial_mean(enhanced);
    const ad::Var r = ad::element(m, 0, 0, 0);
    const ad::Var g = ad::element(m, 1, 0, 0);
    const ad::Var b = ad::element(m, 2, 0, 0);
    return ad::add(ad::add(ad::square(ad::sub(r, g)), ad::square(ad::sub(r, b))), ad::square(ad::sub(g, b)));
}

double color_loss(const Image& enhanced) {
    ad::NoGradGuard guard;
    return eval(color_loss(c(enhanced.tensor())));
}

ad::Var spa_loss(const ad::Var& enhanced, const ad::Var& low, const LossWeights& w) {
    require_same_shape(enhanced.value(), low.value(), "spa_loss");
    const int r = w.spa_region;
    const Shape s = enhanced.shape();
    if (r < 1 || s.h % r != 0 || s.w % r != 0)
        throw ShapeError("spa_loss: region " + std::to_string(r) + " does not divide " + s.str());
    const ad::Var e = ad::avg_pool(ad::channel_mean(enhanced), r);
    const ad::Var i = ad::avg_pool(ad::channel_mean(low), r);
    const int gh = s.h / r;
    const int gw = s.w / r;
    ad::Var total = ad::scalar(0.0);
    auto add_pairs = [&](int dy, int dx) {
        const int h = gh - dy;
        const int wd = gw - dx;
        if (h < 1 || wd < 1) return;
        const ad::Var de = ad::abs(ad::sub(ad::crop(e, dy, dx, h, wd), ad::crop(e, 0, 0, h, wd)));
        const ad::Var di = ad::abs(ad::sub(ad::crop(i, dy, dx, h, wd), ad::crop(i, 0, 0, h, wd)));
        total = ad::add(total, ad::sum(ad::square(ad::sub(de, di))));
    };
    add_pairs(0, 1);
    add_pairs(1, 0);
    // each unordered pair appears once above and twice in the neighbourhood sum
    return ad::mul_scalar(total, 2.0 / (gh * gw));
}

double spa_loss(const Image& enhanced, const Image& low, const LossWeights& w) {
    ad::NoGradGuard guard;
    return eval(spa_loss(c(enhanced.tensor()), c(low.tensor()), w));
}

double rec_loss(const RecParts& parts, const LossWeights& w) {
    return parts.content + parts.spectral + w.varpi * (parts.prob + parts.clip);
}

ad::Var rec_loss(const ad::Var& content, const ad::Var& spectral, const ad::Var& prob, const ad::Var& clip,
                 const LossWeights& w) {
    return ad::add(ad::add(content, spectral), ad::mul_scalar(ad::add(prob, clip), w.varpi));
}

bool LossBreakdown::all_finite() const noexcept {
    for (double v : {diff, smooth, rec, col, spa, total})
        if (!std::isfinite(v)) return false;
    return true;
}

LossBreakdown total_loss(const TotalParts& p, const LossWeights& w) {
    LossBreakdown b{p.diff, p.smooth, p.rec, p.col, p.spa, 0.0};
    b.total = p.diff + w.omega * p.smooth + p.rec + p.col + p.spa;
    return b;
}

ad::Var total_loss(const ad::Var& diff, const ad::Var& smooth, const ad::Var& rec, const ad::Var& col,
                   const ad::Var& spa, const LossWeights& w) {
    return ad::add(ad::add(ad::add(ad::add(diff, ad::mul_scalar(smooth, w.omega)), rec), col), spa);
}

}  // namespace lumidiff::losses
