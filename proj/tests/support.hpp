#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lumidiff/autodiff.hpp"
#include "lumidiff/imaging.hpp"
#include "lumidiff/nn.hpp"
#include "lumidiff/rng.hpp"

namespace lumidiff::test {

inline Tensor random_tensor(Rng& rng, Shape s, double lo = 0.0, double hi = 1.0) {
    Tensor t(s);
    for (auto& v : t.values()) v = lo + (hi - lo) * rng.uniform();
    return t;
}

inline Image random_image(Rng& rng, int h, int w, int c = 3, double lo = 0.0, double hi = 1.0) {
    return Image(random_tensor(rng, {c, h, w}, lo, hi));
}

/// Random values in [lo, hi] where, within each channel, every pair of pixels
/// differs by at least ~(hi - lo) / (2 H W). Losses built on |x_k - x_n| have
/// kinks where two pixels coincide; a finite-difference stencil that straddles
/// one does not measure a derivative, so gradient checks use these inputs.
inline Tensor separated_tensor(Rng& rng, Shape s, double lo = 0.1, double hi = 0.9) {
    Tensor t(s);
    const int n = s.h * s.w;
    const double step = (hi - lo) / n;
    std::vector<int> order(n);
    for (int c = 0; c < s.c; ++c) {
        for (int i = 0; i < n; ++i) order[i] = i;
        for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
        for (int i = 0; i < n; ++i)
            t[static_cast<std::size_t>(c) * n + order[i]] = lo + step * (i + 0.25 + 0.5 * rng.uniform());
    }
    return t;
}

inline Tensor unit_direction(Rng& rng, Shape s) {
    Tensor d = rng.normal_tensor(s);
    const double n = std::sqrt(sum_squares(d));
    d *= 1.0 / n;
    return d;
}

/// |a - b| / max(|a|, |b|); two values below `floor` in magnitude count as equal.
inline double rel_err(double a, double b, double floor = 1e-9) {
    const double m = std::max(std::abs(a), std::abs(b));
    return m < floor ? 0.0 : std::abs(a - b) / m;
}

/// Worst relative error between the analytic directional derivative of a scalar
/// function and its central difference, over `directions` random unit directions.
inline double gradcheck(const std::function<ad::Var(const ad::Var&)>& f, const Tensor& x, Rng& rng,
                        int directions = 20, double h = 1e-4) {
    const ad::Var xv = ad::parameter(x);
    const ad::Var y = f(xv);
    ad::backward(y);
    const Tensor g = xv.grad();
    double worst = 0.0;
    for (int k = 0; k < directions; ++k) {
        const Tensor d = unit_direction(rng, x.shape());
        Tensor xp = x, xm = x;
        for (std::size_t i = 0; i < x.size(); ++i) {
            xp[i] += h * d[i];
            xm[i] -= h * d[i];
        }
        const double fd = (f(ad::constant(xp)).item() - f(ad::constant(xm)).item()) / (2 * h);
        double an = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) an += g[i] * d[i];
        worst = std::max(worst, rel_err(an, fd));
    }
    return worst;
}

/// Same check over a parameter set; `f` receives the bound parameters.
inline double gradcheck_params(const std::function<ad::Var(std::span<const ad::Var>)>& f, const nn::ParameterSet& ps,
                               Rng& rng, int directions = 20, double h = 1e-4) {
    const auto bound = ps.bind(true);
    ad::backward(f(bound));
    const auto g = nn::flatten_grads(bound);
    const auto base = ps.flatten();
    double worst = 0.0;
    for (int k = 0; k < directions; ++k) {
        const Tensor d = unit_direction(rng, {static_cast<int>(base.size()), 1, 1});
        auto eval = [&](double s) {
            nn::ParameterSet moved = ps;
            std::vector<double> flat = base;
            for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += s * d[i];
            moved.assign(flat);
            return f(moved.bind(false)).item();
        };
        const double fd = (eval(h) - eval(-h)) / (2 * h);
        double an = 0.0;
        for (std::size_t i = 0; i < base.size(); ++i) an += g[i] * d[i];
        worst = std::max(worst, rel_err(an, fd));
    }
    return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("lumidiff_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace lumidiff::test
