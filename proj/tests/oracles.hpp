#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "lumidiff/tensor.hpp"

// Brute-force reference implementations, written independently of the library.
namespace lumidiff::test::oracle {

// SSIM with an explicit 2-D Gaussian window and per-position loops.
inline double naive_ssim(const Tensor& a, const Tensor& b, int win, double sigma, double k1 = 0.01, double k2 = 0.03) {
    std::vector<double> w(static_cast<std::size_t>(win) * win);
    double total = 0.0;
    const double r = (win - 1) / 2.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double v = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2 * sigma * sigma));
            w[i * win + j] = v;
            total += v;
        }
    for (auto& v : w) v /= total;
    const double c1 = k1 * k1, c2 = k2 * k2;
    double acc = 0.0;
    int n = 0;
    for (int c = 0; c < a.channels(); ++c)
        for (int y = 0; y + win <= a.height(); ++y)
            for (int x = 0; x + win <= a.width(); ++x) {
                double ma = 0, mb = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        ma += w[i * win + j] * a(c, y + i, x + j);
                        mb += w[i * win + j] * b(c, y + i, x + j);
                    }
                double va = 0, vb = 0, cab = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        const double da = a(c, y + i, x + j) - ma, db = b(c, y + i, x + j) - mb;
                        va += w[i * win + j] * da * da;
                        vb += w[i * win + j] * db * db;
                        cab += w[i * win + j] * da * db;
                    }
                acc += (2 * ma * mb + c1) * (2 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++n;
            }
    return acc / n;
}

inline Tensor laplacian(const Tensor& x) {
    Tensor out(x.shape());
    auto at = [&](int c, int y, int xx) {
        y = std::clamp(y, 0, x.height() - 1);
        xx = std::clamp(xx, 0, x.width() - 1);
        return x(c, y, xx);
    };
    for (int c = 0; c < x.channels(); ++c)
        for (int y = 0; y < x.height(); ++y)
            for (int xx = 0; xx < x.width(); ++xx)
                out(c, y, xx) = at(c, y - 1, xx) + at(c, y + 1, xx) + at(c, y, xx - 1) + at(c, y, xx + 1) - 4 * x(c, y, xx);
    return out;
}

}  // namespace lumidiff::test::oracle
