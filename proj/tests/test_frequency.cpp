#include <cmath>
#include <complex>
#include <numbers>

#include "doctest.h"
#include "support.hpp"
#include "lumidiff/error.hpp"
#include "lumidiff/frequency.hpp"

using namespace lumidiff;
using namespace lumidiff::frequency;

TEST_CASE("haar on a single 2x2 block matches hand arithmetic") {
    // [[a, b], [c, d]] = [[1, 2], [3, 4]]
    const Tensor x({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
    const auto p = dwt2(x);
    CHECK(p.ll[0] == doctest::Approx(5.0));   // (1+2+3+4)/2
    CHECK(p.lh[0] == doctest::Approx(-2.0));  // (1+2-3-4)/2
    CHECK(p.hl[0] == doctest::Approx(-1.0));  // (1-2+3-4)/2
    CHECK(p.hh[0] == doctest::Approx(0.0));   // (1-2-3+4)/2
}

TEST_CASE("constant image has LL = 2c and zero details") {
    const auto p = dwt2(Tensor({3, 4, 6}, 0.3));
    CHECK(max_abs_diff(p.ll, Tensor({3, 2, 3}, 0.6)) < 1e-15);
    CHECK(max_value(p.lh) == 0.0);
    CHECK(max_value(p.hh) == 0.0);
}

TEST_CASE("dwt2 rejects odd sizes") {
    CHECK_THROWS_AS(dwt2(Tensor({1, 3, 4})), ShapeError);
}

TEST_CASE("perfect reconstruction and energy preservation on random images") {
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = 2 * rng.uniform_int(1, 12), w = 2 * rng.uniform_int(1, 12);
        const Tensor x = test::random_tensor(rng, {3, h, w}, -1.0, 1.0);
        const auto p = dwt2(x);
        CHECK(max_abs_diff(idwt2(p), x) <= 1e-12);
        const double e = sum_squares(p.ll) + sum_squares(p.lh) + sum_squares(p.hl) + sum_squares(p.hh);
        CHECK(std::abs(e - sum_squares(x)) / sum_squares(x) <= 1e-12);
    }
}

TEST_CASE("differentiable haar agrees with the tensor form and passes finite differences") {
    Rng rng(11);
    const Tensor x = test::random_tensor(rng, {3, 4, 6});
    const Tensor stacked = dwt2(ad::constant(x)).value();
    const auto p = dwt2(x);
    CHECK(stacked(0, 0, 0) == p.ll(0, 0, 0));
    CHECK(stacked(3, 1, 2) == p.lh(0, 1, 2));
    CHECK(stacked(11, 1, 1) == p.hh(2, 1, 1));
    CHECK(max_abs_diff(idwt2(ad::constant(stacked)).value(), x) < 1e-12);
    const ad::Var probe = ad::constant(test::random_tensor(rng, {12, 2, 3}, -1, 1));
    CHECK(test::gradcheck([&](const ad::Var& v) { return ad::dot(dwt2(v), probe); }, x, rng) < 1e-6);
}

namespace {

// Direct O(N^2) double loop.
std::vector<std::complex<double>> brute_dft(const Tensor& x) {
    const int h = x.height(), w = x.width();
    std::vector<std::complex<double>> out(static_cast<std::size_t>(h) * w);
    for (int u = 0; u < h; ++u)
        for (int v = 0; v < w; ++v) {
            std::complex<double> acc = 0;
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    const double ang = -2.0 * std::numbers::pi * (double(u * y) / h + double(v * xx) / w);
                    acc += x(0, y, xx) * std::polar(1.0, ang);
                }
            out[static_cast<std::size_t>(u) * w + v] = acc;
        }
    return out;
}

}  // namespace

TEST_CASE("dft amplitude and phase match a brute-force oracle") {
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor x = test::random_tensor(rng, {1, 4, 4}, -1.0, 1.0);
        const auto sp = dft_amp_pha(x);
        const auto ref = brute_dft(x);
        for (std::size_t i = 0; i < ref.size(); ++i) {
            CHECK(std::abs(sp.amp[i] - std::abs(ref[i])) <= 1e-8);
            if (std::abs(ref[i]) > 1e-9) CHECK(std::abs(wrap_angle(sp.pha[i] - std::arg(ref[i]))) <= 1e-8);
        }
        CHECK(max_abs_diff(inverse_dft(sp), x) < 1e-12);
    }
    // non-square, non-power-of-two plane
    const Tensor y = test::random_tensor(rng, {1, 3, 5});
    const auto sy = dft_amp_pha(y);
    const auto ry = brute_dft(y);
    for (std::size_t i = 0; i < ry.size(); ++i) CHECK(std::abs(sy.amp[i] - std::abs(ry[i])) <= 1e-9);
}

TEST_CASE("dft of a delta has unit amplitude everywhere") {
    Tensor x({1, 4, 4});
    x(0, 0, 0) = 1.0;
    const auto sp = dft_amp_pha(x);
    for (double a : sp.amp.values()) CHECK(a == doctest::Approx(1.0));
    for (double p : sp.pha.values()) CHECK(std::abs(p) < 1e-12);
}

TEST_CASE("differentiable dft passes finite differences") {
    Rng rng(13);
    // odd extents: no Nyquist bins, so no phase sits on the branch cut
    const Tensor x = test::random_tensor(rng, {2, 3, 5}, 0.1, 1.0);
    const ad::Var probe = ad::constant(test::random_tensor(rng, {4, 3, 5}, -1, 1));
    CHECK(test::gradcheck([&](const ad::Var& v) { return ad::dot(dft_amp_pha(v), probe); }, x, rng) < 1e-5);
}

TEST_CASE("wrap_angle maps into (-pi, pi]") {
    const double pi = std::numbers::pi;
    CHECK(wrap_angle(pi) == doctest::Approx(pi));
    CHECK(wrap_angle(-pi) == doctest::Approx(pi));
    CHECK(wrap_angle(3 * pi / 2) == doctest::Approx(-pi / 2));
    CHECK(wrap_angle(0.25) == 0.25);
    Rng rng(14);
    for (int i = 0; i < 200; ++i) {
        const double a = (rng.uniform() - 0.5) * 40.0;
        const double w = wrap_angle(a);
        CHECK(w > -pi);
        CHECK(w <= pi);
        CHECK(std::abs(std::remainder(a - w, 2 * pi)) < 1e-9);
    }
}

TEST_CASE("laplacian stencil with replicate borders") {
    Tensor x({1, 3, 3});
    x(0, 1, 1) = 1.0;
    const Tensor l = laplacian(x);
    CHECK(l(0, 1, 1) == -4.0);
    CHECK(l(0, 0, 1) == 1.0);
    CHECK(l(0, 0, 0) == 0.0);
    CHECK(max_abs_diff(laplacian(Tensor({2, 4, 4}, 0.7)), Tensor({2, 4, 4})) < 1e-15);
    Rng rng(15);
    const Tensor y = test::random_tensor(rng, {3, 5, 4});
    const ad::Var probe = ad::constant(test::random_tensor(rng, {3, 5, 4}, -1, 1));
    CHECK(test::gradcheck([&](const ad::Var& v) { return ad::dot(laplacian(v), probe); }, y, rng) < 1e-6);
}
