#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "lumidiff/diffusion.hpp"
#include "lumidiff/error.hpp"
#include "lumidiff/frequency.hpp"

using namespace lumidiff;
using namespace lumidiff::diffusion;

TEST_CASE("linear schedule endpoints and cumulative products") {
    const auto s = make_schedule(200, 1e-4, 0.04);
    REQUIRE(s.steps() == 200);
    CHECK(s.beta.front() == doctest::Approx(1e-4));
    CHECK(s.beta.back() == doctest::Approx(0.04));
    CHECK(s.beta[1] - s.beta[0] == doctest::Approx((0.04 - 1e-4) / 199));
    double prod = 1.0;
    for (int t = 1; t <= 200; ++t) {
        prod *= 1.0 - s.beta[t - 1];
        CHECK(s.alpha_bar[t - 1] == doctest::Approx(prod).epsilon(1e-12));
        CHECK(s.sigma[t - 1] == doctest::Approx(std::sqrt(s.beta[t - 1])));
    }
    CHECK_THROWS_AS(s.check(0), IndexError);
    CHECK_THROWS_AS(s.check(201), IndexError);
    CHECK_THROWS_AS(make_schedule(10, 0.1, 0.01), ConfigError);
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.01), ConfigError);
    CHECK_THROWS_AS(make_schedule(10, 0.01, 1.0), ConfigError);
    CHECK_THROWS_AS(make_schedule(0, 0.01, 0.02), ConfigError);
}

TEST_CASE("random schedules are monotone") {
    Rng rng(30);
    for (int i = 0; i < 50; ++i) {
        const double b0 = 1e-5 + 1e-2 * rng.uniform();
        const double b1 = b0 + 0.5 * rng.uniform();
        const auto s = make_schedule(rng.uniform_int(2, 400), b0, b1);
        for (int t = 1; t < s.steps(); ++t) {
            CHECK(s.beta[t] >= s.beta[t - 1]);
            CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
        }
        CHECK(s.alpha_bar.back() > 0.0);
    }
}

TEST_CASE("respacing") {
    const auto base = make_schedule(200, 1e-4, 0.04);
    const auto full = respace(base, 200);
    CHECK(full.schedule.beta == base.beta);
    const auto p = respace(base, 20);
    REQUIRE(p.model_timesteps.size() == 20);
    CHECK(p.model_timesteps.front() == 10);
    CHECK(p.model_timesteps.back() == 200);
    const auto q = respace(base, 3);  // ceil(200/3) = 67, ceil(400/3) = 134
    CHECK(q.model_timesteps == std::vector<int>{67, 134, 200});
    for (int k = 1; k <= 3; ++k)
        CHECK(q.schedule.alpha_bar[k - 1] == doctest::Approx(base.alpha_bar[q.model_timesteps[k - 1] - 1]).epsilon(1e-12));
    CHECK_THROWS_AS(respace(base, 0), ConfigError);
    CHECK_THROWS_AS(respace(base, 201), ConfigError);
}

TEST_CASE("forward marginal moments match monte carlo") {
    const auto s = make_schedule(200, 1e-4, 0.04);
    Rng rng(31);
    const double x0 = 0.7;
    for (int t : {5, 60, 120}) {
        const int n = 100000;
        const Tensor eps = rng.normal_tensor({1, 1, n});
        const Tensor xt = q_sample(Tensor({1, 1, n}, x0), t, eps, s);
        const double m = mean(xt);
        double var = 0.0;
        for (double v : xt.values()) var += (v - m) * (v - m);
        var /= n - 1;
        const double ab = s.alpha_bar[t - 1];
        const double m_ref = std::sqrt(ab) * x0, v_ref = 1.0 - ab;
        CHECK(std::abs(m - m_ref) <= 0.05 * std::abs(m_ref));
        CHECK(std::abs(var - v_ref) <= 0.05 * v_ref);
    }
}

TEST_CASE("perfect noise estimate at t = 1 recovers x0") {
    const auto s = make_schedule(200, 1e-4, 0.04);
    Rng rng(32);
    const Tensor x0 = test::random_tensor(rng, {3, 4, 4}, -1, 1);
    const Tensor eps = rng.normal_tensor(x0.shape());
    const Tensor x1 = q_sample(x0, 1, eps, s);
    const Tensor rec = p_sample_step(x1, 1, eps, s, rng.normal_tensor(x0.shape()));  // noise ignored at t = 1
    CHECK(max_abs_diff(rec, x0) <= 1e-6);
}

TEST_CASE("reverse step matches the posterior-mean formula") {
    const auto s = make_schedule(50, 1e-3, 0.05);
    Rng rng(33);
    const Tensor xt = rng.normal_tensor({2, 3, 3}), e = rng.normal_tensor({2, 3, 3}), z = rng.normal_tensor({2, 3, 3});
    const int t = 17;
    const Tensor out = p_sample_step(xt, t, e, s, z);
    const double b = s.beta[t - 1], ab = s.alpha_bar[t - 1];
    for (std::size_t i = 0; i < xt.size(); ++i) {
        const double mu = (xt[i] - b / std::sqrt(1 - ab) * e[i]) / std::sqrt(1 - b);
        CHECK(out[i] == doctest::Approx(mu + std::sqrt(b) * z[i]).epsilon(1e-12));
    }
    const Tensor no_noise = p_sample_step(xt, t, e, s, Tensor{});
    CHECK(no_noise[0] == doctest::Approx((xt[0] - b / std::sqrt(1 - ab) * e[0]) / std::sqrt(1 - b)));
}

TEST_CASE("noise predictor shapes, determinism and gradients") {
    const NoisePredictor net({9, 3, 8, 3}, 4);
    CHECK(net.size_multiple() == 4);
    Rng rng(34);
    const Tensor x = rng.normal_tensor({3, 4, 4});
    const Tensor cond = test::random_tensor(rng, {6, 4, 4}, -1, 1);
    const auto p = net.params().bind(false);
    const Tensor a = net.forward(p, ad::constant(x), ad::constant(cond), 7).value();
    const Tensor b = net.forward(p, ad::constant(x), ad::constant(cond), 7).value();
    const Tensor c = net.forward(p, ad::constant(x), ad::constant(cond), 8).value();
    CHECK(a.shape() == x.shape());
    CHECK(max_abs_diff(a, b) == 0.0);
    CHECK(max_abs_diff(a, c) > 0.0);  // timestep embedding matters
    CHECK_THROWS_AS(net.forward(p, ad::constant(rng.normal_tensor({3, 6, 6})), ad::constant(Tensor({6, 6, 6})), 1),
                    ShapeError);

    const ad::Var probe = ad::constant(test::random_tensor(rng, {3, 4, 4}, -1, 1));
    CHECK(test::gradcheck_params(
              [&](std::span<const ad::Var> q) { return ad::dot(net.forward(q, ad::constant(x), ad::constant(cond), 7), probe); },
              net.params(), rng) < 1e-3);
    CHECK(test::gradcheck([&](const ad::Var& v) { return ad::dot(net.forward(p, v, ad::constant(cond), 7), probe); }, x,
                          rng) < 1e-3);
}

TEST_CASE("sampling is seeded and stays inside [I_L, 1]") {
    const NoisePredictor net({9, 3, 8, 2}, 1);
    const auto base = make_schedule(40, 1e-4, 0.04);
    const auto plan = respace(base, 5);
    Rng rng(35);
    const Image low = test::random_image(rng, 8, 8, 3, 0.0, 0.3);
    Tensor m = low.tensor();
    for (auto& v : m.values()) v = v + (1.0 - v) * 0.5;
    const Image illum(m);
    const Image structure = Image::clamped(low.tensor());
    int steps = 0;
    const Image a = sample_illumination(structure, low, illum, net, plan, 9, [&](int) { ++steps; });
    const Image b = sample_illumination(structure, low, illum, net, plan, 9);
    const Image c = sample_illumination(structure, low, illum, net, plan, 10);
    CHECK(steps == 5);
    CHECK(max_abs_diff(a.tensor(), b.tensor()) == 0.0);
    CHECK(max_abs_diff(a.tensor(), c.tensor()) > 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) {
        CHECK(a.tensor()[i] >= low.tensor()[i]);
        CHECK(a.tensor()[i] <= 1.0);
    }
}

TEST_CASE("enhancement divides by the illumination and never darkens") {
    const Image e = enhance(Image(4, 4, 3, 0.2), Image(4, 4, 3, 0.5));
    CHECK(max_abs_diff(e.tensor(), Tensor({3, 4, 4}, 0.4)) < 1e-15);
    Rng rng(36);
    for (int i = 0; i < 20; ++i) {
        const Image low = test::random_image(rng, 6, 6);
        Tensor m = low.tensor();
        for (auto& v : m.values()) v = v + (1.0 - v) * rng.uniform();
        const Image out = enhance(low, Image(m));
        CHECK(mean(out.tensor()) >= mean(low.tensor()) - 1e-6);
        CHECK(max_value(out.tensor()) <= 1.0);
    }
}

TEST_CASE("conditioning stacks shifted LL bands of structure and input") {
    Rng rng(37);
    const Tensor r = test::random_tensor(rng, {3, 4, 4}), l = test::random_tensor(rng, {3, 4, 4});
    const Tensor c = conditioning(ad::constant(r), ad::constant(l)).value();
    REQUIRE(c.shape() == Shape{6, 2, 2});
    const auto pr = frequency::dwt2(r), pl = frequency::dwt2(l);
    CHECK(c(0, 1, 1) == doctest::Approx(pr.ll(0, 1, 1) - kLowBandOffset));
    CHECK(c(5, 0, 1) == doctest::Approx(pl.ll(2, 0, 1) - kLowBandOffset));
}
