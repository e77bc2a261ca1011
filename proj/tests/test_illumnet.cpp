#include "doctest.h"
#include "support.hpp"
#include "lumidiff/error.hpp"
#include "lumidiff/illumnet.hpp"

using namespace lumidiff;
using namespace lumidiff::illumnet;

TEST_CASE("estimator stays lightweight") {
    const IllumNet net;
    CHECK(net.params().count() < kMaxParameters);
    // 3->16, 16->16, 16->3 with 3x3 kernels and biases
    CHECK(net.params().count() == 3 * 16 * 9 + 16 + 16 * 16 * 9 + 16 + 16 * 3 * 9 + 3);
}

TEST_CASE("illumination keeps shape and lies in [I_L, 1]") {
    Rng rng(20);
    for (int seed = 0; seed < 5; ++seed) {
        const IllumNet net({}, seed);
        const Image low = test::random_image(rng, 6 + 2 * seed, 8);
        const Image m = estimate_illumination(net, low);
        CHECK(m.tensor().shape() == low.tensor().shape());
        double slack = 1.0;
        for (std::size_t i = 0; i < low.tensor().size(); ++i) slack = std::min(slack, m.tensor()[i] - low.tensor()[i]);
        CHECK(slack >= 0.0);
        CHECK(max_value(m.tensor()) <= 1.0);
    }
}

TEST_CASE("a white input forces unit illumination") {
    const IllumNet net({}, 3);
    const Image m = estimate_illumination(net, Image(4, 4, 3, 1.0));
    CHECK(min_value(m.tensor()) == doctest::Approx(1.0));
}

TEST_CASE("retinex examples") {
    const Image low(4, 4, 3, 0.2);
    CHECK(max_abs_diff(retinex_decompose(low, Image(4, 4, 3, 0.5)).tensor(), Tensor({3, 4, 4}, 0.4)) < 1e-15);
    CHECK(max_abs_diff(retinex_decompose(low, Image(4, 4, 3, 1.0)).tensor(), low.tensor()) == 0.0);
    CHECK(max_value(retinex_decompose(Image(4, 4, 3, 0.0), Image(4, 4, 3, 0.0)).tensor()) == 0.0);
    CHECK_THROWS_AS(retinex_decompose(low, Image(4, 2, 3, 0.5)), ShapeError);
}

TEST_CASE("retinex round trip where illumination exceeds the guard") {
    Rng rng(21);
    for (int i = 0; i < 20; ++i) {
        const Image low = test::random_image(rng, 6, 6);
        Tensor m = low.tensor();
        for (auto& v : m.values()) v = std::min(1.0, v + (1.0 - v) * rng.uniform());
        const Image r = retinex_decompose(low, Image(m));
        CHECK(min_value(r.tensor()) >= 0.0);
        CHECK(max_value(r.tensor()) <= 1.0);
        double worst = 0.0;
        for (std::size_t k = 0; k < m.size(); ++k)
            if (m[k] >= 1e-4) worst = std::max(worst, std::abs(r.tensor()[k] * m[k] - low.tensor()[k]));
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("estimator gradients match finite differences") {
    Rng rng(22);
    const IllumNet net({}, 5);
    const Tensor low = test::random_tensor(rng, {3, 8, 8}, 0.05, 0.6);
    const ad::Var probe = ad::constant(test::random_tensor(rng, {3, 8, 8}, -1, 1));
    CHECK(test::gradcheck_params([&](std::span<const ad::Var> p) { return ad::dot(net.forward(p, ad::constant(low)), probe); },
                                 net.params(), rng) < 1e-3);
    const auto fixed = net.params().bind(false);
    CHECK(test::gradcheck([&](const ad::Var& v) { return ad::dot(net.forward(fixed, v), probe); }, low, rng) < 1e-3);
}
