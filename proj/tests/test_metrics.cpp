#include <cmath>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "lumidiff/error.hpp"
#include "lumidiff/metrics.hpp"

using namespace lumidiff;
using namespace lumidiff::metrics;

namespace {

const std::filesystem::path kData = LUMIDIFF_DATA_DIR;

// Direct LOE: lightness = channel max, nearest sampling onto a g x g grid,
// ordered-pair disagreement rate x 1000.
double naive_loe(const Image& e, const Image& o, int size) {
    const int gh = std::min(size, e.height()), gw = std::min(size, e.width());
    auto grid = [&](const Image& img) {
        std::vector<double> v;
        for (int i = 0; i < gh; ++i)
            for (int j = 0; j < gw; ++j) {
                const int y = static_cast<int>(std::floor((i + 0.5) * img.height() / gh));
                const int x = static_cast<int>(std::floor((j + 0.5) * img.width() / gw));
                double m = 0.0;
                for (int c = 0; c < img.channels(); ++c) m = std::max(m, img(c, y, x));
                v.push_back(m);
            }
        return v;
    };
    const auto a = grid(e), b = grid(o);
    double flips = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j) flips += ((a[i] >= a[j]) != (b[i] >= b[j]));
    return 1000.0 * flips / double(a.size() * a.size());
}

Image add_noise(const Image& img, double sigma, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t = img.tensor();
    for (auto& v : t.values()) v += sigma * rng.normal();
    return Image::clamped(std::move(t));
}

}  // namespace

TEST_CASE("psnr closed form") {
    const Image a(4, 4, 3, 0.5), b(4, 4, 3, 0.6);  // MSE = 0.01
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(std::isinf(psnr(a, a)));
    CHECK_THROWS_AS(psnr(a, Image(4, 2, 3)), ShapeError);
}

TEST_CASE("metric ssim is the shared routine and matches the oracle") {
    Rng rng(60);
    const Image a = test::random_image(rng, 20, 18), b = test::random_image(rng, 20, 18);
    CHECK(std::abs(ssim(a, b) - test::oracle::naive_ssim(a.tensor(), b.tensor(), 11, 1.5)) <= 1e-6);
    CHECK(ssim(a, a) == doctest::Approx(1.0));
}

TEST_CASE("lightness order error") {
    Rng rng(61);
    const Image o = test::random_image(rng, 30, 24);
    CHECK(loe(o, o) == 0.0);
    Tensor g = o.tensor();
    for (auto& v : g.values()) v = std::sqrt(v);  // monotone remap
    CHECK(loe(Image(g), o) == 0.0);
    Tensor inv = o.tensor();
    for (auto& v : inv.values()) v = 1.0 - v;
    const Image flipped(inv);
    CHECK(loe(flipped, o) > 0.0);
    for (int size : {5, 13, 50}) CHECK(loe(flipped, o, size) == doctest::Approx(naive_loe(flipped, o, size)).epsilon(1e-12));
    const Image big = test::random_image(rng, 120, 90), other = test::random_image(rng, 120, 90);
    CHECK(loe(big, other, 50) == doctest::Approx(naive_loe(big, other, 50)).epsilon(1e-12));
}

TEST_CASE("mscn of a flat image is zero") {
    const Tensor m = mscn(luma255(Image(16, 16, 3, 0.4)));
    CHECK(max_value(m) == doctest::Approx(0.0));
    CHECK(min_value(m) == doctest::Approx(0.0));
}

TEST_CASE("niqe model file round trip and errors") {
    const auto dir = test::scratch_dir("niqe");
    NiqeModel m;
    m.patch_size = 32;
    m.mu = {1.0, 2.0};
    m.cov = {2.0, 0.5, 0.5, 1.0};
    m.save(dir / "m.bin");
    CHECK(NiqeModel::load(dir / "m.bin") == m);
    CHECK_THROWS_AS(NiqeModel::load(dir / "missing.bin"), ConfigError);
    std::ofstream(dir / "junk.bin") << "garbage bytes here";
    CHECK_THROWS_AS(NiqeModel::load(dir / "junk.bin"), LoadError);
}

TEST_CASE("niqe rises with added noise on every bundled test photo") {
    const auto model = NiqeModel::load(kData / "niqe_pristine.bin");
    CHECK(model.dim() == kNiqeFeatures);
    const auto photos = list_images(kData / "photos", "*.png");
    REQUIRE(photos.size() == 5);
    for (std::size_t i = 0; i < photos.size(); ++i) {
        const Image clean = load_image(photos[i]);
        const double q_clean = niqe(clean, model);
        const double q_noisy = niqe(add_noise(clean, 0.2, i), model);
        INFO(photos[i].filename().string() << ": clean " << q_clean << ", noisy " << q_noisy);
        CHECK(std::isfinite(q_clean));
        CHECK(q_clean < q_noisy);
    }
}

TEST_CASE("evaluate_pairs: self comparison, no-reference mode, orphans") {
    const auto dir = test::scratch_dir("evaluate");
    Rng rng(62);
    for (const auto* sub : {"enh", "ref", "extra"}) std::filesystem::create_directories(dir / sub);
    for (const auto* name : {"a.png", "b.png"}) {
        const Image img = test::random_image(rng, 96, 96);
        save_image(img, dir / "enh" / name);
        save_image(img, dir / "ref" / name);
        save_image(img, dir / "extra" / name);
    }
    save_image(test::random_image(rng, 96, 96), dir / "extra" / "only_here.png");

    EvaluateOptions opt;
    opt.enhanced = dir / "enh";
    opt.reference = dir / "ref";
    opt.config_hash = "abc";
    const Report r = evaluate_pairs(opt);
    REQUIRE(r.per_image.size() == 2);
    CHECK(*r.means.ssim == doctest::Approx(1.0));
    CHECK(*r.means.loe == 0.0);
    CHECK(r.means.psnr_inf_count == 2);
    CHECK_FALSE(r.means.niqe.has_value());

    const auto j = nlohmann::json::parse(r.to_json());
    CHECK(j["config_hash"] == "abc");
    CHECK(j["per_image"].size() == 2);
    CHECK(j["per_image"][0]["name"] == "a.png");
    CHECK(j["means"].contains("ssim"));

    EvaluateOptions noref;
    noref.enhanced = dir / "enh";
    noref.originals = dir / "ref";
    noref.niqe_model = NiqeModel::load(kData / "niqe_pristine.bin");
    const Report n = evaluate_pairs(noref);
    CHECK_FALSE(n.means.psnr.has_value());
    CHECK_FALSE(n.means.ssim.has_value());
    CHECK(n.means.niqe.has_value());
    CHECK(n.means.loe.has_value());
    CHECK(n.to_csv().rfind("name,niqe,loe\n", 0) == 0);

    EvaluateOptions orphan;
    orphan.enhanced = dir / "extra";
    orphan.reference = dir / "ref";
    try {
        evaluate_pairs(orphan);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("only_here.png") != std::string::npos);
    }
}
