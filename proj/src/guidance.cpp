#include "lumidiff/guidance.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"
#include "lumidiff/error.hpp"
#include "lumidiff/rng.hpp"

namespace lumidiff::guidance {

namespace {

constexpr char kEncoderMagic[8] = {'L', 'M', 'D', 'F', 'E', 'N', 'C', '1'};

ad::Var normalize(const ad::Var& v) {
    return ad::scale(ad::div(ad::scalar(1.0), ad::sqrt(ad::sum(ad::square(v)))), v);
}

ad::Var as_rgb(const ad::Var& img) {
    if (img.shape().c == 3) return img;
    if (img.shape().c != 1) throw ShapeError("encoder expects 1 or 3 channels, got " + img.shape().str());
    const ad::Var parts[3] = {img, img, img};
    return ad::concat_channels(parts);
}

ad::Var cosine_with(const ad::Var& image_embedding, const Embedding& text) {
    if (image_embedding.shape().c != text.dim()) throw ShapeError("embedding dimensions differ");
    return ad::dot(image_embedding, ad::constant(text.as_tensor()));
}

const std::string& pick(const PromptPair& p, ProbPrompt target) {
    return target == ProbPrompt::negative ? p.negative : p.positive;
}

}  // namespace

void PromptPair::validate() const {
    if (positive.empty() || negative.empty()) throw ConfigError("guidance prompts must be non-empty");
    if (positive == negative) throw ConfigError("guidance.positive and guidance.negative must differ");
}

Embedding Embedding::normalized(std::vector<double> v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (!(sq > 0.0) || !std::isfinite(sq)) throw NumericError("cannot normalize a zero or non-finite embedding");
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : v) x *= inv;
    return Embedding{std::move(v)};
}

double Embedding::norm() const noexcept {
    double sq = 0.0;
    for (double x : vec) sq += x * x;
    return std::sqrt(sq);
}

Tensor Embedding::as_tensor() const { return Tensor({dim(), 1, 1}, vec); }

double cosine(const Embedding& a, const Embedding& b) {
    if (a.dim() != b.dim()) throw ShapeError("embedding dimensions differ");
    return std::inner_product(a.vec.begin(), a.vec.end(), b.vec.begin(), 0.0) / (a.norm() * b.norm());
}

Embedding Encoder::encode_image(const Image& img) const {
    ad::NoGradGuard guard;
    const ad::Var e = encode_image(ad::constant(img.tensor()));
    return Embedding{std::vector<double>(e.value().values().begin(), e.value().values().end())};
}

void fwht(std::vector<double>& v) {
    const std::size_t n = v.size();
    if (n == 0 || (n & (n - 1)) != 0) throw ShapeError("fwht length must be a power of two");
    for (std::size_t len = 1; len < n; len <<= 1)
        for (std::size_t i = 0; i < n; i += len << 1)
            for (std::size_t j = i; j < i + len; ++j) {
                const double a = v[j];
                const double b = v[j + len];
                v[j] = a + b;
                v[j + len] = a - b;
            }
}

StubEncoder::StubEncoder(std::uint64_t seed, int dim) : seed_(seed), dim_(dim) {
    if (dim_ < 1) throw ConfigError("embedding dimension must be positive");
    const std::size_t n_in = 3u * kStubResolution * kStubResolution;
    std::size_t n = 1;
    while (n < n_in) n <<= 1;
    if (static_cast<std::size_t>(dim_) > n) throw ConfigError("embedding dimension too large");
    Rng rng(mix_seed(seed_, 0x1a6e));
    auto proj = std::make_shared<Projection>();
    proj->signs.resize(n);
    for (double& s : proj->signs) s = (rng.next_u64() >> 63) ? 1.0 : -1.0;
    // partial Fisher-Yates for distinct rows
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int k = 0; k < dim_; ++k) {
        const int j = rng.uniform_int(k, static_cast<int>(n) - 1);
        std::swap(perm[k], perm[j]);
    }
    proj->rows.assign(perm.begin(), perm.begin() + dim_);
    proj_ = std::move(proj);
}

Embedding StubEncoder::encode_text(const std::string& prompt) const {
    if (prompt.empty()) throw ConfigError("prompt must be non-empty");
    Rng rng(mix_seed(fnv1a(prompt) ^ seed_, 0x7e47));
    std::vector<double> v(dim_);
    for (double& x : v) x = rng.normal();
    return Embedding::normalized(std::move(v));
}

ad::Var StubEncoder::encode_image(const ad::Var& img) const {
    const ad::Var x = ad::add_scalar(ad::resize_bilinear(as_rgb(img), kStubResolution, kStubResolution), -0.5);
    const auto proj = proj_;
    const std::size_t n = proj->signs.size();
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    std::vector<double> buf(n, 0.0);
    const auto& xv = x.value().values();
    for (std::size_t i = 0; i < xv.size(); ++i) buf[i] = proj->signs[i] * xv[i];
    fwht(buf);
    Tensor out({dim_, 1, 1});
    for (int k = 0; k < dim_; ++k) out[k] = scale * buf[proj->rows[k]];
    const ad::Var projected = ad::make_result(std::move(out), {x}, [proj, scale](ad::Node& self) {
        std::vector<double> u(proj->signs.size(), 0.0);
        for (std::size_t k = 0; k < proj->rows.size(); ++k) u[proj->rows[k]] = scale * self.grad[k];
        fwht(u);
        Tensor& g = self.input_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += proj->signs[i] * u[i];
    });
    return normalize(projected);
}

PretrainedEncoder::PretrainedEncoder(const std::filesystem::path& weights) {
    if (weights.empty() || !std::filesystem::exists(weights))
        throw BackendError("pretrained encoder weights not found at '" + weights.string() +
                           "'; set guidance.backend = \"stub\" to run without downloaded weights");
    std::ifstream is(weights, std::ios::binary);
    if (!is) throw BackendError("cannot open encoder weights '" + weights.string() + "'");
    char magic[8];
    if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kEncoderMagic))
        throw LoadError("'" + weights.string() + "' is not an encoder weights file");
    using detail::read_pod;
    dim_ = static_cast<int>(read_pod<std::uint32_t>(is));
    height_ = static_cast<int>(read_pod<std::uint32_t>(is));
    width_ = static_cast<int>(read_pod<std::uint32_t>(is));
    const auto count = read_pod<std::uint32_t>(is);
    if (dim_ < 1 || height_ < 1 || width_ < 1 || static_cast<long>(height_) * width_ > (1l << 24))
        throw LoadError("encoder weights header out of range");
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = read_pod<std::uint32_t>(is);
        std::string text(len, '\0');
        if (!is.read(text.data(), len)) throw LoadError("unexpected end of file");
        prompts_.emplace_back(std::move(text), Embedding::normalized(detail::read_doubles(is, dim_)));
    }
    const int n = 3 * height_ * width_;
    weight_ = Tensor({dim_, n, 1}, detail::read_doubles(is, static_cast<std::size_t>(dim_) * n));
    bias_ = Tensor({dim_, 1, 1}, detail::read_doubles(is, dim_));
}

void PretrainedEncoder::write(const std::filesystem::path& path, int height, int width,
                              const std::vector<std::pair<std::string, Embedding>>& prompts, const Tensor& weight,
                              const Tensor& bias) {
    if (prompts.empty()) throw ConfigError("encoder needs at least one prompt");
    const int dim = prompts.front().second.dim();
    if (weight.shape() != Shape{dim, 3 * height * width, 1} || bias.shape() != Shape{dim, 1, 1})
        throw ShapeError("encoder head shape mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os.write(kEncoderMagic, 8);
    using detail::write_pod;
    write_pod<std::uint32_t>(os, dim);
    write_pod<std::uint32_t>(os, height);
    write_pod<std::uint32_t>(os, width);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(prompts.size()));
    for (const auto& [text, emb] : prompts) {
        if (emb.dim() != dim) throw ShapeError("prompt embeddings differ in dimension");
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        detail::write_doubles(os, emb.vec.data(), emb.vec.size());
    }
    detail::write_doubles(os, weight.data(), weight.size());
    detail::write_doubles(os, bias.data(), bias.size());
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

Embedding PretrainedEncoder::encode_text(const std::string& prompt) const {
    if (prompt.empty()) throw ConfigError("prompt must be non-empty");
    for (const auto& [text, emb] : prompts_)
        if (text == prompt) return emb;
    throw BackendError("prompt '" + prompt + "' has no exported embedding in the weights file");
}

ad::Var PretrainedEncoder::encode_image(const ad::Var& img) const {
    const ad::Var x = ad::resize_bilinear(as_rgb(img), height_, width_);
    const ad::Var flat = ad::reshape(x, {3 * height_ * width_, 1, 1});
    return normalize(ad::linear(flat, ad::constant(weight_), ad::constant(bias_)));
}

std::unique_ptr<Encoder> make_encoder(const GuidanceConfig& config) {
    config.prompts.validate();
    if (config.backend == BackendKind::pretrained) return std::make_unique<PretrainedEncoder>(config.weights);
    return std::make_unique<StubEncoder>(config.stub_seed);
}

double clip_term(double cos_positive, double cos_negative) {
    return 1.0 / (1.0 + std::exp(cos_positive - cos_negative));
}

ad::Var clip_loss(const Encoder& enc, const PromptPair& prompts, const ad::Var& structure, const ad::Var& enhanced) {
    prompts.validate();
    const Embedding tp = enc.encode_text(prompts.positive);
    const Embedding tn = enc.encode_text(prompts.negative);
    ad::Var total;
    for (const ad::Var* img : {&structure, &enhanced}) {
        const ad::Var e = enc.encode_image(*img);
        // e^{cn} / (e^{cp} + e^{cn}) = sigmoid(cn - cp)
        const ad::Var term = ad::sigmoid(ad::sub(cosine_with(e, tn), cosine_with(e, tp)));
        total = total.valid() ? ad::add(total, term) : term;
    }
    return total;
}

double clip_loss(const Encoder& enc, const PromptPair& prompts, const Image& structure, const Image& enhanced) {
    ad::NoGradGuard guard;
    return clip_loss(enc, prompts, ad::constant(structure.tensor()), ad::constant(enhanced.tensor())).item();
}

ad::Var prob_loss(const Encoder& enc, const PromptPair& prompts, const ad::Var& enhanced, double upsilon,
                  ProbPrompt target) {
    if (!(upsilon >= 0.0 && upsilon <= 1.0)) throw ConfigError("guidance.upsilon must lie in [0, 1]");
    prompts.validate();
    const Embedding t = enc.encode_text(pick(prompts, target));
    return ad::abs(ad::add_scalar(cosine_with(enc.encode_image(enhanced), t), -upsilon));
}

double prob_loss(const Encoder& enc, const PromptPair& prompts, const Image& enhanced, double upsilon,
                 ProbPrompt target) {
    ad::NoGradGuard guard;
    return prob_loss(enc, prompts, ad::constant(enhanced.tensor()), upsilon, target).item();
}

}  // namespace lumidiff::guidance
