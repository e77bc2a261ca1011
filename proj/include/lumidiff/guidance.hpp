#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "lumidiff/autodiff.hpp"
#include "lumidiff/imaging.hpp"

namespace lumidiff::guidance {

inline constexpr int kEmbeddingDim = 512;
inline constexpr int kStubResolution = 224;

struct PromptPair {
    std::string positive = "a bright, well-exposed, clear photo";
    std::string negative = "a dark, underexposed, noisy photo";
    /// Throws ConfigError if either is empty or both are equal.
    void validate() const;
};

/// Unit-norm embedding vector.
struct Embedding {
    std::vector<double> vec;

    /// Normalizes in place; throws NumericError for a zero vector.
    static Embedding normalized(std::vector<double> v);
    int dim() const noexcept { return static_cast<int>(vec.size()); }
    double norm() const noexcept;
    Tensor as_tensor() const;
};

double cosine(const Embedding& a, const Embedding& b);

enum class BackendKind { stub, pretrained };

/// Which prompt the probability loss measures against.
enum class ProbPrompt { negative, positive };

struct GuidanceConfig {
    BackendKind backend = BackendKind::stub;
    std::uint64_t stub_seed = 0;
    std::filesystem::path weights;
    PromptPair prompts;
    double upsilon = 0.9;
    ProbPrompt prob_prompt = ProbPrompt::negative;
};

/// Text and image encoder sharing one embedding space. Implementations are
/// immutable after construction.
class Encoder {
public:
    virtual ~Encoder() = default;
    virtual int dim() const noexcept = 0;
    virtual Embedding encode_text(const std::string& prompt) const = 0;
    /// Differentiable image embedding (dim x 1 x 1, unit norm) of a C x H x W input.
    virtual ad::Var encode_image(const ad::Var& img) const = 0;

    Embedding encode_image(const Image& img) const;
};

/// Deterministic, weight-free encoder. Text: a seeded hash of the prompt picks a
/// random Gaussian direction. Image: bilinear resize to 224 x 224, shift by -0.5,
/// then a fixed subsampled randomized Hadamard projection and normalization.
class StubEncoder final : public Encoder {
public:
    explicit StubEncoder(std::uint64_t seed = 0, int dim = kEmbeddingDim);

    int dim() const noexcept override { return dim_; }
    Embedding encode_text(const std::string& prompt) const override;
    ad::Var encode_image(const ad::Var& img) const override;
    using Encoder::encode_image;

private:
    std::uint64_t seed_;
    int dim_;
    struct Projection {
        std::vector<double> signs;  // length 2^k >= 3 * 224 * 224
        std::vector<int> rows;      // dim distinct Hadamard rows
    };
    std::shared_ptr<const Projection> proj_;
};

/// Adapter for embeddings exported from a pretrained model. The weights file
/// carries a prompt -> text-embedding table and a linear image head applied to
/// a fixed-resolution resize of the input. File layout (little endian):
///   "LMDFENC1", u32 dim, u32 height, u32 width, u32 prompt_count,
///   prompt_count x { u32 length, bytes, dim x f64 },
///   dim x (3 * height * width) x f64 weights, dim x f64 bias.
class PretrainedEncoder final : public Encoder {
public:
    explicit PretrainedEncoder(const std::filesystem::path& weights);

    int dim() const noexcept override { return dim_; }
    Embedding encode_text(const std::string& prompt) const override;
    ad::Var encode_image(const ad::Var& img) const override;
    using Encoder::encode_image;

    static void write(const std::filesystem::path& path, int height, int width,
                      const std::vector<std::pair<std::string, Embedding>>& prompts, const Tensor& weight,
                      const Tensor& bias);

private:
    int dim_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<std::pair<std::string, Embedding>> prompts_;
    Tensor weight_;  // dim x (3 * height * width) x 1
    Tensor bias_;    // dim x 1 x 1
};

/// Builds the configured backend; a missing pretrained weights file raises
/// BackendError suggesting the stub.
std::unique_ptr<Encoder> make_encoder(const GuidanceConfig& config);

/// e^{cn} / (e^{cp} + e^{cn}) for one image's cosines against (T_p, T_n).
double clip_term(double cos_positive, double cos_negative);

/// Sum over {structure, enhanced} of the softmax weight of the negative prompt.
ad::Var clip_loss(const Encoder& enc, const PromptPair& prompts, const ad::Var& structure, const ad::Var& enhanced);
double clip_loss(const Encoder& enc, const PromptPair& prompts, const Image& structure, const Image& enhanced);

/// |cos(Phi(enhanced), Phi(T)) - upsilon| with T the negative prompt by default.
ad::Var prob_loss(const Encoder& enc, const PromptPair& prompts, const ad::Var& enhanced, double upsilon,
                  ProbPrompt target = ProbPrompt::negative);
double prob_loss(const Encoder& enc, const PromptPair& prompts, const Image& enhanced, double upsilon,
                 ProbPrompt target = ProbPrompt::negative);

/// In-place fast Walsh-Hadamard transform (unnormalized); size must be a power of two.
void fwht(std::vector<double>& v);

}  // namespace lumidiff::guidance
