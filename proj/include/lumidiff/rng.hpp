#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "lumidiff/tensor.hpp"

namespace lumidiff {

/// splitmix64 finalizer; used to derive independent seeds from (seed, salt) pairs.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept;

/// FNV-1a over bytes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 14695981039346656037ull) noexcept;

/// Seeded generator with a serializable state. Normal draws use Box-Muller
/// without a cached second value, so the engine state is the whole state.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi);
    double normal();
    Tensor normal_tensor(Shape shape);

    std::string state() const;
    void set_state(const std::string& state);

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace lumidiff
