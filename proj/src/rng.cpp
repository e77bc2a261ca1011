#include "lumidiff/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "lumidiff/error.hpp"

namespace lumidiff {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis) noexcept {
    std::uint64_t h = basis;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

int Rng::uniform_int(int lo, int hi) {
    if (hi < lo) throw IndexError("uniform_int: empty range");
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t r;
    do {
        r = engine_();
    } while (r >= limit);
    return lo + static_cast<int>(r % span);
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor Rng::normal_tensor(Shape shape) {
    Tensor t(shape);
    for (double& v : t.values()) v = normal();
    return t;
}

std::string Rng::state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::set_state(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (is.fail()) throw LoadError("corrupted RNG state");
}

}  // namespace lumidiff
