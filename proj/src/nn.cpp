#include "lumidiff/nn.hpp"

#include <cmath>

#include "lumidiff/error.hpp"

namespace lumidiff::nn {

void ParameterSet::add(std::string name, Tensor init) {
    names_.push_back(std::move(name));
    values_.push_back(std::move(init));
}

std::size_t ParameterSet::count() const noexcept {
    std::size_t n = 0;
    for (const auto& t : values_) n += t.size();
    return n;
}

std::vector<ad::Var> ParameterSet::bind(bool trainable) const {
    std::vector<ad::Var> out;
    out.reserve(values_.size());
    for (const auto& t : values_) out.push_back(trainable ? ad::parameter(t) : ad::constant(t));
    return out;
}

std::vector<double> ParameterSet::flatten() const {
    std::vector<double> flat;
    flat.reserve(count());
    for (const auto& t : values_) flat.insert(flat.end(), t.values().begin(), t.values().end());
    return flat;
}

void ParameterSet::assign(std::span<const double> flat) {
    if (flat.size() != count())
        throw ShapeError("parameter vector of " + std::to_string(flat.size()) + " for " + std::to_string(count()));
    std::size_t off = 0;
    for (auto& t : values_) {
        std::copy_n(flat.begin() + off, t.size(), t.values().begin());
        off += t.size();
    }
}

bool ParameterSet::operator==(const ParameterSet& other) const {
    if (names_ != other.names_ || values_.size() != other.values_.size()) return false;
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (values_[i].shape() != other.values_[i].shape()) return false;
        if (!std::equal(values_[i].values().begin(), values_[i].values().end(), other.values_[i].values().begin()))
            return false;
    }
    return true;
}

std::vector<double> flatten_grads(const std::vector<ad::Var>& bound) {
    std::vector<double> flat;
    for (const auto& v : bound) {
        const Tensor g = v.grad();
        flat.insert(flat.end(), g.values().begin(), g.values().end());
    }
    return flat;
}

Tensor conv_weight(Rng& rng, int cout, int cin, int k, double gain) {
    Tensor w({cout, cin, k * k});
    const double bound = gain * std::sqrt(6.0 / (cin * k * k));
    for (double& v : w.values()) v = (2.0 * rng.uniform() - 1.0) * bound;
    return w;
}

Tensor linear_weight(Rng& rng, int m, int n, double gain) {
    Tensor w({m, n, 1});
    const double bound = gain * std::sqrt(6.0 / n);
    for (double& v : w.values()) v = (2.0 * rng.uniform() - 1.0) * bound;
    return w;
}

Tensor timestep_embedding(int t, int dim) {
    Tensor e({dim, 1, 1});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / std::max(half, 1));
        e[i] = std::sin(t * freq);
        e[half + i] = std::cos(t * freq);
    }
    return e;
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw ShapeError("Adam: parameter/gradient size mismatch");
    ++steps_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
        v_[i] = b2 * v_[i] + (1.0 - b2) * grads[i] * grads[i];
        const double m_hat = m_[i] / c1;
        const double v_hat = v_[i] / c2;
        params[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
}

void Adam::restore(std::int64_t steps, std::vector<double> m, std::vector<double> v) {
    if (m.size() != v.size()) throw LoadError("Adam moments differ in length");
    steps_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
}

double clip_global_norm(std::span<const std::span<double>> grads, double max_norm) {
    double sq = 0.0;
    for (auto g : grads)
        for (double v : g) sq += v * v;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto g : grads)
            for (double& v : g) v *= s;
    }
    return norm;
}

}  // namespace lumidiff::nn
