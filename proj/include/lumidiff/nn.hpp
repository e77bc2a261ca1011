#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lumidiff/autodiff.hpp"
#include "lumidiff/rng.hpp"

namespace lumidiff::nn {

/// Ordered, named parameter tensors of one network.
class ParameterSet {
public:
    void add(std::string name, Tensor init);

    std::size_t tensors() const noexcept { return values_.size(); }
    /// Total number of scalar parameters.
    std::size_t count() const noexcept;
    const std::string& name(std::size_t i) const { return names_[i]; }
    const Tensor& operator[](std::size_t i) const { return values_[i]; }
    Tensor& operator[](std::size_t i) { return values_[i]; }

    /// Wraps each tensor as a graph leaf (trainable or constant).
    std::vector<ad::Var> bind(bool trainable) const;

    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);

    bool operator==(const ParameterSet&) const;

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
};

/// Concatenated gradients of bound parameters (zeros where none arrived).
std::vector<double> flatten_grads(const std::vector<ad::Var>& bound);

/// Uniform(-b, b) with b = sqrt(6 / fan_in) * gain; layout Cout x Cin x (k*k).
Tensor conv_weight(Rng& rng, int cout, int cin, int k, double gain = 1.0);
/// Layout M x N x 1.
Tensor linear_weight(Rng& rng, int m, int n, double gain = 1.0);

/// Sinusoidal embedding of a timestep, dim x 1 x 1.
Tensor timestep_embedding(int t, int dim);

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Adam {
public:
    Adam() = default;
    Adam(AdamConfig config, std::size_t n) : config_(config), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grads);

    const AdamConfig& config() const noexcept { return config_; }
    void set_config(const AdamConfig& c) noexcept { config_ = c; }
    std::int64_t steps() const noexcept { return steps_; }
    const std::vector<double>& first_moment() const noexcept { return m_; }
    const std::vector<double>& second_moment() const noexcept { return v_; }
    void restore(std::int64_t steps, std::vector<double> m, std::vector<double> v);

private:
    AdamConfig config_{};
    std::int64_t steps_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

/// Scales every gradient so the joint L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_global_norm(std::span<const std::span<double>> grads, double max_norm);

}  // namespace lumidiff::nn
