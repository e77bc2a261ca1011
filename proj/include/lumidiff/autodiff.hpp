#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "lumidiff/tensor.hpp"

/// Minimal tape-free reverse-mode differentiation over Tensor values.
///
/// Every op returns a Var whose node keeps its inputs alive and a closure that
/// pushes the node's gradient back into them. `backward(root)` walks the graph
/// in reverse topological order. Inside a NoGradGuard scope ops record nothing,
/// which keeps inference memory flat.
namespace lumidiff::ad {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    /// Gradient accumulator, allocated as zeros on first use.
    Tensor& grad_buffer();
    const Tensor& input_value(std::size_t i) const { return inputs[i]->value; }
    bool input_needs_grad(std::size_t i) const { return inputs[i]->requires_grad; }
    Tensor& input_grad(std::size_t i) { return inputs[i]->grad_buffer(); }
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    double item() const { return node_->value.item(); }
    /// Accumulated gradient; zeros when nothing reached this Var.
    Tensor grad() const;
    const std::shared_ptr<Node>& node() const { return node_; }
    bool valid() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value);
inline Var scalar(double v) { return constant(Tensor::scalar(v)); }

bool grad_enabled() noexcept;

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Builds a result node. The closure is dropped when no input needs a gradient.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

/// Seeds d(root)/d(root) = 1 and accumulates gradients into every reachable Var.
void backward(const Var& root);

// ---- elementwise -------------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
/// s * x with s a 1x1x1 Var.
Var scale(const Var& s, const Var& x);
Var square(const Var& a);
Var abs(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var sigmoid(const Var& a);
Var silu(const Var& a);
/// Clamp to scalar bounds; gradient passes where lo <= x <= hi.
Var clamp(const Var& a, double lo, double hi);
/// Clamp to per-element bounds (constants).
Var clamp(const Var& a, const Tensor& lo, const Tensor& hi);
Var maximum(const Var& a, double floor);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(double s, const Var& a) { return mul_scalar(a, s); }
inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }
inline Var operator-(const Var& a, double s) { return add_scalar(a, -s); }

// ---- reductions and reshaping --------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
Var dot(const Var& a, const Var& b);
Var reshape(const Var& a, Shape shape);
/// One element as a scalar.
Var element(const Var& a, int c, int y, int x);
/// Per-channel spatial mean, C x 1 x 1.
Var spatial_mean(const Var& a);
/// Mean across channels, 1 x H x W.
Var channel_mean(const Var& a);
Var concat_channels(std::span<const Var> parts);
Var slice_channels(const Var& a, int first, int count);
Var crop(const Var& a, int y0, int x0, int h, int w);
/// Non-overlapping k x k box average.
Var avg_pool(const Var& a, int k);
Var upsample_nearest(const Var& a, int k);
/// Bilinear resampling with half-pixel centers (edge-clamped).
Var resize_bilinear(const Var& a, int h, int w);
/// Separable 'valid' filtering of every channel with the given 1-D taps.
Var filter_valid(const Var& a, std::span<const double> taps);

// ---- layers ----------------------------------------------------------------
/// Stride-1 'same' convolution. weight: Cout x Cin x (k*k), bias: Cout x 1 x 1.
Var conv2d(const Var& x, const Var& weight, const Var& bias);
Var add_channel_bias(const Var& x, const Var& bias);
/// weight: M x N x 1, x: N x 1 x 1, bias: M x 1 x 1.
Var linear(const Var& x, const Var& weight, const Var& bias);

}  // namespace lumidiff::ad
