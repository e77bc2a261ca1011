#include "lumidiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lumidiff/error.hpp"

namespace lumidiff {

std::string Shape::str() const {
    return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {
    if (shape.c < 0 || shape.h < 0 || shape.w < 0) throw ShapeError("negative tensor extent " + shape.str());
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape.size())
        throw ShapeError("tensor of shape " + shape.str() + " given " + std::to_string(data_.size()) + " values");
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_.str());
    return data_[0];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape.size() != data_.size())
        throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
    return Tensor(shape, data_);
}

Tensor& Tensor::operator+=(const Tensor& other) {
    require_same_shape(*this, other, "tensor +=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double sum(const Tensor& t) noexcept { return std::accumulate(t.values().begin(), t.values().end(), 0.0); }

double sum_squares(const Tensor& t) noexcept {
    double s = 0.0;
    for (double v : t.values()) s += v * v;
    return s;
}

double mean(const Tensor& t) noexcept { return t.empty() ? 0.0 : sum(t) / static_cast<double>(t.size()); }

double min_value(const Tensor& t) noexcept {
    double m = std::numeric_limits<double>::infinity();
    for (double v : t.values()) m = std::min(m, v);
    return m;
}

double max_value(const Tensor& t) noexcept {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : t.values()) m = std::max(m, v);
    return m;
}

}  // namespace lumidiff
