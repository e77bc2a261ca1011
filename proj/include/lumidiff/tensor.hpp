#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lumidiff {

/// Planar channel-major extent. Every array in the library is C x H x W;
/// vectors are stored as D x 1 x 1 and scalars as 1 x 1 x 1.
struct Shape {
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t size() const noexcept {
        return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }
    std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// Dense double-precision array in C x H x W layout.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor({1, 1, 1}, v); }

    const Shape& shape() const noexcept { return shape_; }
    int channels() const noexcept { return shape_.c; }
    int height() const noexcept { return shape_.h; }
    int width() const noexcept { return shape_.w; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(int c, int y, int x) noexcept { return data_[index(c, y, x)]; }
    double operator()(int c, int y, int x) const noexcept { return data_[index(c, y, x)]; }
    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    std::span<double> channel(int c) noexcept { return {data_.data() + c * shape_.plane(), shape_.plane()}; }
    std::span<const double> channel(int c) const noexcept {
        return {data_.data() + c * shape_.plane(), shape_.plane()};
    }

    /// Value of a single-element tensor.
    double item() const;
    bool all_finite() const noexcept;
    Tensor reshaped(Shape shape) const;

    Tensor& operator+=(const Tensor& other);
    Tensor& operator*=(double s) noexcept;

private:
    std::size_t index(int c, int y, int x) const noexcept {
        return (static_cast<std::size_t>(c) * shape_.h + y) * shape_.w + x;
    }

    Shape shape_{};
    std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

double max_abs_diff(const Tensor& a, const Tensor& b);
double sum(const Tensor& t) noexcept;
double sum_squares(const Tensor& t) noexcept;
double mean(const Tensor& t) noexcept;
double min_value(const Tensor& t) noexcept;
double max_value(const Tensor& t) noexcept;

}  // namespace lumidiff
