#include "lumidiff/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "lumidiff/error.hpp"

namespace lumidiff::ad {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using ConstMapRow = Eigen::Map<const RowMat>;

void require_same(const Var& a, const Var& b, const char* what) { require_same_shape(a.value(), b.value(), what); }

template <class F, class D>
Var unary(const Var& a, F f, D deriv) {
    const Tensor& x = a.value();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return make_result(std::move(out), {a}, [deriv](Node& self) {
        const Tensor& xv = self.input_value(0);
        Tensor& g = self.input_grad(0);
        for (std::size_t i = 0; i < xv.size(); ++i) g[i] += self.grad[i] * deriv(xv[i], self.value[i]);
    });
}

}  // namespace

Tensor& Node::grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor(value.shape());
    return grad;
}

Tensor Var::grad() const {
    if (!node_) return {};
    if (node_->grad.empty()) return Tensor(node_->value.shape());
    return node_->grad;
}

Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var parameter(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); })) {
        n->requires_grad = true;
        n->inputs.reserve(inputs.size());
        for (const Var& v : inputs) n->inputs.push_back(v.node());
        n->backward = std::move(backward);
    }
    return Var(std::move(n));
}

void backward(const Var& root) {
    if (!root.requires_grad()) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, bool>> stack{{root.node().get(), false}};
    while (!stack.empty()) {
        auto [node, expanded] = stack.back();
        stack.pop_back();
        if (expanded) {
            order.push_back(node);
            continue;
        }
        if (!seen.insert(node).second) continue;
        stack.emplace_back(node, true);
        for (const auto& in : node->inputs)
            if (in->requires_grad && !seen.count(in.get())) stack.emplace_back(in.get(), false);
    }
    Tensor& seed = root.node()->grad_buffer();
    for (double& v : seed.values()) v += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && !node->grad.empty()) node->backward(*node);
    }
}

// ---- elementwise -------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    require_same(a, b, "add");
    Tensor out = a.value();
    out += b.value();
    return make_result(std::move(out), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k)
            if (self.input_needs_grad(k)) self.input_grad(k) += self.grad;
    });
}

Var sub(const Var& a, const Var& b) {
    require_same(a, b, "sub");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        if (self.input_needs_grad(0)) self.input_grad(0) += self.grad;
        if (self.input_needs_grad(1)) {
            Tensor& g = self.input_grad(1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same(a, b, "mul");
    Tensor out(a.shape());
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        const Tensor& x = self.input_value(0);
        const Tensor& y = self.input_value(1);
        if (self.input_needs_grad(0)) {
            Tensor& g = self.input_grad(0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y[i];
        }
        if (self.input_needs_grad(1)) {
            Tensor& g = self.input_grad(1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x[i];
        }
    });
}

Var div(const Var& a, const Var& b) {
    require_same(a, b, "div");
    Tensor out(a.shape());
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / bv[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        const Tensor& y = self.input_value(1);
        if (self.input_needs_grad(0)) {
            Tensor& g = self.input_grad(0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / y[i];
        }
        if (self.input_needs_grad(1)) {
            Tensor& g = self.input_grad(1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.value[i] / y[i];
        }
    });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var add_scalar(const Var& a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& a, double s) {
    return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var scale(const Var& s, const Var& x) {
    const double sv = s.value().item();
    Tensor out = x.value();
    out *= sv;
    return make_result(std::move(out), {s, x}, [](Node& self) {
        const double s_val = self.input_value(0).item();
        const Tensor& xv = self.input_value(1);
        if (self.input_needs_grad(0)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < xv.size(); ++i) acc += self.grad[i] * xv[i];
            self.input_grad(0)[0] += acc;
        }
        if (self.input_needs_grad(1)) {
            Tensor& g = self.input_grad(1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s_val;
        }
    });
}

Var square(const Var& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(const Var& a) {
    return unary(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var exp(const Var& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(const Var& a) {
    return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var sigmoid(const Var& a) {
    return unary(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Var silu(const Var& a) {
    return unary(
        a, [](double x) { return x / (1.0 + std::exp(-x)); },
        [](double x, double) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        });
}

Var clamp(const Var& a, double lo, double hi) {
    return unary(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var clamp(const Var& a, const Tensor& lo, const Tensor& hi) {
    require_same_shape(a.value(), lo, "clamp lower bound");
    require_same_shape(a.value(), hi, "clamp upper bound");
    const Tensor& x = a.value();
    Tensor out(x.shape());
    std::vector<char> pass(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::min(std::max(x[i], lo[i]), hi[i]);
        pass[i] = (x[i] >= lo[i] && x[i] <= hi[i]) ? 1 : 0;
    }
    return make_result(std::move(out), {a}, [pass = std::move(pass)](Node& self) {
        Tensor& g = self.input_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (pass[i]) g[i] += self.grad[i];
    });
}

Var maximum(const Var& a, double floor) {
    return unary(
        a, [floor](double x) { return std::max(x, floor); }, [floor](double x, double) { return x >= floor ? 1.0 : 0.0; });
}

// ---- reductions and reshaping --------------------------------------------------

Var sum(const Var& a) {
    return make_result(Tensor::scalar(lumidiff::sum(a.value())), {a}, [](Node& self) {
        const double g0 = self.grad[0];
        for (double& g : self.input_grad(0).values()) g += g0;
    });
}

Var mean(const Var& a) {
    const double n = static_cast<double>(a.value().size());
    return make_result(Tensor::scalar(lumidiff::sum(a.value()) / n), {a}, [n](Node& self) {
        const double g0 = self.grad[0] / n;
        for (double& g : self.input_grad(0).values()) g += g0;
    });
}

Var dot(const Var& a, const Var& b) {
    require_same(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.value().size(); ++i) acc += a.value()[i] * b.value()[i];
    return make_result(Tensor::scalar(acc), {a, b}, [](Node& self) {
        const double g0 = self.grad[0];
        const Tensor& x = self.input_value(0);
        const Tensor& y = self.input_value(1);
        if (self.input_needs_grad(0)) {
            Tensor& g = self.input_grad(0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * y[i];
        }
        if (self.input_needs_grad(1)) {
            Tensor& g = self.input_grad(1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * x[i];
        }
    });
}

Var reshape(const Var& a, Shape shape) {
    return make_result(a.value().reshaped(shape), {a}, [](Node& self) {
        Tensor& g = self.input_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Var element(const Var& a, int c, int y, int x) {
    const Shape s = a.shape();
    if (c < 0 || c >= s.c || y < 0 || y >= s.h || x < 0 || x >= s.w) throw IndexError("element index out of range");
    return make_result(Tensor::scalar(a.value()(c, y, x)), {a},
                       [c, y, x](Node& self) { self.input_grad(0)(c, y, x) += self.grad[0]; });
}

Var spatial_mean(const Var& a) {
    const Shape s = a.shape();
    const double n = static_cast<double>(s.plane());
    Tensor out({s.c, 1, 1});
    for (int c = 0; c < s.c; ++c) {
        double acc = 0.0;
        for (double v : a.value().channel(c)) acc += v;
        out[c] = acc / n;
    }
    return make_result(std::move(out), {a}, [n](Node& self) {
        Tensor& g = self.input_grad(0);
        for (int c = 0; c < g.channels(); ++c) {
            const double gc = self.grad[c] / n;
            for (double& v : g.channel(c)) v += gc;
        }
    });
}

Var channel_mean(const Var& a) {
    const Shape s = a.shape();
    Tensor out({1, s.h, s.w});
    for (int c = 0; c < s.c; ++c) {
        auto src = a.value().channel(c);
        for (std::size_t i = 0; i < src.size(); ++i) out[i] += src[i];
    }
    out *= 1.0 / s.c;
    return make_result(std::move(out), {a}, [](Node& self) {
        Tensor& g = self.input_grad(0);
        const double inv = 1.0 / g.channels();
        for (int c = 0; c < g.channels(); ++c) {
            auto dst = g.channel(c);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += self.grad[i] * inv;
        }
    });
}

Var concat_channels(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    const int h = parts[0].shape().h;
    const int w = parts[0].shape().w;
    int total = 0;
    for (const Var& p : parts) {
        if (p.shape().h != h || p.shape().w != w) throw ShapeError("concat_channels: spatial mismatch");
        total += p.shape().c;
    }
    Tensor out({total, h, w});
    std::size_t offset = 0;
    for (const Var& p : parts) {
        std::copy(p.value().values().begin(), p.value().values().end(), out.values().begin() + offset);
        offset += p.value().size();
    }
    return make_result(std::move(out), std::vector<Var>(parts.begin(), parts.end()), [](Node& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
            const std::size_t n = self.input_value(k).size();
            if (self.input_needs_grad(k)) {
                Tensor& g = self.input_grad(k);
                for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
            }
            off += n;
        }
    });
}

Var slice_channels(const Var& a, int first, int count) {
    const Shape s = a.shape();
    if (first < 0 || count < 0 || first + count > s.c) throw ShapeError("slice_channels out of range");
    Tensor out({count, s.h, s.w});
    const std::size_t off = static_cast<std::size_t>(first) * s.plane();
    std::copy_n(a.value().values().begin() + off, out.size(), out.values().begin());
    return make_result(std::move(out), {a}, [off](Node& self) {
        Tensor& g = self.input_grad(0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[off + i] += self.grad[i];
    });
}

Var crop(const Var& a, int y0, int x0, int h, int w) {
    const Shape s = a.shape();
    if (y0 < 0 || x0 < 0 || h < 0 || w < 0 || y0 + h > s.h || x0 + w > s.w) throw ShapeError("crop out of range");
    Tensor out({s.c, h, w});
    const Tensor& in = a.value();
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out(c, y, x) = in(c, y0 + y, x0 + x);
    return make_result(std::move(out), {a}, [y0, x0](Node& self) {
        Tensor& g = self.input_grad(0);
        const Shape os = self.value.shape();
        for (int c = 0; c < os.c; ++c)
            for (int y = 0; y < os.h; ++y)
                for (int x = 0; x < os.w; ++x) g(c, y0 + y, x0 + x) += self.grad(c, y, x);
    });
}

Var avg_pool(const Var& a, int k) {
    const Shape s = a.shape();
    if (k < 1 || s.h % k != 0 || s.w % k != 0)
        throw ShapeError("avg_pool: " + s.str() + " not divisible by " + std::to_string(k));
    const int oh = s.h / k;
    const int ow = s.w / k;
    const double inv = 1.0 / (k * k);
    Tensor out({s.c, oh, ow});
    const Tensor& in = a.value();
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) out(c, y / k, x / k) += in(c, y, x) * inv;
    return make_result(std::move(out), {a}, [k, inv](Node& self) {
        Tensor& g = self.input_grad(0);
        const Shape is = g.shape();
        for (int c = 0; c < is.c; ++c)
            for (int y = 0; y < is.h; ++y)
                for (int x = 0; x < is.w; ++x) g(c, y, x) += self.grad(c, y / k, x / k) * inv;
    });
}

Var upsample_nearest(const Var& a, int k) {
    const Shape s = a.shape();
    Tensor out({s.c, s.h * k, s.w * k});
    const Tensor& in = a.value();
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h * k; ++y)
            for (int x = 0; x < s.w * k; ++x) out(c, y, x) = in(c, y / k, x / k);
    return make_result(std::move(out), {a}, [k](Node& self) {
        Tensor& g = self.input_grad(0);
        const Shape os = self.value.shape();
        for (int c = 0; c < os.c; ++c)
            for (int y = 0; y < os.h; ++y)
                for (int x = 0; x < os.w; ++x) g(c, y / k, x / k) += self.grad(c, y, x);
    });
}

namespace {

struct Interp {
    std::vector<int> lo, hi;
    std::vector<double> frac;
};

Interp bilinear_axis(int in, int out) {
    Interp t;
    t.lo.resize(out);
    t.hi.resize(out);
    t.frac.resize(out);
    const double ratio = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
        double src = (i + 0.5) * ratio - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in - 1));
        const int l = static_cast<int>(std::floor(src));
        t.lo[i] = l;
        t.hi[i] = std::min(l + 1, in - 1);
        t.frac[i] = src - l;
    }
    return t;
}

}  // namespace

Var resize_bilinear(const Var& a, int h, int w) {
    const Shape s = a.shape();
    if (h < 1 || w < 1) throw ShapeError("resize_bilinear: empty target");
    auto ty = std::make_shared<Interp>(bilinear_axis(s.h, h));
    auto tx = std::make_shared<Interp>(bilinear_axis(s.w, w));
    Tensor out({s.c, h, w});
    const Tensor& in = a.value();
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < h; ++y) {
            const double fy = ty->frac[y];
            for (int x = 0; x < w; ++x) {
                const double fx = tx->frac[x];
                const double top = in(c, ty->lo[y], tx->lo[x]) * (1 - fx) + in(c, ty->lo[y], tx->hi[x]) * fx;
                const double bot = in(c, ty->hi[y], tx->lo[x]) * (1 - fx) + in(c, ty->hi[y], tx->hi[x]) * fx;
                out(c, y, x) = top * (1 - fy) + bot * fy;
            }
        }
    return make_result(std::move(out), {a}, [ty, tx](Node& self) {
        Tensor& g = self.input_grad(0);
        const Shape os = self.value.shape();
        for (int c = 0; c < os.c; ++c)
            for (int y = 0; y < os.h; ++y) {
                const double fy = ty->frac[y];
                for (int x = 0; x < os.w; ++x) {
                    const double fx = tx->frac[x];
                    const double gv = self.grad(c, y, x);
                    g(c, ty->lo[y], tx->lo[x]) += gv * (1 - fy) * (1 - fx);
                    g(c, ty->lo[y], tx->hi[x]) += gv * (1 - fy) * fx;
                    g(c, ty->hi[y], tx->lo[x]) += gv * fy * (1 - fx);
                    g(c, ty->hi[y], tx->hi[x]) += gv * fy * fx;
                }
            }
    });
}

Var filter_valid(const Var& a, std::span<const double> taps) {
    const Shape s = a.shape();
    const int k = static_cast<int>(taps.size());
    const int oh = s.h - k + 1;
    const int ow = s.w - k + 1;
    if (k < 1 || oh < 1 || ow < 1)
        throw ShapeError("filter_valid: " + s.str() + " smaller than " + std::to_string(k) + "-tap window");
    std::vector<double> kern(taps.begin(), taps.end());
    Tensor rows({s.c, s.h, ow});
    const Tensor& in = a.value();
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (int t = 0; t < k; ++t) acc += kern[t] * in(c, y, x + t);
                rows(c, y, x) = acc;
            }
    Tensor out({s.c, oh, ow});
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (int t = 0; t < k; ++t) acc += kern[t] * rows(c, y + t, x);
                out(c, y, x) = acc;
            }
    return make_result(std::move(out), {a}, [kern = std::move(kern)](Node& self) {
        const int kk = static_cast<int>(kern.size());
        Tensor& g = self.input_grad(0);
        const Shape is = g.shape();
        const Shape os = self.value.shape();
        Tensor grows({is.c, is.h, os.w});
        for (int c = 0; c < os.c; ++c)
            for (int y = 0; y < os.h; ++y)
                for (int x = 0; x < os.w; ++x) {
                    const double gv = self.grad(c, y, x);
                    for (int t = 0; t < kk; ++t) grows(c, y + t, x) += kern[t] * gv;
                }
        for (int c = 0; c < is.c; ++c)
            for (int y = 0; y < is.h; ++y)
                for (int x = 0; x < os.w; ++x) {
                    const double gv = grows(c, y, x);
                    for (int t = 0; t < kk; ++t) g(c, y, x + t) += kern[t] * gv;
                }
    });
}

// ---- layers ----------------------------------------------------------------

namespace {

int kernel_side(const Shape& weight) {
    const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(weight.w))));
    if (k * k != weight.w || k % 2 == 0) throw ShapeError("conv2d: kernel must be square with odd side");
    return k;
}

RowMat im2col(const Tensor& x, int k) {
    const Shape s = x.shape();
    const int pad = k / 2;
    RowMat col(static_cast<Eigen::Index>(s.c) * k * k, static_cast<Eigen::Index>(s.plane()));
    for (int c = 0; c < s.c; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                double* row = col.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
                for (int y = 0; y < s.h; ++y) {
                    const int sy = y + ky - pad;
                    double* dst = row + static_cast<std::size_t>(y) * s.w;
                    if (sy < 0 || sy >= s.h) {
                        std::fill_n(dst, s.w, 0.0);
                        continue;
                    }
                    for (int xo = 0; xo < s.w; ++xo) {
                        const int sx = xo + kx - pad;
                        dst[xo] = (sx < 0 || sx >= s.w) ? 0.0 : x(c, sy, sx);
                    }
                }
            }
    return col;
}

void col2im_add(const RowMat& col, int k, Tensor& g) {
    const Shape s = g.shape();
    const int pad = k / 2;
    for (int c = 0; c < s.c; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const double* row = col.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
                for (int y = 0; y < s.h; ++y) {
                    const int sy = y + ky - pad;
                    if (sy < 0 || sy >= s.h) continue;
                    const double* src = row + static_cast<std::size_t>(y) * s.w;
                    for (int xo = 0; xo < s.w; ++xo) {
                        const int sx = xo + kx - pad;
                        if (sx >= 0 && sx < s.w) g(c, sy, sx) += src[xo];
                    }
                }
            }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    const int k = kernel_side(ws);
    if (ws.h != xs.c) throw ShapeError("conv2d: weight expects " + std::to_string(ws.h) + " input channels, got " + xs.str());
    if (bias.shape() != Shape{ws.c, 1, 1}) throw ShapeError("conv2d: bias shape " + bias.shape().str());
    const auto hw = static_cast<Eigen::Index>(xs.plane());
    const RowMat col = im2col(x.value(), k);
    Tensor out({ws.c, xs.h, xs.w});
    MapRow o(out.data(), ws.c, hw);
    ConstMapRow w(weight.value().data(), ws.c, static_cast<Eigen::Index>(ws.h) * ws.w);
    o.noalias() = w * col;
    for (int c = 0; c < ws.c; ++c) o.row(c).array() += bias.value()[c];
    return make_result(std::move(out), {x, weight, bias}, [k, hw](Node& self) {
        const Tensor& xv = self.input_value(0);
        const Tensor& wv = self.input_value(1);
        const Shape wsh = wv.shape();
        ConstMapRow g(self.grad.data(), wsh.c, hw);
        if (self.input_needs_grad(1)) {
            const RowMat col2 = im2col(xv, k);
            MapRow gw(self.input_grad(1).data(), wsh.c, static_cast<Eigen::Index>(wsh.h) * wsh.w);
            gw.noalias() += g * col2.transpose();
        }
        if (self.input_needs_grad(2)) {
            Tensor& gb = self.input_grad(2);
            for (int c = 0; c < wsh.c; ++c) gb[c] += g.row(c).sum();
        }
        if (self.input_needs_grad(0)) {
            ConstMapRow w2(wv.data(), wsh.c, static_cast<Eigen::Index>(wsh.h) * wsh.w);
            RowMat gcol(static_cast<Eigen::Index>(wsh.h) * wsh.w, hw);
            gcol.noalias() = w2.transpose() * g;
            col2im_add(gcol, k, self.input_grad(0));
        }
    });
}

Var add_channel_bias(const Var& x, const Var& bias) {
    const Shape s = x.shape();
    if (bias.shape() != Shape{s.c, 1, 1}) throw ShapeError("add_channel_bias: bias " + bias.shape().str() + " for " + s.str());
    Tensor out = x.value();
    for (int c = 0; c < s.c; ++c)
        for (double& v : out.channel(c)) v += bias.value()[c];
    return make_result(std::move(out), {x, bias}, [](Node& self) {
        if (self.input_needs_grad(0)) self.input_grad(0) += self.grad;
        if (self.input_needs_grad(1)) {
            Tensor& gb = self.input_grad(1);
            for (int c = 0; c < self.grad.channels(); ++c) {
                double acc = 0.0;
                for (double v : std::as_const(self.grad).channel(c)) acc += v;
                gb[c] += acc;
            }
        }
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    const Shape ws = weight.shape();
    const int m = ws.c;
    const int n = ws.h;
    if (ws.w != 1 || x.value().size() != static_cast<std::size_t>(n) || bias.value().size() != static_cast<std::size_t>(m))
        throw ShapeError("linear: weight " + ws.str() + " input " + x.shape().str());
    Tensor out({m, 1, 1});
    for (int i = 0; i < m; ++i) {
        double acc = bias.value()[i];
        for (int j = 0; j < n; ++j) acc += weight.value()[static_cast<std::size_t>(i) * n + j] * x.value()[j];
        out[i] = acc;
    }
    return make_result(std::move(out), {x, weight, bias}, [m, n](Node& self) {
        const Tensor& xv = self.input_value(0);
        const Tensor& wv = self.input_value(1);
        if (self.input_needs_grad(0)) {
            Tensor& gx = self.input_grad(0);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) gx[j] += wv[static_cast<std::size_t>(i) * n + j] * self.grad[i];
        }
        if (self.input_needs_grad(1)) {
            Tensor& gw = self.input_grad(1);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) gw[static_cast<std::size_t>(i) * n + j] += self.grad[i] * xv[j];
        }
        if (self.input_needs_grad(2)) self.input_grad(2) += self.grad;
    });
}

}  // namespace lumidiff::ad
