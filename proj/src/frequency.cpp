#include "lumidiff/frequency.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "lumidiff/error.hpp"

namespace lumidiff::frequency {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

void require_even(const Shape& s) {
    if (s.h % 2 != 0 || s.w % 2 != 0 || s.h < 2 || s.w < 2)
        throw ShapeError("wavelet transform needs even height and width, got " + s.str());
}

Tensor haar_forward(const Tensor& x) {
    const Shape s = x.shape();
    require_even(s);
    const int h2 = s.h / 2;
    const int w2 = s.w / 2;
    Tensor out({4 * s.c, h2, w2});
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < h2; ++y)
            for (int xx = 0; xx < w2; ++xx) {
                const double a = x(c, 2 * y, 2 * xx);
                const double b = x(c, 2 * y, 2 * xx + 1);
                const double cc = x(c, 2 * y + 1, 2 * xx);
                const double d = x(c, 2 * y + 1, 2 * xx + 1);
                out(c, y, xx) = 0.5 * (a + b + cc + d);
                out(s.c + c, y, xx) = 0.5 * (a + b - cc - d);
                out(2 * s.c + c, y, xx) = 0.5 * (a - b + cc - d);
                out(3 * s.c + c, y, xx) = 0.5 * (a - b - cc + d);
            }
    return out;
}

Tensor haar_inverse(const Tensor& bands) {
    const Shape s = bands.shape();
    if (s.c % 4 != 0) throw ShapeError("stacked subbands need a multiple of 4 channels, got " + s.str());
    const int c_out = s.c / 4;
    Tensor out({c_out, 2 * s.h, 2 * s.w});
    for (int c = 0; c < c_out; ++c)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                const double ll = bands(c, y, x);
                const double lh = bands(c_out + c, y, x);
                const double hl = bands(2 * c_out + c, y, x);
                const double hh = bands(3 * c_out + c, y, x);
                out(c, 2 * y, 2 * x) = 0.5 * (ll + lh + hl + hh);
                out(c, 2 * y, 2 * x + 1) = 0.5 * (ll + lh - hl - hh);
                out(c, 2 * y + 1, 2 * x) = 0.5 * (ll - lh + hl - hh);
                out(c, 2 * y + 1, 2 * x + 1) = 0.5 * (ll - lh - hl + hh);
            }
    return out;
}

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

/// In-place forward DFT of a strided sequence. Radix-2 for powers of two,
/// direct summation otherwise.
void dft1(std::vector<cd>& v) {
    const int n = static_cast<int>(v.size());
    if (n <= 1) return;
    if (!is_pow2(n)) {
        std::vector<cd> out(n);
        for (int k = 0; k < n; ++k) {
            cd acc = 0.0;
            for (int j = 0; j < n; ++j) {
                const long idx = (static_cast<long>(k) * j) % n;
                acc += v[j] * std::polar(1.0, -2.0 * kPi * static_cast<double>(idx) / n);
            }
            out[k] = acc;
        }
        v.swap(out);
        return;
    }
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(v[i], v[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const int half = len / 2;
        for (int k = 0; k < half; ++k) {
            const cd w = std::polar(1.0, -2.0 * kPi * k / len);
            for (int start = 0; start < n; start += len) {
                const cd u = v[start + k];
                const cd t = v[start + k + half] * w;
                v[start + k] = u + t;
                v[start + k + half] = u - t;
            }
        }
    }
}

/// Forward 2-D DFT of one complex plane (h x w, row-major).
void dft2_plane(std::vector<cd>& plane, int h, int w) {
    std::vector<cd> buf(w);
    for (int y = 0; y < h; ++y) {
        std::copy_n(plane.begin() + static_cast<std::ptrdiff_t>(y) * w, w, buf.begin());
        dft1(buf);
        std::copy(buf.begin(), buf.end(), plane.begin() + static_cast<std::ptrdiff_t>(y) * w);
    }
    buf.resize(h);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) buf[y] = plane[static_cast<std::size_t>(y) * w + x];
        dft1(buf);
        for (int y = 0; y < h; ++y) plane[static_cast<std::size_t>(y) * w + x] = buf[y];
    }
}

std::vector<cd> to_complex(std::span<const double> re) {
    std::vector<cd> out(re.size());
    for (std::size_t i = 0; i < re.size(); ++i) out[i] = re[i];
    return out;
}

double principal_arg(const cd& z) {
    const double a = std::atan2(z.imag(), z.real());
    return a <= -kPi ? kPi : a;
}

Tensor laplacian_forward(const Tensor& x) {
    const Shape s = x.shape();
    if (s.h < 3 || s.w < 3) throw ShapeError("laplacian needs at least 3x3, got " + s.str());
    Tensor out(s);
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y) {
            const int up = std::max(y - 1, 0);
            const int dn = std::min(y + 1, s.h - 1);
            for (int xx = 0; xx < s.w; ++xx) {
                const int lf = std::max(xx - 1, 0);
                const int rt = std::min(xx + 1, s.w - 1);
                out(c, y, xx) = x(c, up, xx) + x(c, dn, xx) + x(c, y, lf) + x(c, y, rt) - 4.0 * x(c, y, xx);
            }
        }
    return out;
}

void laplacian_adjoint_add(const Tensor& g, Tensor& dx) {
    const Shape s = g.shape();
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y) {
            const int up = std::max(y - 1, 0);
            const int dn = std::min(y + 1, s.h - 1);
            for (int xx = 0; xx < s.w; ++xx) {
                const int lf = std::max(xx - 1, 0);
                const int rt = std::min(xx + 1, s.w - 1);
                const double gv = g(c, y, xx);
                dx(c, up, xx) += gv;
                dx(c, dn, xx) += gv;
                dx(c, y, lf) += gv;
                dx(c, y, rt) += gv;
                dx(c, y, xx) -= 4.0 * gv;
            }
        }
}

}  // namespace

WaveletPyramid dwt2(const Tensor& x) {
    const Tensor stacked = haar_forward(x);
    const Shape s = stacked.shape();
    const int c = s.c / 4;
    WaveletPyramid pyr;
    Tensor* bands[4] = {&pyr.ll, &pyr.lh, &pyr.hl, &pyr.hh};
    for (int b = 0; b < 4; ++b) {
        *bands[b] = Tensor({c, s.h, s.w});
        const auto src = stacked.values().subspan(static_cast<std::size_t>(b) * c * s.plane(), c * s.plane());
        std::copy(src.begin(), src.end(), bands[b]->values().begin());
    }
    return pyr;
}

Tensor idwt2(const WaveletPyramid& pyr) {
    const Shape s = pyr.ll.shape();
    if (pyr.lh.shape() != s || pyr.hl.shape() != s || pyr.hh.shape() != s)
        throw ShapeError("idwt2: subband shapes differ");
    Tensor stacked({4 * s.c, s.h, s.w});
    const Tensor* bands[4] = {&pyr.ll, &pyr.lh, &pyr.hl, &pyr.hh};
    for (int b = 0; b < 4; ++b)
        std::copy(bands[b]->values().begin(), bands[b]->values().end(),
                  stacked.values().begin() + static_cast<std::ptrdiff_t>(b) * s.size());
    return haar_inverse(stacked);
}

Spectrum dft_amp_pha(const Tensor& x) {
    if (!x.all_finite()) throw NumericError("dft_amp_pha: non-finite input");
    const Shape s = x.shape();
    Spectrum out{Tensor(s), Tensor(s)};
    for (int c = 0; c < s.c; ++c) {
        auto plane = to_complex(x.channel(c));
        dft2_plane(plane, s.h, s.w);
        auto amp = out.amp.channel(c);
        auto pha = out.pha.channel(c);
        for (std::size_t i = 0; i < plane.size(); ++i) {
            amp[i] = std::abs(plane[i]);
            pha[i] = principal_arg(plane[i]);
        }
    }
    return out;
}

Tensor inverse_dft(const Spectrum& sp) {
    require_same_shape(sp.amp, sp.pha, "inverse_dft");
    const Shape s = sp.amp.shape();
    Tensor out(s);
    const double inv_n = 1.0 / static_cast<double>(s.plane());
    for (int c = 0; c < s.c; ++c) {
        auto amp = sp.amp.channel(c);
        auto pha = sp.pha.channel(c);
        std::vector<cd> plane(s.plane());
        // inverse via conjugation: idft(X) = conj(dft(conj(X))) / N
        for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = std::conj(std::polar(amp[i], pha[i]));
        dft2_plane(plane, s.h, s.w);
        auto dst = out.channel(c);
        for (std::size_t i = 0; i < plane.size(); ++i) dst[i] = plane[i].real() * inv_n;
    }
    return out;
}

Tensor laplacian(const Tensor& x) { return laplacian_forward(x); }

double wrap_angle(double a) noexcept { return a - 2.0 * kPi * std::ceil((a - kPi) / (2.0 * kPi)); }

ad::Var dwt2(const ad::Var& x) {
    return ad::make_result(haar_forward(x.value()), {x}, [](ad::Node& self) {
        // orthonormal: adjoint == inverse
        self.input_grad(0) += haar_inverse(self.grad);
    });
}

ad::Var idwt2(const ad::Var& stacked) {
    return ad::make_result(haar_inverse(stacked.value()), {stacked},
                           [](ad::Node& self) { self.input_grad(0) += haar_forward(self.grad); });
}

ad::Var laplacian(const ad::Var& x) {
    return ad::make_result(laplacian_forward(x.value()), {x},
                           [](ad::Node& self) { laplacian_adjoint_add(self.grad, self.input_grad(0)); });
}

ad::Var dft_amp_pha(const ad::Var& x) {
    const Tensor& xv = x.value();
    if (!xv.all_finite()) throw NumericError("dft_amp_pha: non-finite input");
    const Shape s = xv.shape();
    auto spectrum = std::make_shared<std::vector<std::vector<cd>>>(s.c);
    Tensor out({2 * s.c, s.h, s.w});
    for (int c = 0; c < s.c; ++c) {
        auto& plane = (*spectrum)[c];
        plane = to_complex(xv.channel(c));
        dft2_plane(plane, s.h, s.w);
        auto amp = out.channel(c);
        auto pha = out.channel(s.c + c);
        for (std::size_t i = 0; i < plane.size(); ++i) {
            amp[i] = std::abs(plane[i]);
            pha[i] = principal_arg(plane[i]);
        }
    }
    return ad::make_result(std::move(out), {x}, [spectrum, s](ad::Node& self) {
        Tensor& gx = self.input_grad(0);
        for (int c = 0; c < s.c; ++c) {
            const auto& plane = (*spectrum)[c];
            auto g_amp = std::as_const(self.grad).channel(c);
            auto g_pha = std::as_const(self.grad).channel(s.c + c);
            std::vector<cd> g(plane.size());
            for (std::size_t i = 0; i < plane.size(); ++i) {
                const double re = plane[i].real();
                const double im = plane[i].imag();
                const double a2 = re * re + im * im;
                if (a2 < 1e-300) continue;  // magnitude and phase are not differentiable at 0
                const double a = std::sqrt(a2);
                const double d_re = g_amp[i] * re / a - g_pha[i] * im / a2;
                const double d_im = g_amp[i] * im / a + g_pha[i] * re / a2;
                g[i] = cd(d_re, -d_im);
            }
            // dL/dx = Re(DFT(conj(G)))
            dft2_plane(g, s.h, s.w);
            auto dst = gx.channel(c);
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i].real();
        }
    });
}

ad::Var wrap_angle(const ad::Var& x) {
    Tensor out = x.value();
    for (double& v : out.values()) v = wrap_angle(v);
    return ad::make_result(std::move(out), {x}, [](ad::Node& self) { self.input_grad(0) += self.grad; });
}

}  // namespace lumidiff::frequency
