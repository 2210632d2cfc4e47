#pragma once

// Independent reference implementations used as test oracles. These are
// written against the math directly (plain loops, no shared code with the
// library) so agreement is meaningful.

#include <cmath>
#include <functional>
#include <vector>

#include "fgsr/autodiff.hpp"
#include "fgsr/nets.hpp"
#include "fgsr/rng.hpp"
#include "fgsr/tensor.hpp"

namespace oracle {

using fgsr::Tensor;
using fgsr::Var;

// Catmull-Rom cubic written in Horner form (the library uses the piecewise
// polynomial form).
inline double cubic(double x) {
    x = std::fabs(x);
    if (x < 1.0) return ((1.5 * x - 2.5) * x) * x + 1.0;
    if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
    return 0.0;
}

// Direct 2-D (non-separable) antialiased bicubic downscale on {C,H,W},
// replicate edges, per-pixel weight normalization.
inline Tensor ref_bicubic_downscale(const Tensor& img, int scale) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const int oh = h / scale, ow = w / scale;
    const double s = static_cast<double>(scale);
    Tensor out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const double cy = (oy + 0.5) * s - 0.5;
                const double cx = (ox + 0.5) * s - 0.5;
                const int y0 = static_cast<int>(std::floor(cy - 2.0 * s)) - 1;
                const int y1 = static_cast<int>(std::ceil(cy + 2.0 * s)) + 1;
                const int x0 = static_cast<int>(std::floor(cx - 2.0 * s)) - 1;
                const int x1 = static_cast<int>(std::ceil(cx + 2.0 * s)) + 1;
                double acc = 0.0, wsum = 0.0;
                for (int y = y0; y <= y1; ++y) {
                    const double wy = cubic((y - cy) / s);
                    if (wy == 0.0) continue;
                    const int yc = std::min(std::max(y, 0), h - 1);
                    for (int x = x0; x <= x1; ++x) {
                        const double wx = cubic((x - cx) / s);
                        if (wx == 0.0) continue;
                        const int xc = std::min(std::max(x, 0), w - 1);
                        acc += wy * wx * img.at3(ch, yc, xc);
                        wsum += wy * wx;
                    }
                }
                double v = acc / wsum;
                out.at3(ch, oy, ox) = std::min(1.0, std::max(0.0, v));
            }
    return out;
}

// Naive direct convolution, NCHW x {O,I,K,K} -> NCHW, zero padding.
inline Tensor ref_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                         int pad) {
    const int n = x.dim(0), ic = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int oc = w.dim(0), k = w.dim(2);
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (wd + 2 * pad - k) / stride + 1;
    Tensor out({n, oc, oh, ow});
    for (int ni = 0; ni < n; ++ni)
        for (int o = 0; o < oc; ++o)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = b[o];
                    for (int i = 0; i < ic; ++i)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int y = oy * stride + ky - pad;
                                const int xx = ox * stride + kx - pad;
                                if (y < 0 || y >= h || xx < 0 || xx >= wd) continue;
                                acc += x.at4(ni, i, y, xx) *
                                       w.at4(o, i, ky, kx);
                            }
                    out.at4(ni, o, oy, ox) = acc;
                }
    return out;
}

// Central finite-difference gradient check. `build` must construct the scalar
// loss from scratch on every call (the tape is rebuilt). Returns the worst
// relative error across every element of every listed parameter.
// When refine_tol > 0, elements whose error exceeds it are re-measured with a
// 10x and 100x smaller step and the best result is kept. A leaky-ReLU/maxpool
// kink sitting inside the stencil leaves it as h shrinks (the analytic
// one-sided derivative is exact there), while a genuine gradient bug gives an
// h-independent error and still fails.
inline double fd_gradcheck(const std::function<Var()>& build,
                           const std::vector<Var>& params, double h = 1e-4,
                           double refine_tol = 0.0) {
    for (const auto& p : params) p->zero_grad();
    Var loss = build();
    fgsr::backward(loss);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        p->ensure_grad();
        analytic.push_back(p->grad);
    }
    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& v = params[pi]->value;
        for (std::int64_t i = 0; i < v.numel(); ++i) {
            const double orig = v[i];
            const double ga = analytic[pi][i];
            auto measure = [&](double step) {
                v[i] = orig + step;
                const double fp = build()->value[0];
                v[i] = orig - step;
                const double fm = build()->value[0];
                v[i] = orig;
                const double fd = (fp - fm) / (2.0 * step);
                return std::fabs(fd - ga) / std::max({std::fabs(fd), std::fabs(ga), 1e-3});
            };
            double err = measure(h);
            if (refine_tol > 0.0 && err > refine_tol)
                err = std::min({err, measure(h / 10.0), measure(h / 100.0)});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

// SSIM via separable Gaussian filtering of moment maps (the library loops over
// windows directly).
inline double ref_ssim(const Tensor& ya, const Tensor& yb) {
    const int h = ya.dim(1), w = ya.dim(2);
    constexpr int win = 11, rad = 5;
    double g[win], gs = 0.0;
    for (int i = 0; i < win; ++i) {
        const double d = i - rad;
        g[i] = std::exp(-d * d / 4.5);
        gs += g[i];
    }
    for (int i = 0; i < win; ++i) g[i] /= gs;

    const int vh = h - win + 1, vw = w - win + 1;
    auto filt = [&](const std::function<double(int, int)>& f) {
        std::vector<double> rows(static_cast<std::size_t>(h) * vw);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < vw; ++x) {
                double acc = 0.0;
                for (int j = 0; j < win; ++j) acc += g[j] * f(y, x + j);
                rows[static_cast<std::size_t>(y) * vw + x] = acc;
            }
        std::vector<double> out(static_cast<std::size_t>(vh) * vw);
        for (int y = 0; y < vh; ++y)
            for (int x = 0; x < vw; ++x) {
                double acc = 0.0;
                for (int i = 0; i < win; ++i)
                    acc += g[i] * rows[static_cast<std::size_t>(y + i) * vw + x];
                out[static_cast<std::size_t>(y) * vw + x] = acc;
            }
        return out;
    };
    auto A = [&](int y, int x) { return ya.at3(0, y, x); };
    auto B = [&](int y, int x) { return yb.at3(0, y, x); };
    const auto mu_a = filt(A);
    const auto mu_b = filt(B);
    const auto aa = filt([&](int y, int x) { return A(y, x) * A(y, x); });
    const auto bb = filt([&](int y, int x) { return B(y, x) * B(y, x); });
    const auto ab = filt([&](int y, int x) { return A(y, x) * B(y, x); });

    constexpr double c1 = 1e-4, c2 = 9e-4;
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = aa[i] - mu_a[i] * mu_a[i];
        const double vb = bb[i] - mu_b[i] * mu_b[i];
        const double cov = ab[i] - mu_a[i] * mu_b[i];
        acc += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    return acc / static_cast<double>(mu_a.size());
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logc(double x) { return std::log(std::max(x, 1e-12)); }

// Scalar-formula relativistic losses on plain vectors of logits.
inline double ref_d_adversarial(const std::vector<double>& cr, const std::vector<double>& cf) {
    double mr = 0.0, mf = 0.0;
    for (double v : cr) mr += v;
    for (double v : cf) mf += v;
    mr /= cr.size();
    mf /= cf.size();
    double t1 = 0.0, t2 = 0.0;
    for (double v : cr) t1 += logc(1.0 - sigmoid(v - mf));
    for (double v : cf) t2 += logc(sigmoid(v - mr));
    return t1 / cr.size() + t2 / cf.size();
}

inline double ref_g_adversarial_entire(const std::vector<double>& cr,
                                       const std::vector<double>& cf) {
    double mr = 0.0, mf = 0.0;
    for (double v : cr) mr += v;
    for (double v : cf) mf += v;
    mr /= cr.size();
    mf /= cf.size();
    double t1 = 0.0, t2 = 0.0;
    for (double v : cr) t1 += logc(sigmoid(v - mf));
    for (double v : cf) t2 += logc(1.0 - sigmoid(v - mr));
    return t1 / cr.size() + t2 / cf.size();
}

inline double ref_d_mask_loss(const std::vector<double>& mr, const std::vector<double>& mf) {
    double t1 = 0.0, t2 = 0.0;
    for (double v : mr) t1 += logc(1.0 - v);
    for (double v : mf) t2 += logc(v);
    return t1 / mr.size() + t2 / mf.size();
}

inline double ref_g_mask_loss(const std::vector<double>& mr, const std::vector<double>& mf) {
    double t1 = 0.0, t2 = 0.0;
    for (double v : mr) t1 += logc(v);
    for (double v : mf) t2 += logc(1.0 - v);
    return t1 / mr.size() + t2 / mf.size();
}

// Helpers for building random test tensors.
inline Tensor rand_tensor(std::vector<int> shape, fgsr::Rng& rng, double lo = 0.0,
                          double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = lo + (hi - lo) * rng.uniform();
    return t;
}

inline std::vector<double> to_vec(const Tensor& t) {
    return std::vector<double>(t.data(), t.data() + t.numel());
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace oracle
