#include "fgsr/resample.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace fgsr {

double cubic_kernel(double x) {
    constexpr double a = -0.5;
    x = std::fabs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

Tensor center_crop_to_multiple(const Tensor& img, int multiple) {
    if (img.ndim() != 3) throw std::invalid_argument("center_crop_to_multiple: expected {C,H,W}");
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const int hc = (h / multiple) * multiple;
    const int wc = (w / multiple) * multiple;
    if (hc == 0 || wc == 0)
        throw std::invalid_argument("center_crop_to_multiple: image smaller than factor");
    if (hc == h && wc == w) return img;
    const int top = (h - hc) / 2, left = (w - wc) / 2;
    Tensor out({c, hc, wc});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < hc; ++y)
            for (int x = 0; x < wc; ++x) out.at3(ch, y, x) = img.at3(ch, top + y, left + x);
    return out;
}

namespace {

struct TapSet {
    // per output index: first input tap and normalized weights
    std::vector<int> start;
    std::vector<std::vector<double>> weights;
};

// Antialiased taps for integer downscale: weight(x) = k(x/s)/s, support 2s
// each side, edges replicated.
TapSet make_taps(int in_size, int out_size, int scale) {
    TapSet t;
    const double s = static_cast<double>(scale);
    const double support = 2.0 * s;
    t.start.resize(static_cast<std::size_t>(out_size));
    t.weights.resize(static_cast<std::size_t>(out_size));
    for (int i = 0; i < out_size; ++i) {
        const double center = (i + 0.5) * s - 0.5;
        const int lo = static_cast<int>(std::ceil(center - support));
        const int hi = static_cast<int>(std::floor(center + support));
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(hi - lo + 1));
        double sum = 0.0;
        for (int j = lo; j <= hi; ++j) {
            const double wt = cubic_kernel((static_cast<double>(j) - center) / s) / s;
            w.push_back(wt);
            sum += wt;
        }
        for (double& wt : w) wt /= sum;
        t.start[static_cast<std::size_t>(i)] = lo;
        t.weights[static_cast<std::size_t>(i)] = std::move(w);
    }
    (void)in_size;
    return t;
}

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

}  // namespace

Tensor bicubic_downscale(const Tensor& img, int scale) {
    if (img.ndim() != 3) throw std::invalid_argument("bicubic_downscale: expected {C,H,W}");
    if (scale < 2) throw std::invalid_argument("bicubic_downscale: scale must be >= 2");
    if (img.dim(1) < scale || img.dim(2) < scale)
        throw std::invalid_argument("bicubic_downscale: image smaller than scale factor");
    const Tensor src = center_crop_to_multiple(img, scale);
    const int c = src.dim(0), h = src.dim(1), w = src.dim(2);
    const int ho = h / scale, wo = w / scale;

    const TapSet row_taps = make_taps(h, ho, scale);
    const TapSet col_taps = make_taps(w, wo, scale);

    // horizontal pass
    Tensor tmp({c, h, wo});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < wo; ++x) {
                const auto& wts = col_taps.weights[static_cast<std::size_t>(x)];
                const int lo = col_taps.start[static_cast<std::size_t>(x)];
                double acc = 0.0;
                for (std::size_t k = 0; k < wts.size(); ++k)
                    acc += wts[k] * src.at3(ch, y, clamp_index(lo + static_cast<int>(k), w));
                tmp.at3(ch, y, x) = acc;
            }
    // vertical pass
    Tensor out({c, ho, wo});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < ho; ++y) {
            const auto& wts = row_taps.weights[static_cast<std::size_t>(y)];
            const int lo = row_taps.start[static_cast<std::size_t>(y)];
            for (int x = 0; x < wo; ++x) {
                double acc = 0.0;
                for (std::size_t k = 0; k < wts.size(); ++k)
                    acc += wts[k] * tmp.at3(ch, clamp_index(lo + static_cast<int>(k), h), x);
                out.at3(ch, y, x) = std::clamp(acc, 0.0, 1.0);
            }
        }
    return out;
}

Tensor dihedral_transform(const Tensor& img, int k) {
    if (img.ndim() != 3) throw std::invalid_argument("dihedral_transform: expected {C,H,W}");
    if (k < 0 || k > 7) throw std::invalid_argument("dihedral_transform: k must be in 0..7");
    const int c = img.dim(0);
    const bool flip = k >= 4;
    const int rot = k % 4;

    Tensor cur = img;
    if (flip) {
        const int h = cur.dim(1), w = cur.dim(2);
        Tensor f({c, h, w});
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) f.at3(ch, y, x) = cur.at3(ch, y, w - 1 - x);
        cur = std::move(f);
    }
    for (int r = 0; r < rot; ++r) {
        const int h = cur.dim(1), w = cur.dim(2);
        Tensor rout({c, w, h});
        // in[i,j] -> out[j, H-1-i]
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) rout.at3(ch, x, h - 1 - y) = cur.at3(ch, y, x);
        cur = std::move(rout);
    }
    return cur;
}

int dihedral_inverse(int k) {
    if (k < 0 || k > 7) throw std::invalid_argument("dihedral_inverse: k must be in 0..7");
    if (k < 4) return (4 - k) % 4;
    return k;  // reflections are involutions
}

}  // namespace fgsr
