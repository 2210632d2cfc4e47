#include "fgsr/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace fgsr {

namespace {

std::atomic<std::int64_t> g_node_counter{0};

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backward_op = std::move(bw);
    n->id = g_node_counter.fetch_add(1);
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    Tensor::shape_str(a->value.shape()) + " vs " +
                                    Tensor::shape_str(b->value.shape()));
}

int reflect_index(int i, int n) {
    // reflect without edge repetition (..., 2,1,0,1,2, ..., n-2,n-1,n-2, ...)
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    int j = i % period;
    if (j < 0) j += period;
    return j < n ? j : period - j;
}

void im2col(const Tensor& x, int n, int k, int stride, int pad, int ho, int wo, MatRM& col) {
    const int c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
    col.resize(static_cast<Eigen::Index>(c_in) * k * k, static_cast<Eigen::Index>(ho) * wo);
    for (int c = 0; c < c_in; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ki) * k + kj;
                for (int oi = 0; oi < ho; ++oi) {
                    const int ii = oi * stride + ki - pad;
                    if (ii < 0 || ii >= h) {
                        for (int oj = 0; oj < wo; ++oj)
                            col(row, static_cast<Eigen::Index>(oi) * wo + oj) = 0.0;
                        continue;
                    }
                    for (int oj = 0; oj < wo; ++oj) {
                        const int jj = oj * stride + kj - pad;
                        col(row, static_cast<Eigen::Index>(oi) * wo + oj) =
                            (jj < 0 || jj >= w) ? 0.0 : ((const Tensor&)x).at4(n, c, ii, jj);
                    }
                }
            }
        }
    }
}

void col2im_accumulate(const MatRM& dcol, int n, int k, int stride, int pad, int ho, int wo,
                       Tensor& dx) {
    const int c_in = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
    for (int c = 0; c < c_in; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ki) * k + kj;
                for (int oi = 0; oi < ho; ++oi) {
                    const int ii = oi * stride + ki - pad;
                    if (ii < 0 || ii >= h) continue;
                    for (int oj = 0; oj < wo; ++oj) {
                        const int jj = oj * stride + kj - pad;
                        if (jj < 0 || jj >= w) continue;
                        dx.at4(n, c, ii, jj) += dcol(row, static_cast<Eigen::Index>(oi) * wo + oj);
                    }
                }
            }
        }
    }
}

}  // namespace

Var make_param(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->zero_grad();
    n->id = g_node_counter.fetch_add(1);
    return n;
}

Var make_constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = g_node_counter.fetch_add(1);
    return n;
}

Var detach(const Var& x) { return make_constant(x->value); }

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    return make_node(std::move(out), {a, b}, [](Node& self) {
        for (int pi = 0; pi < 2; ++pi) {
            Node& p = *self.parents[static_cast<std::size_t>(pi)];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (std::int64_t i = 0; i < self.grad.numel(); ++i) p.grad[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    return make_node(std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::int64_t i = 0; i < self.grad.numel(); ++i) pa.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::int64_t i = 0; i < self.grad.numel(); ++i) pb.grad[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return make_node(std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::int64_t i = 0; i < self.grad.numel(); ++i)
                pa.grad[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::int64_t i = 0; i < self.grad.numel(); ++i)
                pb.grad[i] += self.grad[i] * pa.value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return make_node(std::move(out), {a}, [s](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (std::int64_t i = 0; i < self.grad.numel(); ++i) p.grad[i] += s * self.grad[i];
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += s;
    return make_node(std::move(out), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (std::int64_t i = 0; i < self.grad.numel(); ++i) p.grad[i] += self.grad[i];
    });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var abs_op(const Var& a) {
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::fabs(out[i]);
    return make_node(std::move(out), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        // subgradient 0 at the kink
        for (std::int64_t i = 0; i < self.grad.numel(); ++i) {
            const double v = p.value[i];
            if (v > 0.0) p.grad[i] += self.grad[i];
            else if (v < 0.0) p.grad[i] -= self.grad[i];
        }
    });
}

Var leaky_relu(const Var& a, double slope) {
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        if (out[i] < 0.0) out[i] *= slope;
    return make_node(std::move(out), {a}, [slope](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (std::int64_t i = 0; i < self.grad.numel(); ++i)
            p.grad[i] += self.grad[i] * (p.value[i] >= 0.0 ? 1.0 : slope);
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    Tensor cached = out;
    return make_node(std::move(out), {a}, [cached](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (std::int64_t i = 0; i < self.grad.numel(); ++i) {
            const double y = cached[i];
            p.grad[i] += self.grad[i] * y * (1.0 - y);
        }
    });
}

Var log_clamped(const Var& a, double floor) {
    Tensor out = a->value;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::log(std::max(out[i], floor));
    return make_node(std::move(out), {a}, [floor](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (std::int64_t i = 0; i < self.grad.numel(); ++i)
            if (p.value[i] > floor) p.grad[i] += self.grad[i] / p.value[i];
    });
}

Var sub_broadcast_scalar(const Var& a, const Var& s) {
    if (s->value.numel() != 1)
        throw std::invalid_argument("sub_broadcast_scalar: second argument must be scalar");
    Tensor out = a->value;
    const double sv = s->value[0];
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= sv;
    return make_node(std::move(out), {a, s}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& ps = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::int64_t i = 0; i < self.grad.numel(); ++i) pa.grad[i] += self.grad[i];
        }
        if (ps.requires_grad) {
            ps.ensure_grad();
            double acc = 0.0;
            for (std::int64_t i = 0; i < self.grad.numel(); ++i) acc += self.grad[i];
            ps.grad[0] -= acc;
        }
    });
}

Var reshape(const Var& a, std::vector<int> shape) {
    Tensor out = a->value.reshaped(shape);
    return make_node(std::move(out), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (std::int64_t i = 0; i < self.grad.numel(); ++i) p.grad[i] += self.grad[i];
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.ndim() != 4 || bv.ndim() != 4 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) ||
        av.dim(3) != bv.dim(3))
        throw std::invalid_argument("concat_channels: incompatible shapes");
    const int n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), h = av.dim(2), w = av.dim(3);
    Tensor out({n, ca + cb, h, w});
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    for (int i = 0; i < n; ++i) {
        std::copy_n(av.data() + static_cast<std::int64_t>(i) * ca * plane, ca * plane,
                    out.data() + static_cast<std::int64_t>(i) * (ca + cb) * plane);
        std::copy_n(bv.data() + static_cast<std::int64_t>(i) * cb * plane, cb * plane,
                    out.data() + static_cast<std::int64_t>(i) * (ca + cb) * plane + ca * plane);
    }
    return make_node(std::move(out), {a, b}, [n, ca, cb, plane](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        for (int i = 0; i < n; ++i) {
            const double* g = self.grad.data() + static_cast<std::int64_t>(i) * (ca + cb) * plane;
            if (pa.requires_grad) {
                pa.ensure_grad();
                double* ga = pa.grad.data() + static_cast<std::int64_t>(i) * ca * plane;
                for (std::int64_t k = 0; k < ca * plane; ++k) ga[k] += g[k];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                double* gb = pb.grad.data() + static_cast<std::int64_t>(i) * cb * plane;
                for (std::int64_t k = 0; k < cb * plane; ++k) gb[k] += g[ca * plane + k];
            }
        }
    });
}

Var reflect_pad2d(const Var& a, int top, int bottom, int left, int right) {
    const Tensor& av = a->value;
    if (av.ndim() != 4) throw std::invalid_argument("reflect_pad2d: expected NCHW");
    const int n = av.dim(0), c = av.dim(1), h = av.dim(2), w = av.dim(3);
    Tensor out({n, c, h + top + bottom, w + left + right});
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h + top + bottom; ++y) {
                const int sy = reflect_index(y - top, h);
                for (int x = 0; x < w + left + right; ++x)
                    out.at4(i, ch, y, x) = av.at4(i, ch, sy, reflect_index(x - left, w));
            }
    return make_node(std::move(out), {a}, [n, c, h, w, top, left](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        const int ho = self.grad.dim(2), wo = self.grad.dim(3);
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < ho; ++y) {
                    const int sy = reflect_index(y - top, h);
                    for (int x = 0; x < wo; ++x)
                        p.grad.at4(i, ch, sy, reflect_index(x - left, w)) +=
                            self.grad.at4(i, ch, y, x);
                }
    });
}

Var crop2d(const Var& a, int top, int left, int height, int width) {
    const Tensor& av = a->value;
    if (av.ndim() != 4) throw std::invalid_argument("crop2d: expected NCHW");
    if (top < 0 || left < 0 || top + height > av.dim(2) || left + width > av.dim(3))
        throw std::invalid_argument("crop2d: region out of bounds");
    const int n = av.dim(0), c = av.dim(1);
    Tensor out({n, c, height, width});
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x)
                    out.at4(i, ch, y, x) = av.at4(i, ch, top + y, left + x);
    return make_node(std::move(out), {a}, [n, c, top, left, height, width](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < height; ++y)
                    for (int x = 0; x < width; ++x)
                        p.grad.at4(i, ch, top + y, left + x) += self.grad.at4(i, ch, y, x);
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    if (xv.ndim() != 4 || wv.ndim() != 4)
        throw std::invalid_argument("conv2d: expected NCHW input and FCKK weight");
    if (wv.dim(2) != wv.dim(3)) throw std::invalid_argument("conv2d: kernel must be square");
    if (xv.dim(1) != wv.dim(1))
        throw std::invalid_argument("conv2d: input channels " + std::to_string(xv.dim(1)) +
                                    " do not match weight channels " + std::to_string(wv.dim(1)));
    const int n = xv.dim(0), h = xv.dim(2), ww = xv.dim(3);
    const int f = wv.dim(0), k = wv.dim(2);
    if (b->value.numel() != f) throw std::invalid_argument("conv2d: bias size mismatch");
    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (ww + 2 * pad - k) / stride + 1;
    if (ho < 1 || wo < 1) throw std::invalid_argument("conv2d: output would be empty");

    Tensor out({n, f, ho, wo});
    CMapM wm(wv.data(), f, static_cast<Eigen::Index>(wv.dim(1)) * k * k);
    MatRM col;
    for (int i = 0; i < n; ++i) {
        im2col(xv, i, k, stride, pad, ho, wo, col);
        MapM om(out.data() + static_cast<std::int64_t>(i) * f * ho * wo, f,
                static_cast<Eigen::Index>(ho) * wo);
        om.noalias() = wm * col;
        for (int fi = 0; fi < f; ++fi) om.row(fi).array() += b->value[fi];
    }

    return make_node(std::move(out), {x, w, b}, [stride, pad, k, f, ho, wo, n](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        const Tensor& xv = px.value;
        CMapM wm(pw.value.data(), f, static_cast<Eigen::Index>(pw.value.dim(1)) * k * k);
        if (px.requires_grad) px.ensure_grad();
        if (pw.requires_grad) pw.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        MatRM col, dcol;
        for (int i = 0; i < n; ++i) {
            CMapM gm(self.grad.data() + static_cast<std::int64_t>(i) * f * ho * wo, f,
                     static_cast<Eigen::Index>(ho) * wo);
            if (pw.requires_grad || px.requires_grad)
                im2col(xv, i, k, stride, pad, ho, wo, col);
            if (pw.requires_grad) {
                MapM dwm(pw.grad.data(), f, static_cast<Eigen::Index>(pw.value.dim(1)) * k * k);
                dwm.noalias() += gm * col.transpose();
            }
            if (pb.requires_grad)
                for (int fi = 0; fi < f; ++fi) pb.grad[fi] += gm.row(fi).sum();
            if (px.requires_grad) {
                dcol.noalias() = wm.transpose() * gm;
                col2im_accumulate(dcol, i, k, stride, pad, ho, wo, px.grad);
            }
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x->value;
    const Tensor& wv = w->value;
    if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(1))
        throw std::invalid_argument("linear: shape mismatch " + Tensor::shape_str(xv.shape()) +
                                    " vs " + Tensor::shape_str(wv.shape()));
    const int n = xv.dim(0), d = xv.dim(1), o = wv.dim(0);
    if (b->value.numel() != o) throw std::invalid_argument("linear: bias size mismatch");
    Tensor out({n, o});
    CMapM xm(xv.data(), n, d);
    CMapM wm(wv.data(), o, d);
    MapM om(out.data(), n, o);
    om.noalias() = xm * wm.transpose();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < o; ++j) out[static_cast<std::int64_t>(i) * o + j] += b->value[j];
    return make_node(std::move(out), {x, w, b}, [n, d, o](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        CMapM gm(self.grad.data(), n, o);
        if (px.requires_grad) {
            px.ensure_grad();
            CMapM wm(pw.value.data(), o, d);
            MapM gx(px.grad.data(), n, d);
            gx.noalias() += gm * wm;
        }
        if (pw.requires_grad) {
            pw.ensure_grad();
            CMapM xm(px.value.data(), n, d);
            MapM gw(pw.grad.data(), o, d);
            gw.noalias() += gm.transpose() * xm;
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int j = 0; j < o; ++j) pb.grad[j] += gm.col(j).sum();
        }
    });
}

Var maxpool2x(const Var& x) {
    const Tensor& xv = x->value;
    if (xv.ndim() != 4) throw std::invalid_argument("maxpool2x: expected NCHW");
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    if (h % 2 != 0 || w % 2 != 0)
        throw std::invalid_argument("maxpool2x: spatial dims must be even");
    const int ho = h / 2, wo = w / 2;
    Tensor out({n, c, ho, wo});
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.numel()));
    std::int64_t oi = 0;
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < ho; ++y)
                for (int xcol = 0; xcol < wo; ++xcol, ++oi) {
                    double best = -1e300;
                    std::int64_t besti = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::int64_t idx =
                                ((static_cast<std::int64_t>(i) * c + ch) * h + 2 * y + dy) * w +
                                2 * xcol + dx;
                            if (xv[idx] > best) { best = xv[idx]; besti = idx; }
                        }
                    out[oi] = best;
                    argmax[static_cast<std::size_t>(oi)] = besti;
                }
    return make_node(std::move(out), {x}, [argmax](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (std::int64_t i = 0; i < self.grad.numel(); ++i)
            p.grad[argmax[static_cast<std::size_t>(i)]] += self.grad[i];
    });
}

Var upsample_nearest2x(const Var& x) {
    const Tensor& xv = x->value;
    if (xv.ndim() != 4) throw std::invalid_argument("upsample_nearest2x: expected NCHW");
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    Tensor out({n, c, 2 * h, 2 * w});
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < 2 * h; ++y)
                for (int xcol = 0; xcol < 2 * w; ++xcol)
                    out.at4(i, ch, y, xcol) = xv.at4(i, ch, y / 2, xcol / 2);
    return make_node(std::move(out), {x}, [n, c, h, w](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < 2 * h; ++y)
                    for (int xcol = 0; xcol < 2 * w; ++xcol)
                        p.grad.at4(i, ch, y / 2, xcol / 2) += self.grad.at4(i, ch, y, xcol);
    });
}

Var sum_all(const Var& a) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < a->value.numel(); ++i) acc += a->value[i];
    return make_node(Tensor::scalar(acc), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        const double g = self.grad[0];
        for (std::int64_t i = 0; i < p.grad.numel(); ++i) p.grad[i] += g;
    });
}

Var mean_all(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a->value.numel());
    double acc = 0.0;
    for (std::int64_t i = 0; i < a->value.numel(); ++i) acc += a->value[i];
    return make_node(Tensor::scalar(acc * inv), {a}, [inv](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        const double g = self.grad[0] * inv;
        for (std::int64_t i = 0; i < p.grad.numel(); ++i) p.grad[i] += g;
    });
}

void backward(const Var& root) {
    if (root->value.numel() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    if (!root->requires_grad) return;

    // Collect the reachable subgraph; creation ids give a valid reverse
    // topological order since parents always precede children.
    std::vector<Node*> nodes;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        nodes.push_back(n);
        for (const auto& p : n->parents)
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const Node* a, const Node* b) { return a->id > b->id; });

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (Node* n : nodes)
        if (n->backward_op && n->grad_ready) n->backward_op(*n);
}

}  // namespace fgsr
