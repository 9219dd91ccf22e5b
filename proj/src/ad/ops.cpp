#include "mde/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "mde/core/errors.hpp"
#include "mde/core/resize.hpp"
#include "mde/kernels/kernels.hpp"

namespace mde::ad::ops {

namespace {

namespace kn = mde::kernels;

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw ShapeMismatchError(std::string(op) + ": " + a->value.shape_str() + " vs " +
                                 b->value.shape_str());
}

// Creates the result node; parents and the backward closure are kept only
// when recording is active and some parent participates in differentiation.
Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bwd) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (grad_enabled()) {
        bool need = false;
        for (const auto& p : parents)
            need = need || p->requires_grad;
        if (need) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backward_fn = std::move(bwd);
        }
    }
    return n;
}

void accum(const Var& p, const double* g, std::size_t n) {
    if (!p->requires_grad)
        return;
    Tensor& pg = p->ensure_grad();
    kn::axpy(1.0, g, pg.data(), n);
}

void accum_scaled(const Var& p, double alpha, const double* g, std::size_t n) {
    if (!p->requires_grad)
        return;
    Tensor& pg = p->ensure_grad();
    kn::axpy(alpha, g, pg.data(), n);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Tensor out(a->value.shape());
    kn::add(a->value.data(), b->value.data(), out.data(), out.numel());
    return make(std::move(out), {a, b}, [](Node& n) {
        accum(n.parents[0], n.grad.data(), n.grad.numel());
        accum(n.parents[1], n.grad.data(), n.grad.numel());
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a->value.shape());
    kn::sub(a->value.data(), b->value.data(), out.data(), out.numel());
    return make(std::move(out), {a, b}, [](Node& n) {
        accum(n.parents[0], n.grad.data(), n.grad.numel());
        accum_scaled(n.parents[1], -1.0, n.grad.data(), n.grad.numel());
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a->value.shape());
    kn::hadamard(a->value.data(), b->value.data(), out.data(), out.numel());
    return make(std::move(out), {a, b}, [](Node& n) {
        const std::size_t sz = n.grad.numel();
        Tensor tmp(n.grad.shape());
        kn::hadamard(n.grad.data(), n.parents[1]->value.data(), tmp.data(), sz);
        accum(n.parents[0], tmp.data(), sz);
        kn::hadamard(n.grad.data(), n.parents[0]->value.data(), tmp.data(), sz);
        accum(n.parents[1], tmp.data(), sz);
    });
}

Var add_scalar(const Var& a, double c) {
    Tensor out = a->value;
    for (auto& v : out.vec())
        v += c;
    return make(std::move(out), {a}, [](Node& n) {
        accum(n.parents[0], n.grad.data(), n.grad.numel());
    });
}

Var mul_scalar(const Var& a, double c) {
    Tensor out(a->value.shape());
    kn::scale(a->value.data(), c, out.data(), out.numel());
    return make(std::move(out), {a}, [c](Node& n) {
        accum_scaled(n.parents[0], c, n.grad.data(), n.grad.numel());
    });
}

Var scale_add(const Var& a, double ca, const Var& b, double cb) {
    require_same_shape(a, b, "scale_add");
    Tensor out(a->value.shape());
    kn::scale(a->value.data(), ca, out.data(), out.numel());
    kn::axpy(cb, b->value.data(), out.data(), out.numel());
    return make(std::move(out), {a, b}, [ca, cb](Node& n) {
        accum_scaled(n.parents[0], ca, n.grad.data(), n.grad.numel());
        accum_scaled(n.parents[1], cb, n.grad.data(), n.grad.numel());
    });
}

Var silu(const Var& x) {
    Tensor out(x->value.shape());
    const double* xv = x->value.data();
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = xv[i] * sigmoid(xv[i]);
    return make(std::move(out), {x}, [](Node& n) {
        const Var& x = n.parents[0];
        if (!x->requires_grad)
            return;
        Tensor& xg = x->ensure_grad();
        const double* xv = x->value.data();
        const double* g = n.grad.data();
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            const double s = sigmoid(xv[i]);
            xg[i] += g[i] * (s + xv[i] * s * (1.0 - s));
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    const int m = a->value.size(0), k = a->value.size(1);
    if (b->value.size(0) != k)
        throw ShapeMismatchError("matmul inner dims: " + a->value.shape_str() + " x " +
                                 b->value.shape_str());
    const int n = b->value.size(1);
    Tensor out({m, n});
    kn::matmul(a->value.data(), b->value.data(), out.data(), m, k, n);
    return make(std::move(out), {a, b}, [m, k, n](Node& nd) {
        const Var& a = nd.parents[0];
        const Var& b = nd.parents[1];
        if (a->requires_grad) {
            Tensor tmp({m, k});
            kn::matmul_nt(nd.grad.data(), b->value.data(), tmp.data(), m, n, k);
            accum(a, tmp.data(), tmp.numel());
        }
        if (b->requires_grad) {
            Tensor tmp({k, n});
            kn::matmul_tn(a->value.data(), nd.grad.data(), tmp.data(), k, m, n);
            accum(b, tmp.data(), tmp.numel());
        }
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    const int m = a->value.size(0), k = a->value.size(1);
    if (b->value.size(1) != k)
        throw ShapeMismatchError("matmul_nt inner dims: " + a->value.shape_str() + " x " +
                                 b->value.shape_str());
    const int n = b->value.size(0);
    Tensor out({m, n});
    kn::matmul_nt(a->value.data(), b->value.data(), out.data(), m, k, n);
    return make(std::move(out), {a, b}, [m, k, n](Node& nd) {
        const Var& a = nd.parents[0];
        const Var& b = nd.parents[1];
        if (a->requires_grad) {
            Tensor tmp({m, k});
            kn::matmul(nd.grad.data(), b->value.data(), tmp.data(), m, n, k);
            accum(a, tmp.data(), tmp.numel());
        }
        if (b->requires_grad) {
            Tensor tmp({n, k});
            kn::matmul_tn(nd.grad.data(), a->value.data(), tmp.data(), n, m, k);
            accum(b, tmp.data(), tmp.numel());
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    const int r = x->value.size(0), din = x->value.size(1);
    const int dout = w->value.size(0);
    if (w->value.size(1) != din || b->value.numel() != static_cast<std::size_t>(dout))
        throw ShapeMismatchError("linear: x " + x->value.shape_str() + ", w " +
                                 w->value.shape_str());
    Tensor out({r, dout});
    kn::matmul_nt(x->value.data(), w->value.data(), out.data(), r, din, dout);
    for (int i = 0; i < r; ++i)
        kn::add(out.data() + static_cast<std::size_t>(i) * dout, b->value.data(),
                out.data() + static_cast<std::size_t>(i) * dout, dout);
    return make(std::move(out), {x, w, b}, [r, din, dout](Node& nd) {
        const Var& x = nd.parents[0];
        const Var& w = nd.parents[1];
        const Var& b = nd.parents[2];
        if (x->requires_grad) {
            Tensor tmp({r, din});
            kn::matmul(nd.grad.data(), w->value.data(), tmp.data(), r, dout, din);
            accum(x, tmp.data(), tmp.numel());
        }
        if (w->requires_grad) {
            Tensor tmp({dout, din});
            kn::matmul_tn(nd.grad.data(), x->value.data(), tmp.data(), dout, r, din);
            accum(w, tmp.data(), tmp.numel());
        }
        if (b->requires_grad) {
            Tensor& bg = b->ensure_grad();
            for (int i = 0; i < r; ++i)
                kn::add(bg.data(), nd.grad.data() + static_cast<std::size_t>(i) * dout, bg.data(),
                        dout);
        }
    });
}

namespace {

struct ConvDims {
    int c, h, w, o, kh, kw, stride, pad, ho, wo;
    int patch() const { return c * kh * kw; }
    int positions() const { return ho * wo; }
};

// cols[p, c*kh*kw]: receptive field per output position, zero padded.
void im2col(const Tensor& x, const ConvDims& d, Tensor& cols) {
    const int K = d.patch();
    for (int oy = 0; oy < d.ho; ++oy) {
        for (int ox = 0; ox < d.wo; ++ox) {
            double* row = cols.data() + (static_cast<std::size_t>(oy) * d.wo + ox) * K;
            int idx = 0;
            for (int c = 0; c < d.c; ++c) {
                for (int ky = 0; ky < d.kh; ++ky) {
                    const int iy = oy * d.stride + ky - d.pad;
                    for (int kx = 0; kx < d.kw; ++kx, ++idx) {
                        const int ix = ox * d.stride + kx - d.pad;
                        row[idx] = (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                                       ? x.at(c, iy, ix)
                                       : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_accum(const Tensor& dcols, const ConvDims& d, Tensor& dx) {
    const int K = d.patch();
    for (int oy = 0; oy < d.ho; ++oy) {
        for (int ox = 0; ox < d.wo; ++ox) {
            const double* row = dcols.data() + (static_cast<std::size_t>(oy) * d.wo + ox) * K;
            int idx = 0;
            for (int c = 0; c < d.c; ++c) {
                for (int ky = 0; ky < d.kh; ++ky) {
                    const int iy = oy * d.stride + ky - d.pad;
                    for (int kx = 0; kx < d.kw; ++kx, ++idx) {
                        const int ix = ox * d.stride + kx - d.pad;
                        if (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                            dx.at(c, iy, ix) += row[idx];
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    ConvDims d;
    d.c = x->value.size(0);
    d.h = x->value.size(1);
    d.w = x->value.size(2);
    d.o = w->value.size(0);
    d.kh = w->value.size(2);
    d.kw = w->value.size(3);
    d.stride = stride;
    d.pad = pad;
    if (w->value.size(1) != d.c)
        throw ShapeMismatchError("conv2d: x " + x->value.shape_str() + ", w " +
                                 w->value.shape_str());
    d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
    d.wo = (d.w + 2 * pad - d.kw) / stride + 1;

    const int P = d.positions(), K = d.patch();
    Tensor cols({P, K});
    im2col(x->value, d, cols);
    Tensor out2d({d.o, P});
    kn::matmul_nt(w->value.data(), cols.data(), out2d.data(), d.o, K, P);
    for (int o = 0; o < d.o; ++o) {
        double* row = out2d.data() + static_cast<std::size_t>(o) * P;
        const double bias = b->value[static_cast<std::size_t>(o)];
        for (int p = 0; p < P; ++p)
            row[p] += bias;
    }
    // im2col is recomputed in backward instead of captured; the graphs here
    // live long enough that keeping every cols buffer would dominate memory.
    return make(out2d.reshaped({d.o, d.ho, d.wo}), {x, w, b}, [d](Node& nd) {
        const int P = d.positions(), K = d.patch();
        const Var& x = nd.parents[0];
        const Var& w = nd.parents[1];
        const Var& b = nd.parents[2];
        const double* g = nd.grad.data();  // [O, P] flattened
        if (b->requires_grad) {
            Tensor& bg = b->ensure_grad();
            for (int o = 0; o < d.o; ++o)
                bg[static_cast<std::size_t>(o)] += kn::sum(g + static_cast<std::size_t>(o) * P, P);
        }
        if (w->requires_grad) {
            Tensor cols({P, K});
            im2col(x->value, d, cols);
            Tensor dw({d.o, K});
            kn::matmul(g, cols.data(), dw.data(), d.o, P, K);
            accum(w, dw.data(), dw.numel());
        }
        if (x->requires_grad) {
            Tensor dcols({P, K});
            kn::matmul_tn(g, w->value.data(), dcols.data(), P, d.o, K);
            Tensor dx(x->value.shape());
            col2im_accum(dcols, d, dx);
            accum(x, dx.data(), dx.numel());
        }
    });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
    const int C = x->value.size(0), H = x->value.size(1), W = x->value.size(2);
    if (C % groups != 0)
        throw ShapeMismatchError("group_norm: channels not divisible by groups");
    const int cpg = C / groups;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const std::size_t gsize = static_cast<std::size_t>(cpg) * hw;

    Tensor xhat(x->value.shape());
    std::vector<double> inv_std(static_cast<std::size_t>(groups));
    for (int g = 0; g < groups; ++g) {
        const double* xg = x->value.data() + static_cast<std::size_t>(g) * gsize;
        const double mu = kn::sum(xg, gsize) / static_cast<double>(gsize);
        double var = 0.0;
        for (std::size_t i = 0; i < gsize; ++i) {
            const double dv = xg[i] - mu;
            var += dv * dv;
        }
        var /= static_cast<double>(gsize);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(g)] = inv;
        double* xh = xhat.data() + static_cast<std::size_t>(g) * gsize;
        for (std::size_t i = 0; i < gsize; ++i)
            xh[i] = (xg[i] - mu) * inv;
    }
    Tensor out(x->value.shape());
    for (int c = 0; c < C; ++c) {
        const double gm = gamma->value[static_cast<std::size_t>(c)];
        const double bt = beta->value[static_cast<std::size_t>(c)];
        const double* xh = xhat.data() + static_cast<std::size_t>(c) * hw;
        double* op = out.data() + static_cast<std::size_t>(c) * hw;
        for (std::size_t i = 0; i < hw; ++i)
            op[i] = gm * xh[i] + bt;
    }
    return make(std::move(out), {x, gamma, beta},
                [groups, cpg, hw, gsize, C, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Node& nd) {
        const Var& x = nd.parents[0];
        const Var& gamma = nd.parents[1];
        const Var& beta = nd.parents[2];
        const double* g = nd.grad.data();
        if (gamma->requires_grad) {
            Tensor& gg = gamma->ensure_grad();
            for (int c = 0; c < C; ++c)
                gg[static_cast<std::size_t>(c)] +=
                    kn::dot(g + static_cast<std::size_t>(c) * hw,
                            xhat.data() + static_cast<std::size_t>(c) * hw, hw);
        }
        if (beta->requires_grad) {
            Tensor& bg = beta->ensure_grad();
            for (int c = 0; c < C; ++c)
                bg[static_cast<std::size_t>(c)] += kn::sum(g + static_cast<std::size_t>(c) * hw, hw);
        }
        if (!x->requires_grad)
            return;
        Tensor& xg = x->ensure_grad();
        std::vector<double> dxhat(gsize);
        for (int grp = 0; grp < groups; ++grp) {
            const std::size_t base = static_cast<std::size_t>(grp) * gsize;
            for (int cc = 0; cc < cpg; ++cc) {
                const int c = grp * cpg + cc;
                const double gm = gamma->value[static_cast<std::size_t>(c)];
                kn::scale(g + static_cast<std::size_t>(c) * hw, gm,
                          dxhat.data() + static_cast<std::size_t>(cc) * hw, hw);
            }
            const double* xh = xhat.data() + base;
            const double mean_dxhat = kn::sum(dxhat.data(), gsize) / static_cast<double>(gsize);
            const double mean_dxhat_xhat =
                kn::dot(dxhat.data(), xh, gsize) / static_cast<double>(gsize);
            const double inv = inv_std[static_cast<std::size_t>(grp)];
            double* xgp = xg.data() + base;
            for (std::size_t i = 0; i < gsize; ++i)
                xgp[i] += inv * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
        }
    });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const int R = x->value.size(0), D = x->value.size(1);
    Tensor xhat(x->value.shape());
    std::vector<double> inv_std(static_cast<std::size_t>(R));
    for (int r = 0; r < R; ++r) {
        const double* row = x->value.data() + static_cast<std::size_t>(r) * D;
        const double mu = kn::sum(row, D) / D;
        double var = 0.0;
        for (int i = 0; i < D; ++i) {
            const double dv = row[i] - mu;
            var += dv * dv;
        }
        var /= D;
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = inv;
        double* xh = xhat.data() + static_cast<std::size_t>(r) * D;
        for (int i = 0; i < D; ++i)
            xh[i] = (row[i] - mu) * inv;
    }
    Tensor out(x->value.shape());
    for (int r = 0; r < R; ++r) {
        const double* xh = xhat.data() + static_cast<std::size_t>(r) * D;
        double* op = out.data() + static_cast<std::size_t>(r) * D;
        for (int i = 0; i < D; ++i)
            op[i] = gamma->value[static_cast<std::size_t>(i)] * xh[i] +
                    beta->value[static_cast<std::size_t>(i)];
    }
    return make(std::move(out), {x, gamma, beta},
                [R, D, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& nd) {
        const Var& x = nd.parents[0];
        const Var& gamma = nd.parents[1];
        const Var& beta = nd.parents[2];
        const double* g = nd.grad.data();
        if (gamma->requires_grad || beta->requires_grad) {
            for (int r = 0; r < R; ++r) {
                const double* grow = g + static_cast<std::size_t>(r) * D;
                const double* xh = xhat.data() + static_cast<std::size_t>(r) * D;
                if (gamma->requires_grad) {
                    Tensor& gg = gamma->ensure_grad();
                    for (int i = 0; i < D; ++i)
                        gg[static_cast<std::size_t>(i)] += grow[i] * xh[i];
                }
                if (beta->requires_grad) {
                    Tensor& bg = beta->ensure_grad();
                    kn::add(bg.data(), grow, bg.data(), D);
                }
            }
        }
        if (!x->requires_grad)
            return;
        Tensor& xg = x->ensure_grad();
        std::vector<double> dxhat(static_cast<std::size_t>(D));
        for (int r = 0; r < R; ++r) {
            const double* grow = g + static_cast<std::size_t>(r) * D;
            const double* xh = xhat.data() + static_cast<std::size_t>(r) * D;
            for (int i = 0; i < D; ++i)
                dxhat[static_cast<std::size_t>(i)] =
                    grow[i] * gamma->value[static_cast<std::size_t>(i)];
            const double mean_dxhat = kn::sum(dxhat.data(), D) / D;
            const double mean_dxhat_xhat = kn::dot(dxhat.data(), xh, D) / D;
            const double inv = inv_std[static_cast<std::size_t>(r)];
            double* xgrow = xg.data() + static_cast<std::size_t>(r) * D;
            for (int i = 0; i < D; ++i)
                xgrow[i] += inv * (dxhat[static_cast<std::size_t>(i)] - mean_dxhat -
                                   xh[i] * mean_dxhat_xhat);
        }
    });
}

Var softmax_rows(const Var& x) {
    const int R = x->value.size(0), C = x->value.size(1);
    Tensor out(x->value.shape());
    for (int r = 0; r < R; ++r) {
        const double* row = x->value.data() + static_cast<std::size_t>(r) * C;
        double* orow = out.data() + static_cast<std::size_t>(r) * C;
        double mx = row[0];
        for (int c = 1; c < C; ++c)
            mx = std::max(mx, row[c]);
        double denom = 0.0;
        for (int c = 0; c < C; ++c) {
            orow[c] = std::exp(row[c] - mx);
            denom += orow[c];
        }
        kn::scale(orow, 1.0 / denom, orow, C);
    }
    return make(std::move(out), {x}, [R, C](Node& nd) {
        const Var& x = nd.parents[0];
        if (!x->requires_grad)
            return;
        Tensor& xg = x->ensure_grad();
        for (int r = 0; r < R; ++r) {
            const std::size_t off = static_cast<std::size_t>(r) * C;
            const double* y = nd.value.data() + off;
            const double* g = nd.grad.data() + off;
            const double dotgy = kn::dot(g, y, C);
            double* xgrow = xg.data() + off;
            for (int c = 0; c < C; ++c)
                xgrow[c] += y[c] * (g[c] - dotgy);
        }
    });
}

Var reshape(const Var& x, std::vector<int> shape) {
    Tensor out = x->value.reshaped(std::move(shape));
    return make(std::move(out), {x}, [](Node& n) {
        accum(n.parents[0], n.grad.data(), n.grad.numel());
    });
}

Var chw_to_rows(const Var& x) {
    const int C = x->value.size(0), H = x->value.size(1), W = x->value.size(2);
    const int P = H * W;
    Tensor out({P, C});
    for (int c = 0; c < C; ++c) {
        const double* src = x->value.data() + static_cast<std::size_t>(c) * P;
        for (int p = 0; p < P; ++p)
            out.at(p, c) = src[p];
    }
    return make(std::move(out), {x}, [C, P](Node& nd) {
        const Var& x = nd.parents[0];
        if (!x->requires_grad)
            return;
        Tensor& xg = x->ensure_grad();
        for (int c = 0; c < C; ++c) {
            double* dst = xg.data() + static_cast<std::size_t>(c) * P;
            for (int p = 0; p < P; ++p)
                dst[p] += nd.grad.at(p, c);
        }
    });
}

Var rows_to_chw(const Var& x, int c, int h, int w) {
    const int P = h * w;
    if (x->value.size(0) != P || x->value.size(1) != c)
        throw ShapeMismatchError("rows_to_chw: " + x->value.shape_str());
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        double* dst = out.data() + static_cast<std::size_t>(ch) * P;
        for (int p = 0; p < P; ++p)
            dst[p] = x->value.at(p, ch);
    }
    return make(std::move(out), {x}, [c, P](Node& nd) {
        const Var& x = nd.parents[0];
        if (!x->requires_grad)
            return;
        Tensor& xg = x->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
            const double* g = nd.grad.data() + static_cast<std::size_t>(ch) * P;
            for (int p = 0; p < P; ++p)
                xg.at(p, ch) += g[p];
        }
    });
}

Var slice_cols(const Var& x, int c0, int c1) {
    const int R = x->value.size(0), C = x->value.size(1);
    const int n = c1 - c0;
    Tensor out({R, n});
    for (int r = 0; r < R; ++r)
        std::memcpy(out.data() + static_cast<std::size_t>(r) * n,
                    x->value.data() + static_cast<std::size_t>(r) * C + c0,
                    static_cast<std::size_t>(n) * sizeof(double));
    return make(std::move(out), {x}, [R, C, c0, n](Node& nd) {
        const Var& x = nd.parents[0];
        if (!x->requires_grad)
            return;
        Tensor& xg = x->ensure_grad();
        for (int r = 0; r < R; ++r)
            kn::add(xg.data() + static_cast<std::size_t>(r) * C + c0,
                    nd.grad.data() + static_cast<std::size_t>(r) * n,
                    xg.data() + static_cast<std::size_t>(r) * C + c0, n);
    });
}

Var concat_cols(const std::vector<Var>& xs) {
    const int R = xs.front()->value.size(0);
    int total = 0;
    for (const auto& x : xs) {
        if (x->value.size(0) != R)
            throw ShapeMismatchError("concat_cols: row mismatch");
        total += x->value.size(1);
    }
    Tensor out({R, total});
    int off = 0;
    for (const auto& x : xs) {
        const int c = x->value.size(1);
        for (int r = 0; r < R; ++r)
            std::memcpy(out.data() + static_cast<std::size_t>(r) * total + off,
                        x->value.data() + static_cast<std::size_t>(r) * c,
                        static_cast<std::size_t>(c) * sizeof(double));
        off += c;
    }
    std::vector<Var> parents(xs.begin(), xs.end());
    return make(std::move(out), std::move(parents), [R, total](Node& nd) {
        int off = 0;
        for (auto& p : nd.parents) {
            const int c = p->value.size(1);
            if (p->requires_grad) {
                Tensor& pg = p->ensure_grad();
                for (int r = 0; r < R; ++r)
                    kn::add(pg.data() + static_cast<std::size_t>(r) * c,
                            nd.grad.data() + static_cast<std::size_t>(r) * total + off,
                            pg.data() + static_cast<std::size_t>(r) * c, c);
            }
            off += c;
        }
    });
}

Var concat_chw(const Var& a, const Var& b) {
    const int C1 = a->value.size(0), C2 = b->value.size(0);
    const int H = a->value.size(1), W = a->value.size(2);
    if (b->value.size(1) != H || b->value.size(2) != W)
        throw ShapeMismatchError("concat_chw: spatial mismatch");
    Tensor out({C1 + C2, H, W});
    std::memcpy(out.data(), a->value.data(), a->value.numel() * sizeof(double));
    std::memcpy(out.data() + a->value.numel(), b->value.data(),
                b->value.numel() * sizeof(double));
    return make(std::move(out), {a, b}, [](Node& nd) {
        const Var& a = nd.parents[0];
        const Var& b = nd.parents[1];
        accum(a, nd.grad.data(), a->value.numel());
        accum(b, nd.grad.data() + a->value.numel(), b->value.numel());
    });
}

Var upsample_nearest2x(const Var& x) {
    const int C = x->value.size(0), H = x->value.size(1), W = x->value.size(2);
    Tensor out({C, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < 2 * H; ++y)
            for (int xx = 0; xx < 2 * W; ++xx)
                out.at(c, y, xx) = x->value.at(c, y / 2, xx / 2);
    return make(std::move(out), {x}, [C, H, W](Node& nd) {
        const Var& x = nd.parents[0];
        if (!x->requires_grad)
            return;
        Tensor& xg = x->ensure_grad();
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < 2 * H; ++y)
                for (int xx = 0; xx < 2 * W; ++xx)
                    xg.at(c, y / 2, xx / 2) += nd.grad.at(c, y, xx);
    });
}

Var add_channel_bias(const Var& x, const Var& b) {
    const int C = x->value.size(0);
    const std::size_t hw = x->value.numel() / static_cast<std::size_t>(C);
    if (b->value.numel() != static_cast<std::size_t>(C))
        throw ShapeMismatchError("add_channel_bias: bias size");
    Tensor out = x->value;
    for (int c = 0; c < C; ++c) {
        double* p = out.data() + static_cast<std::size_t>(c) * hw;
        const double bias = b->value[static_cast<std::size_t>(c)];
        for (std::size_t i = 0; i < hw; ++i)
            p[i] += bias;
    }
    return make(std::move(out), {x, b}, [C, hw](Node& nd) {
        accum(nd.parents[0], nd.grad.data(), nd.grad.numel());
        const Var& b = nd.parents[1];
        if (b->requires_grad) {
            Tensor& bg = b->ensure_grad();
            for (int c = 0; c < C; ++c)
                bg[static_cast<std::size_t>(c)] +=
                    kn::sum(nd.grad.data() + static_cast<std::size_t>(c) * hw, hw);
        }
    });
}

Var bilinear_resize(const Var& x, int out_h, int out_w) {
    const int h = x->value.size(0), w = x->value.size(1);
    auto taps = bilinear_taps(h, w, out_h, out_w);
    Tensor out({out_h, out_w});
    const double* src = x->value.data();
    for (std::size_t i = 0; i < taps.size(); ++i) {
        const BilinearTap& t = taps[i];
        out[i] = t.w0 * src[t.idx0] + t.w1 * src[t.idx1] + t.w2 * src[t.idx2] + t.w3 * src[t.idx3];
    }
    return make(std::move(out), {x}, [taps = std::move(taps)](Node& nd) {
        const Var& x = nd.parents[0];
        if (!x->requires_grad)
            return;
        Tensor& xg = x->ensure_grad();
        for (std::size_t i = 0; i < taps.size(); ++i) {
            const BilinearTap& t = taps[i];
            const double g = nd.grad[i];
            xg[static_cast<std::size_t>(t.idx0)] += t.w0 * g;
            xg[static_cast<std::size_t>(t.idx1)] += t.w1 * g;
            xg[static_cast<std::size_t>(t.idx2)] += t.w2 * g;
            xg[static_cast<std::size_t>(t.idx3)] += t.w3 * g;
        }
    });
}

Var embed_rows(const Var& table, const std::vector<int>& ids) {
    const int D = table->value.size(1);
    Tensor out({static_cast<int>(ids.size()), D});
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::memcpy(out.data() + i * D,
                    table->value.data() + static_cast<std::size_t>(ids[i]) * D,
                    static_cast<std::size_t>(D) * sizeof(double));
    return make(std::move(out), {table}, [ids, D](Node& nd) {
        const Var& table = nd.parents[0];
        if (!table->requires_grad)
            return;
        Tensor& tg = table->ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i)
            kn::add(tg.data() + static_cast<std::size_t>(ids[i]) * D, nd.grad.data() + i * D,
                    tg.data() + static_cast<std::size_t>(ids[i]) * D, D);
    });
}

Var sum_all(const Var& x) {
    Tensor out({1}, std::vector<double>{kn::sum(x->value.data(), x->value.numel())});
    return make(std::move(out), {x}, [](Node& nd) {
        const Var& x = nd.parents[0];
        if (!x->requires_grad)
            return;
        Tensor& xg = x->ensure_grad();
        const double g = nd.grad[0];
        for (auto& v : xg.vec())
            v += g;
    });
}

Var mean_all(const Var& x) {
    const double n = static_cast<double>(x->value.numel());
    Tensor out({1}, std::vector<double>{kn::sum(x->value.data(), x->value.numel()) / n});
    return make(std::move(out), {x}, [n](Node& nd) {
        const Var& x = nd.parents[0];
        if (!x->requires_grad)
            return;
        Tensor& xg = x->ensure_grad();
        const double g = nd.grad[0] / n;
        for (auto& v : xg.vec())
            v += g;
    });
}

Var mse_vs(const Var& a, const Tensor& target) {
    if (!a->value.same_shape(target))
        throw ShapeMismatchError("mse_vs: " + a->value.shape_str() + " vs " + target.shape_str());
    const std::size_t n = a->value.numel();
    Tensor diff(a->value.shape());
    kn::sub(a->value.data(), target.data(), diff.data(), n);
    Tensor out({1}, std::vector<double>{kn::sumsq(diff.data(), n) / static_cast<double>(n)});
    return make(std::move(out), {a}, [diff = std::move(diff), n](Node& nd) {
        accum_scaled(nd.parents[0], 2.0 * nd.grad[0] / static_cast<double>(n), diff.data(), n);
    });
}

Var stack_mean(const std::vector<Var>& xs) {
    const double inv = 1.0 / static_cast<double>(xs.size());
    Tensor out(xs.front()->value.shape());
    for (const auto& x : xs) {
        if (!x->value.same_shape(out))
            throw ShapeMismatchError("stack_mean: shape mismatch");
        kn::add(out.data(), x->value.data(), out.data(), out.numel());
    }
    kn::scale(out.data(), inv, out.data(), out.numel());
    std::vector<Var> parents(xs.begin(), xs.end());
    return make(std::move(out), std::move(parents), [inv](Node& nd) {
        for (auto& p : nd.parents)
            accum_scaled(p, inv, nd.grad.data(), nd.grad.numel());
    });
}

Var stack_sum(const std::vector<Var>& xs) {
    Tensor out(xs.front()->value.shape());
    for (const auto& x : xs) {
        if (!x->value.same_shape(out))
            throw ShapeMismatchError("stack_sum: shape mismatch");
        kn::add(out.data(), x->value.data(), out.data(), out.numel());
    }
    std::vector<Var> parents(xs.begin(), xs.end());
    return make(std::move(out), std::move(parents), [](Node& nd) {
        for (auto& p : nd.parents)
            accum(p, nd.grad.data(), nd.grad.numel());
    });
}

Var slice_col_as_grid(const Var& map, int col, int h, int w) {
    const int R = map->value.size(0), C = map->value.size(1);
    if (R != h * w)
        throw ShapeMismatchError("slice_col_as_grid: positions " + std::to_string(R) + " vs " +
                                 std::to_string(h * w));
    Tensor out({h, w});
    for (int r = 0; r < R; ++r)
        out[static_cast<std::size_t>(r)] = map->value.at(r, col);
    return make(std::move(out), {map}, [R, C, col](Node& nd) {
        const Var& map = nd.parents[0];
        if (!map->requires_grad)
            return;
        Tensor& mg = map->ensure_grad();
        for (int r = 0; r < R; ++r)
            mg[static_cast<std::size_t>(r) * C + col] += nd.grad[static_cast<std::size_t>(r)];
    });
}

Var inject_columns(const Var& edit_map, const Tensor& recon_map,
                   const std::vector<ColumnSource>& sources) {
    const int R = edit_map->value.size(0);
    const int C = static_cast<int>(sources.size());
    if (recon_map.size(0) != R)
        throw ShapeMismatchError("inject_columns: row count mismatch");
    Tensor out({R, C});
    for (int j = 0; j < C; ++j) {
        const ColumnSource& s = sources[static_cast<std::size_t>(j)];
        if (s.branch == ColumnSource::Branch::editing) {
            if (s.col < 0 || s.col >= edit_map->value.size(1))
                throw AlignmentOutOfRangeError("editing column " + std::to_string(s.col));
            for (int r = 0; r < R; ++r)
                out.at(r, j) = edit_map->value.at(r, s.col);
        } else {
            if (s.col < 0 || s.col >= recon_map.size(1))
                throw AlignmentOutOfRangeError("reconstruction column " + std::to_string(s.col));
            for (int r = 0; r < R; ++r)
                out.at(r, j) = recon_map.at(r, s.col);
        }
    }
    return make(std::move(out), {edit_map}, [R, C, sources](Node& nd) {
        const Var& edit = nd.parents[0];
        if (!edit->requires_grad)
            return;
        Tensor& eg = edit->ensure_grad();
        const int ec = edit->value.size(1);
        for (int j = 0; j < C; ++j) {
            const ColumnSource& s = sources[static_cast<std::size_t>(j)];
            if (s.branch != ColumnSource::Branch::editing)
                continue;
            for (int r = 0; r < R; ++r)
                eg[static_cast<std::size_t>(r) * ec + s.col] += nd.grad.at(r, j);
        }
    });
}

Var bce_vs_mask(const Var& pred, const Tensor& target, double eps) {
    if (!pred->value.same_shape(target))
        throw ShapeMismatchError("bce_vs_mask: " + pred->value.shape_str() + " vs " +
                                 target.shape_str());
    const std::size_t n = pred->value.numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = std::clamp(pred->value[i], eps, 1.0 - eps);
        const double s = target[i];
        acc += -(s * std::log(p) + (1.0 - s) * std::log(1.0 - p));
    }
    Tensor out({1}, std::vector<double>{acc / static_cast<double>(n)});
    return make(std::move(out), {pred}, [target, eps, n](Node& nd) {
        const Var& pred = nd.parents[0];
        if (!pred->requires_grad)
            return;
        Tensor& pg = pred->ensure_grad();
        const double g = nd.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double raw = pred->value[i];
            if (raw <= eps || raw >= 1.0 - eps)
                continue;  // clamped: flat
            const double s = target[i];
            pg[i] += g * (-(s / raw) + (1.0 - s) / (1.0 - raw));
        }
    });
}

Var div_by_max(const Var& x, double degenerate_eps) {
    const std::size_t n = x->value.numel();
    std::size_t argmax = 0;
    double m = x->value[0];
    for (std::size_t i = 1; i < n; ++i)
        if (x->value[i] > m) {
            m = x->value[i];
            argmax = i;
        }
    if (m < degenerate_eps)
        throw DegenerateSegmentationError("segmentation map is identically ~0 (max " +
                                          std::to_string(m) + ")");
    Tensor out(x->value.shape());
    kn::scale(x->value.data(), 1.0 / m, out.data(), n);
    return make(std::move(out), {x}, [m, argmax, n](Node& nd) {
        const Var& x = nd.parents[0];
        if (!x->requires_grad)
            return;
        Tensor& xg = x->ensure_grad();
        kn::axpy(1.0 / m, nd.grad.data(), xg.data(), n);
        // The max entry also moves every output: d(x_k/m)/d(x_argmax) = -x_k/m^2.
        const double dot_gx = kn::dot(nd.grad.data(), x->value.data(), n);
        xg[argmax] -= dot_gx / (m * m);
    });
}

Var ccl_deficit(const Var& edit, const Tensor& common_sum, const Tensor& mask,
                double guard_eps, bool mean_reduction) {
    if (!edit->value.same_shape(common_sum) || !edit->value.same_shape(mask))
        throw ShapeMismatchError("ccl_deficit: map/mask shapes differ");
    const std::size_t n = edit->value.numel();
    std::size_t n_masked = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (mask[i] != 0.0)
            ++n_masked;
    if (n_masked == 0)
        throw EmptyMaskError("ccl mask has no set pixel");
    const double norm = mean_reduction ? 1.0 / static_cast<double>(n_masked) : 1.0;

    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i] == 0.0)
            continue;
        const double denom = edit->value[i] + common_sum[i] + guard_eps;
        const double r = edit->value[i] / denom;
        acc += (1.0 - r) * (1.0 - r);
    }
    Tensor out({1}, std::vector<double>{acc * norm});
    return make(std::move(out), {edit}, [common_sum, mask, guard_eps, norm, n](Node& nd) {
        const Var& edit = nd.parents[0];
        if (!edit->requires_grad)
            return;
        Tensor& eg = edit->ensure_grad();
        const double g = nd.grad[0] * norm;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask[i] == 0.0)
                continue;
            const double denom = edit->value[i] + common_sum[i] + guard_eps;
            const double r = edit->value[i] / denom;
            // d(1-r)^2/de = -2(1-r) * (common+guard)/denom^2
            eg[i] += g * (-2.0 * (1.0 - r) * (common_sum[i] + guard_eps) / (denom * denom));
        }
    });
}

Var ce_vs_labels(const Var& logits, const std::vector<int>& labels) {
    const int R = logits->value.size(0), K = logits->value.size(1);
    if (static_cast<int>(labels.size()) != R)
        throw ShapeMismatchError("ce_vs_labels: label count");
    Tensor probs({R, K});
    double acc = 0.0;
    for (int r = 0; r < R; ++r) {
        const double* row = logits->value.data() + static_cast<std::size_t>(r) * K;
        double* prow = probs.data() + static_cast<std::size_t>(r) * K;
        double mx = row[0];
        for (int k = 1; k < K; ++k)
            mx = std::max(mx, row[k]);
        double denom = 0.0;
        for (int k = 0; k < K; ++k) {
            prow[k] = std::exp(row[k] - mx);
            denom += prow[k];
        }
        kn::scale(prow, 1.0 / denom, prow, K);
        acc += -std::log(std::max(prow[labels[static_cast<std::size_t>(r)]], 1e-300));
    }
    Tensor out({1}, std::vector<double>{acc / R});
    return make(std::move(out), {logits},
                [R, K, labels, probs = std::move(probs)](Node& nd) {
        const Var& logits = nd.parents[0];
        if (!logits->requires_grad)
            return;
        Tensor& lg = logits->ensure_grad();
        const double g = nd.grad[0] / R;
        for (int r = 0; r < R; ++r) {
            const double* prow = probs.data() + static_cast<std::size_t>(r) * K;
            double* grow = lg.data() + static_cast<std::size_t>(r) * K;
            for (int k = 0; k < K; ++k)
                grow[k] += g * (prow[k] - (k == labels[static_cast<std::size_t>(r)] ? 1.0 : 0.0));
        }
    });
}

}  // namespace mde::ad::ops

namespace mde {

std::vector<ColumnSource> column_sources(const TokenAlignment& alignment) {
    alignment.validate();
    std::vector<ColumnSource> sources(alignment.tgt_ids.size());
    for (const auto& [src, tgt] : alignment.shared)
        sources[static_cast<std::size_t>(tgt)] = {ColumnSource::Branch::reconstruction, src};
    for (int t : alignment.new_tokens)
        sources[static_cast<std::size_t>(t)] = {ColumnSource::Branch::editing, t};
    return sources;
}

}  // namespace mde
