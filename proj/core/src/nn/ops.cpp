#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "glamap/nn/autodiff.hpp"

namespace glamap::nn::op {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using MapC = Eigen::Map<const RowMat>;

Var make(Tensor value, const std::vector<Var>& parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool rg = false;
    for (const auto& p : parents) {
        n->parents.push_back(p.node());
        rg = rg || p.node()->requires_grad;
    }
    n->requires_grad = rg;
    if (rg) n->backward_fn = std::move(fn);
    return Var(std::move(n));
}

void check_same_shape(const Var& a, const Var& b, const char* opname) {
    if (!a.val().same_shape(b.val()))
        throw std::invalid_argument(std::string(opname) + ": shape mismatch " +
                                    a.val().shape_str() + " vs " + b.val().shape_str());
}

// im2col for (C,H,W) with kernel (kh,kw), stride s, zero pad p.
// Output is (C*kh*kw) x (Ho*Wo), row-major.
Tensor im2col(const Tensor& x, int kh, int kw, int s, int p, int ho, int wo) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor m({c * kh * kw, ho * wo});
    double* md = m.data();
    const double* xd = x.data();
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < kh; ++i)
            for (int j = 0; j < kw; ++j) {
                const int row = (ci * kh + i) * kw + j;
                double* mrow = md + static_cast<int64_t>(row) * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * s + i - p;
                    if (iy < 0 || iy >= h) continue;
                    const double* xrow = xd + (static_cast<int64_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * s + j - p;
                        if (ix < 0 || ix >= w) continue;
                        mrow[oy * wo + ox] = xrow[ix];
                    }
                }
            }
    return m;
}

// Transpose of im2col: scatter-add (C*kh*kw)x(Ho*Wo) columns back onto (C,H,W).
void col2im_add(const Tensor& cols, int kh, int kw, int s, int p, int ho, int wo, Tensor& x) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const double* cd = cols.data();
    double* xd = x.data();
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < kh; ++i)
            for (int j = 0; j < kw; ++j) {
                const int row = (ci * kh + i) * kw + j;
                const double* crow = cd + static_cast<int64_t>(row) * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * s + i - p;
                    if (iy < 0 || iy >= h) continue;
                    double* xrow = xd + (static_cast<int64_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * s + j - p;
                        if (ix < 0 || ix >= w) continue;
                        xrow[ix] += crow[oy * wo + ox];
                    }
                }
            }
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor y = a.val().clone();
    y.add_inplace(b.val());
    return make(std::move(y), {a, b}, [](Node& n) {
        for (auto& p : n.parents)
            if (p->requires_grad) p->accumulate(n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor y(a.val().shape());
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = a.val()[i] - b.val()[i];
    return make(std::move(y), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->requires_grad) {
            Tensor g(n.grad.shape());
            for (int64_t i = 0; i < g.numel(); ++i) g[i] = -n.grad[i];
            n.parents[1]->accumulate(g);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor y(a.val().shape());
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = a.val()[i] * b.val()[i];
    return make(std::move(y), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            Tensor g(n.grad.shape());
            for (int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * bv[i];
            n.parents[0]->accumulate(g);
        }
        if (n.parents[1]->requires_grad) {
            Tensor g(n.grad.shape());
            for (int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * av[i];
            n.parents[1]->accumulate(g);
        }
    });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var add_scalar(const Var& a, double s) {
    Tensor y(a.val().shape());
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = a.val()[i] + s;
    return make(std::move(y), {a}, [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
    });
}

Var mul_scalar(const Var& a, double s) {
    Tensor y(a.val().shape());
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = a.val()[i] * s;
    return make(std::move(y), {a}, [s](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor g(n.grad.shape());
        for (int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * s;
        n.parents[0]->accumulate(g);
    });
}

Var log(const Var& a) {
    Tensor y(a.val().shape());
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::log(a.val()[i]);
    return make(std::move(y), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& av = n.parents[0]->value;
        Tensor g(n.grad.shape());
        for (int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] / av[i];
        n.parents[0]->accumulate(g);
    });
}

Var pow_const(const Var& a, double p) {
    Tensor y(a.val().shape());
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::pow(a.val()[i], p);
    return make(std::move(y), {a}, [p](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& av = n.parents[0]->value;
        Tensor g(n.grad.shape());
        for (int64_t i = 0; i < g.numel(); ++i)
            g[i] = n.grad[i] * p * std::pow(av[i], p - 1.0);
        n.parents[0]->accumulate(g);
    });
}

Var clamp_min(const Var& a, double lo) {
    Tensor y(a.val().shape());
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::max(a.val()[i], lo);
    return make(std::move(y), {a}, [lo](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& av = n.parents[0]->value;
        Tensor g(n.grad.shape());
        for (int64_t i = 0; i < g.numel(); ++i) g[i] = av[i] > lo ? n.grad[i] : 0.0;
        n.parents[0]->accumulate(g);
    });
}

Var gelu(const Var& a) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    Tensor y(a.val().shape());
    for (int64_t i = 0; i < y.numel(); ++i) {
        const double x = a.val()[i];
        y[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    return make(std::move(y), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const Tensor& av = n.parents[0]->value;
        Tensor g(n.grad.shape());
        for (int64_t i = 0; i < g.numel(); ++i) {
            const double x = av[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            g[i] = n.grad[i] * (cdf + x * pdf);
        }
        n.parents[0]->accumulate(g);
    });
}

Var sigmoid(const Var& a) {
    Tensor y(a.val().shape());
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = 1.0 / (1.0 + std::exp(-a.val()[i]));
    Tensor ycopy = y;  // shared storage; values are what backward needs
    return make(std::move(y), {a}, [ycopy](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor g(n.grad.shape());
        for (int64_t i = 0; i < g.numel(); ++i)
            g[i] = n.grad[i] * ycopy[i] * (1.0 - ycopy[i]);
        n.parents[0]->accumulate(g);
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Var sum_all(const Var& a) {
    Tensor y = Tensor::scalar(a.val().sum());
    return make(std::move(y), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor g(n.parents[0]->value.shape(), n.grad[0]);
        n.parents[0]->accumulate(g);
    });
}

Var mean_all(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a.val().numel());
    Tensor y = Tensor::scalar(a.val().sum() * inv);
    return make(std::move(y), {a}, [inv](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor g(n.parents[0]->value.shape(), n.grad[0] * inv);
        n.parents[0]->accumulate(g);
    });
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Var reshape(const Var& a, Shape shape) {
    Tensor y = a.val().reshaped(std::move(shape));
    return make(std::move(y), {a}, [](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        n.parents[0]->accumulate(n.grad.reshaped(n.parents[0]->value.shape()));
    });
}

namespace {
void permute_into(const Tensor& src, Tensor& dst, const std::vector<int>& axes) {
    const int nd = src.ndim();
    std::vector<int64_t> sstride(nd, 1), dstride(nd, 1);
    for (int i = nd - 2; i >= 0; --i) sstride[i] = sstride[i + 1] * src.dim(i + 1);
    for (int i = nd - 2; i >= 0; --i) dstride[i] = dstride[i + 1] * dst.dim(i + 1);
    std::vector<int> idx(nd, 0);
    const int64_t n = src.numel();
    for (int64_t flat = 0; flat < n; ++flat) {
        int64_t doff = 0;
        for (int k = 0; k < nd; ++k) doff += static_cast<int64_t>(idx[axes[k]]) * dstride[k];
        dst[doff] = src[flat];
        for (int k = nd - 1; k >= 0; --k) {
            if (++idx[k] < src.dim(k)) break;
            idx[k] = 0;
        }
    }
}
}  // namespace

Var permute(const Var& a, const std::vector<int>& axes) {
    const int nd = a.val().ndim();
    if (static_cast<int>(axes.size()) != nd) throw std::invalid_argument("permute: bad axes");
    Shape oshape(nd);
    for (int k = 0; k < nd; ++k) oshape[k] = a.val().dim(axes[k]);
    Tensor y(oshape);
    permute_into(a.val(), y, axes);
    return make(std::move(y), {a}, [axes](Node& n) {
        if (!n.parents[0]->requires_grad) return;
        const int nd = n.grad.ndim();
        std::vector<int> inv(nd);
        for (int k = 0; k < nd; ++k) inv[axes[k]] = k;
        Tensor g(n.parents[0]->value.shape());
        permute_into(n.grad, g, inv);
        n.parents[0]->accumulate(g);
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: empty input");
    const int h = xs[0].val().dim(1), w = xs[0].val().dim(2);
    int ctotal = 0;
    for (const auto& x : xs) {
        if (x.val().ndim() != 3 || x.val().dim(1) != h || x.val().dim(2) != w)
            throw std::invalid_argument("concat_channels: spatial mismatch");
        ctotal += x.val().dim(0);
    }
    Tensor y({ctotal, h, w});
    int64_t off = 0;
    for (const auto& x : xs) {
        std::copy(x.val().data(), x.val().data() + x.val().numel(), y.data() + off);
        off += x.val().numel();
    }
    return make(std::move(y), xs, [](Node& n) {
        int64_t off = 0;
        for (auto& p : n.parents) {
            const int64_t cnt = p->value.numel();
            if (p->requires_grad) {
                Tensor g(p->value.shape());
                std::copy(n.grad.data() + off, n.grad.data() + off + cnt, g.data());
                p->accumulate(g);
            }
            off += cnt;
        }
    });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    const int m = a.val().dim(0), k = a.val().dim(1);
    const int k2 = b.val().dim(0), n = b.val().dim(1);
    if (k != k2) throw std::invalid_argument("matmul: inner dimension mismatch");
    Tensor y({m, n});
    MapM(y.data(), m, n) = MapC(a.val().data(), m, k) * MapC(b.val().data(), k, n);
    return make(std::move(y), {a, b}, [m, k, n](Node& nd) {
        MapC g(nd.grad.data(), m, n);
        if (nd.parents[0]->requires_grad) {
            MapC bv(nd.parents[1]->value.data(), k, n);
            MapM(nd.parents[0]->grad_ref().data(), m, k) += g * bv.transpose();
        }
        if (nd.parents[1]->requires_grad) {
            MapC av(nd.parents[0]->value.data(), m, k);
            MapM(nd.parents[1]->grad_ref().data(), k, n) += av.transpose() * g;
        }
    });
}

Var bmm(const Var& a, const Var& b) {
    const int bs = a.val().dim(0), m = a.val().dim(1), k = a.val().dim(2);
    const int n = b.val().dim(2);
    if (b.val().dim(0) != bs || b.val().dim(1) != k)
        throw std::invalid_argument("bmm: shape mismatch");
    Tensor y({bs, m, n});
    for (int i = 0; i < bs; ++i)
        MapM(y.data() + static_cast<int64_t>(i) * m * n, m, n) =
            MapC(a.val().data() + static_cast<int64_t>(i) * m * k, m, k) *
            MapC(b.val().data() + static_cast<int64_t>(i) * k * n, k, n);
    return make(std::move(y), {a, b}, [bs, m, k, n](Node& nd) {
        for (int i = 0; i < bs; ++i) {
            MapC g(nd.grad.data() + static_cast<int64_t>(i) * m * n, m, n);
            if (nd.parents[0]->requires_grad) {
                MapC bv(nd.parents[1]->value.data() + static_cast<int64_t>(i) * k * n, k, n);
                MapM(nd.parents[0]->grad_ref().data() + static_cast<int64_t>(i) * m * k, m, k) +=
                    g * bv.transpose();
            }
            if (nd.parents[1]->requires_grad) {
                MapC av(nd.parents[0]->value.data() + static_cast<int64_t>(i) * m * k, m, k);
                MapM(nd.parents[1]->grad_ref().data() + static_cast<int64_t>(i) * k * n, k, n) +=
                    av.transpose() * g;
            }
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    const int n = x.val().dim(0), d = x.val().dim(1);
    const int m = w.val().dim(1);
    if (w.val().dim(0) != d || b.val().dim(0) != m)
        throw std::invalid_argument("linear: shape mismatch");
    Tensor y({n, m});
    MapM ym(y.data(), n, m);
    ym = MapC(x.val().data(), n, d) * MapC(w.val().data(), d, m);
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.val().data(), m);
    return make(std::move(y), {x, w, b}, [n, d, m](Node& nd) {
        MapC g(nd.grad.data(), n, m);
        if (nd.parents[0]->requires_grad) {
            MapC wv(nd.parents[1]->value.data(), d, m);
            MapM(nd.parents[0]->grad_ref().data(), n, d) += g * wv.transpose();
        }
        if (nd.parents[1]->requires_grad) {
            MapC xv(nd.parents[0]->value.data(), n, d);
            MapM(nd.parents[1]->grad_ref().data(), d, m) += xv.transpose() * g;
        }
        if (nd.parents[2]->requires_grad) {
            Eigen::Map<Eigen::RowVectorXd>(nd.parents[2]->grad_ref().data(), m) +=
                g.colwise().sum();
        }
    });
}

// ---------------------------------------------------------------------------
// image ops
// ---------------------------------------------------------------------------

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const int c = x.val().dim(0), h = x.val().dim(1), wd = x.val().dim(2);
    const int o = w.val().dim(0), kc = w.val().dim(1), kh = w.val().dim(2), kw = w.val().dim(3);
    if (kc != c) throw std::invalid_argument("conv2d: channel mismatch");
    if (b.val().dim(0) != o) throw std::invalid_argument("conv2d: bias mismatch");
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wd + 2 * pad - kw) / stride + 1;
    if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: empty output");

    Tensor cols = im2col(x.val(), kh, kw, stride, pad, ho, wo);
    Tensor y({o, ho, wo});
    MapM ym(y.data(), o, ho * wo);
    ym = MapC(w.val().data(), o, c * kh * kw) * MapC(cols.data(), c * kh * kw, ho * wo);
    for (int oc = 0; oc < o; ++oc) ym.row(oc).array() += b.val()[oc];

    return make(std::move(y), {x, w, b}, [stride, pad, kh, kw, ho, wo](Node& nd) {
        const Tensor& xv = nd.parents[0]->value;
        const Tensor& wv = nd.parents[1]->value;
        const int c = xv.dim(0), o = wv.dim(0);
        MapC g(nd.grad.data(), o, ho * wo);
        if (nd.parents[1]->requires_grad || nd.parents[0]->requires_grad) {
            Tensor cols = im2col(xv, kh, kw, stride, pad, ho, wo);
            if (nd.parents[1]->requires_grad) {
                MapM(nd.parents[1]->grad_ref().data(), o, c * kh * kw) +=
                    g * MapC(cols.data(), c * kh * kw, ho * wo).transpose();
            }
            if (nd.parents[0]->requires_grad) {
                Tensor dcols({c * kh * kw, ho * wo});
                MapM(dcols.data(), c * kh * kw, ho * wo) =
                    MapC(wv.data(), o, c * kh * kw).transpose() * g;
                col2im_add(dcols, kh, kw, stride, pad, ho, wo, nd.parents[0]->grad_ref());
            }
        }
        if (nd.parents[2]->requires_grad) {
            Tensor& db = nd.parents[2]->grad_ref();
            for (int oc = 0; oc < o; ++oc) db[oc] += g.row(oc).sum();
        }
    });
}

Var upsample_bilinear(const Var& x, int factor) {
    if (factor < 1) throw std::invalid_argument("upsample_bilinear: factor must be >= 1");
    const int c = x.val().dim(0), h = x.val().dim(1), w = x.val().dim(2);
    const int oh = h * factor, ow = w * factor;
    Tensor y({c, oh, ow});
    // Half-pixel centers mapping, weights recomputed identically in backward.
    auto coords = [factor](int out, int limit, int& i0, int& i1, double& f) {
        double src = (out + 0.5) / factor - 0.5;
        if (src < 0) src = 0;
        if (src > limit - 1) src = limit - 1;
        i0 = static_cast<int>(std::floor(src));
        i1 = std::min(i0 + 1, limit - 1);
        f = src - i0;
    };
    for (int ci = 0; ci < c; ++ci)
        for (int oy = 0; oy < oh; ++oy) {
            int y0, y1;
            double fy;
            coords(oy, h, y0, y1, fy);
            for (int ox = 0; ox < ow; ++ox) {
                int x0, x1;
                double fx;
                coords(ox, w, x0, x1, fx);
                const double v00 = x.val().at3(ci, y0, x0), v01 = x.val().at3(ci, y0, x1);
                const double v10 = x.val().at3(ci, y1, x0), v11 = x.val().at3(ci, y1, x1);
                y.at3(ci, oy, ox) = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                    fy * ((1 - fx) * v10 + fx * v11);
            }
        }
    return make(std::move(y), {x}, [factor, c, h, w, oh, ow](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        Tensor& gx = nd.parents[0]->grad_ref();
        auto coords = [factor](int out, int limit, int& i0, int& i1, double& f) {
            double src = (out + 0.5) / factor - 0.5;
            if (src < 0) src = 0;
            if (src > limit - 1) src = limit - 1;
            i0 = static_cast<int>(std::floor(src));
            i1 = std::min(i0 + 1, limit - 1);
            f = src - i0;
        };
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < oh; ++oy) {
                int y0, y1;
                double fy;
                coords(oy, h, y0, y1, fy);
                for (int ox = 0; ox < ow; ++ox) {
                    int x0, x1;
                    double fx;
                    coords(ox, w, x0, x1, fx);
                    const double g = nd.grad.at3(ci, oy, ox);
                    gx.at3(ci, y0, x0) += g * (1 - fy) * (1 - fx);
                    gx.at3(ci, y0, x1) += g * (1 - fy) * fx;
                    gx.at3(ci, y1, x0) += g * fy * (1 - fx);
                    gx.at3(ci, y1, x1) += g * fy * fx;
                }
            }
    });
}

Var global_avg_pool(const Var& x) {
    const int c = x.val().dim(0), h = x.val().dim(1), w = x.val().dim(2);
    const double inv = 1.0 / (static_cast<double>(h) * w);
    Tensor y({c});
    for (int ci = 0; ci < c; ++ci) {
        double s = 0;
        const double* p = x.val().data() + static_cast<int64_t>(ci) * h * w;
        for (int i = 0; i < h * w; ++i) s += p[i];
        y[ci] = s * inv;
    }
    return make(std::move(y), {x}, [c, h, w, inv](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        Tensor& gx = nd.parents[0]->grad_ref();
        for (int ci = 0; ci < c; ++ci) {
            const double g = nd.grad[ci] * inv;
            double* p = gx.data() + static_cast<int64_t>(ci) * h * w;
            for (int i = 0; i < h * w; ++i) p[i] += g;
        }
    });
}

Var scale_channels(const Var& x, const Var& s) {
    const int c = x.val().dim(0), h = x.val().dim(1), w = x.val().dim(2);
    if (s.val().dim(0) != c) throw std::invalid_argument("scale_channels: channel mismatch");
    Tensor y({c, h, w});
    for (int ci = 0; ci < c; ++ci) {
        const double sc = s.val()[ci];
        const double* xp = x.val().data() + static_cast<int64_t>(ci) * h * w;
        double* yp = y.data() + static_cast<int64_t>(ci) * h * w;
        for (int i = 0; i < h * w; ++i) yp[i] = xp[i] * sc;
    }
    return make(std::move(y), {x, s}, [c, h, w](Node& nd) {
        const Tensor& xv = nd.parents[0]->value;
        const Tensor& sv = nd.parents[1]->value;
        if (nd.parents[0]->requires_grad) {
            Tensor& gx = nd.parents[0]->grad_ref();
            for (int ci = 0; ci < c; ++ci) {
                const double sc = sv[ci];
                const int64_t off = static_cast<int64_t>(ci) * h * w;
                for (int i = 0; i < h * w; ++i) gx[off + i] += nd.grad[off + i] * sc;
            }
        }
        if (nd.parents[1]->requires_grad) {
            Tensor& gs = nd.parents[1]->grad_ref();
            for (int ci = 0; ci < c; ++ci) {
                const int64_t off = static_cast<int64_t>(ci) * h * w;
                double acc = 0;
                for (int i = 0; i < h * w; ++i) acc += nd.grad[off + i] * xv[off + i];
                gs[ci] += acc;
            }
        }
    });
}

Var add_channel_bias(const Var& x, const Var& b) {
    const int c = x.val().dim(0), h = x.val().dim(1), w = x.val().dim(2);
    if (b.val().dim(0) != c) throw std::invalid_argument("add_channel_bias: channel mismatch");
    Tensor y({c, h, w});
    for (int ci = 0; ci < c; ++ci) {
        const double bc = b.val()[ci];
        const double* xp = x.val().data() + static_cast<int64_t>(ci) * h * w;
        double* yp = y.data() + static_cast<int64_t>(ci) * h * w;
        for (int i = 0; i < h * w; ++i) yp[i] = xp[i] + bc;
    }
    return make(std::move(y), {x, b}, [c, h, w](Node& nd) {
        if (nd.parents[0]->requires_grad) nd.parents[0]->accumulate(nd.grad);
        if (nd.parents[1]->requires_grad) {
            Tensor& gb = nd.parents[1]->grad_ref();
            for (int ci = 0; ci < c; ++ci) {
                const int64_t off = static_cast<int64_t>(ci) * h * w;
                double acc = 0;
                for (int i = 0; i < h * w; ++i) acc += nd.grad[off + i];
                gb[ci] += acc;
            }
        }
    });
}

Var patchify(const Var& x, int patch) {
    const int c = x.val().dim(0), h = x.val().dim(1), w = x.val().dim(2);
    if (h % patch != 0 || w % patch != 0)
        throw std::invalid_argument("patchify: spatial size not divisible by patch");
    const int th = h / patch, tw = w / patch, t = th * tw;
    const int d = c * patch * patch;
    Tensor y({t, d});
    for (int ty = 0; ty < th; ++ty)
        for (int tx = 0; tx < tw; ++tx) {
            const int ti = ty * tw + tx;
            for (int ci = 0; ci < c; ++ci)
                for (int i = 0; i < patch; ++i)
                    for (int j = 0; j < patch; ++j)
                        y.at2(ti, (ci * patch + i) * patch + j) =
                            x.val().at3(ci, ty * patch + i, tx * patch + j);
        }
    return make(std::move(y), {x}, [patch, c, th, tw](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        Tensor& gx = nd.parents[0]->grad_ref();
        for (int ty = 0; ty < th; ++ty)
            for (int tx = 0; tx < tw; ++tx) {
                const int ti = ty * tw + tx;
                for (int ci = 0; ci < c; ++ci)
                    for (int i = 0; i < patch; ++i)
                        for (int j = 0; j < patch; ++j)
                            gx.at3(ci, ty * patch + i, tx * patch + j) +=
                                nd.grad.at2(ti, (ci * patch + i) * patch + j);
            }
    });
}

Var softmax_dim0(const Var& x) {
    const int c = x.val().dim(0), h = x.val().dim(1), w = x.val().dim(2);
    Tensor y({c, h, w});
    const int64_t hw = static_cast<int64_t>(h) * w;
    for (int64_t px = 0; px < hw; ++px) {
        double m = -1e300;
        for (int ci = 0; ci < c; ++ci) m = std::max(m, x.val()[ci * hw + px]);
        double z = 0;
        for (int ci = 0; ci < c; ++ci) {
            const double e = std::exp(x.val()[ci * hw + px] - m);
            y[ci * hw + px] = e;
            z += e;
        }
        for (int ci = 0; ci < c; ++ci) y[ci * hw + px] /= z;
    }
    Tensor ycopy = y;
    return make(std::move(y), {x}, [c, hw, ycopy](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        Tensor g(nd.grad.shape());
        for (int64_t px = 0; px < hw; ++px) {
            double dot = 0;
            for (int ci = 0; ci < c; ++ci) dot += nd.grad[ci * hw + px] * ycopy[ci * hw + px];
            for (int ci = 0; ci < c; ++ci)
                g[ci * hw + px] = ycopy[ci * hw + px] * (nd.grad[ci * hw + px] - dot);
        }
        nd.parents[0]->accumulate(g);
    });
}

Var softmax_lastdim(const Var& x) {
    const int nd_ = x.val().ndim();
    const int n = x.val().dim(nd_ - 1);
    const int64_t rows = x.val().numel() / n;
    Tensor y(x.val().shape());
    for (int64_t r = 0; r < rows; ++r) {
        const double* xi = x.val().data() + r * n;
        double* yi = y.data() + r * n;
        double m = -1e300;
        for (int i = 0; i < n; ++i) m = std::max(m, xi[i]);
        double z = 0;
        for (int i = 0; i < n; ++i) {
            yi[i] = std::exp(xi[i] - m);
            z += yi[i];
        }
        for (int i = 0; i < n; ++i) yi[i] /= z;
    }
    Tensor ycopy = y;
    return make(std::move(y), {x}, [rows, n, ycopy](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        Tensor g(nd.grad.shape());
        for (int64_t r = 0; r < rows; ++r) {
            const double* gi = nd.grad.data() + r * n;
            const double* yi = ycopy.data() + r * n;
            double dot = 0;
            for (int i = 0; i < n; ++i) dot += gi[i] * yi[i];
            double* go = g.data() + r * n;
            for (int i = 0; i < n; ++i) go[i] = yi[i] * (gi[i] - dot);
        }
        nd.parents[0]->accumulate(g);
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const int nd_ = x.val().ndim();
    const int d = x.val().dim(nd_ - 1);
    if (gamma.val().dim(0) != d || beta.val().dim(0) != d)
        throw std::invalid_argument("layer_norm: parameter size mismatch");
    const int64_t rows = x.val().numel() / d;
    Tensor y(x.val().shape());
    Tensor xhat(x.val().shape());
    Tensor inv_std({static_cast<int>(rows)});
    for (int64_t r = 0; r < rows; ++r) {
        const double* xi = x.val().data() + r * d;
        double mu = 0;
        for (int i = 0; i < d; ++i) mu += xi[i];
        mu /= d;
        double var = 0;
        for (int i = 0; i < d; ++i) var += (xi[i] - mu) * (xi[i] - mu);
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        double* xh = xhat.data() + r * d;
        double* yi = y.data() + r * d;
        for (int i = 0; i < d; ++i) {
            xh[i] = (xi[i] - mu) * is;
            yi[i] = gamma.val()[i] * xh[i] + beta.val()[i];
        }
    }
    return make(std::move(y), {x, gamma, beta}, [rows, d, xhat, inv_std](Node& nd) {
        const Tensor& gv = nd.parents[1]->value;
        if (nd.parents[0]->requires_grad) {
            Tensor gx(nd.parents[0]->value.shape());
            for (int64_t r = 0; r < rows; ++r) {
                const double* gi = nd.grad.data() + r * d;
                const double* xh = xhat.data() + r * d;
                const double is = inv_std[r];
                double sum_dxh = 0, sum_dxh_xh = 0;
                for (int i = 0; i < d; ++i) {
                    const double dxh = gi[i] * gv[i];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh[i];
                }
                double* go = gx.data() + r * d;
                for (int i = 0; i < d; ++i) {
                    const double dxh = gi[i] * gv[i];
                    go[i] = is * (dxh - sum_dxh / d - xh[i] * sum_dxh_xh / d);
                }
            }
            nd.parents[0]->accumulate(gx);
        }
        if (nd.parents[1]->requires_grad) {
            Tensor& gg = nd.parents[1]->grad_ref();
            for (int64_t r = 0; r < rows; ++r)
                for (int i = 0; i < d; ++i)
                    gg[i] += nd.grad[r * d + i] * xhat[r * d + i];
        }
        if (nd.parents[2]->requires_grad) {
            Tensor& gb = nd.parents[2]->grad_ref();
            for (int64_t r = 0; r < rows; ++r)
                for (int i = 0; i < d; ++i) gb[i] += nd.grad[r * d + i];
        }
    });
}

Var dropout(const Var& x, double rate, Rng& rng) {
    if (rate <= 0.0) return x;
    if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
    const double keep = 1.0 - rate;
    Tensor mask(x.val().shape());
    for (int64_t i = 0; i < mask.numel(); ++i)
        mask[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    Tensor y(x.val().shape());
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = x.val()[i] * mask[i];
    return make(std::move(y), {x}, [mask](Node& nd) {
        if (!nd.parents[0]->requires_grad) return;
        Tensor g(nd.grad.shape());
        for (int64_t i = 0; i < g.numel(); ++i) g[i] = nd.grad[i] * mask[i];
        nd.parents[0]->accumulate(g);
    });
}

}  // namespace glamap::nn::op
