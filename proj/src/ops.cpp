#include "bird/ops.hpp"

#include <algorithm>
#include <cmath>

#include "bird/error.hpp"
#include "bird/matmul.hpp"

namespace bird {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

// Bilinear weights/corners for one fractional position. Out-of-grid corners
// read as zero (zero padding); scatter skips them.
struct BilinPoint {
    int y0, x0;
    double wy1, wx1;  // wy0 = 1-wy1, wx0 = 1-wx1
};

inline BilinPoint bilin_point(double sy, double sx) {
    const double fy = std::floor(sy);
    const double fx = std::floor(sx);
    return {static_cast<int>(fy), static_cast<int>(fx), sy - fy, sx - fx};
}

inline double pix(const double* plane, int h, int w, int y, int x) {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return plane[static_cast<size_t>(y) * w + x];
}

inline double bilin_value(const double* plane, int h, int w, const BilinPoint& b) {
    const double wy0 = 1.0 - b.wy1, wx0 = 1.0 - b.wx1;
    return wy0 * wx0 * pix(plane, h, w, b.y0, b.x0) +
           wy0 * b.wx1 * pix(plane, h, w, b.y0, b.x0 + 1) +
           b.wy1 * wx0 * pix(plane, h, w, b.y0 + 1, b.x0) +
           b.wy1 * b.wx1 * pix(plane, h, w, b.y0 + 1, b.x0 + 1);
}

// d(value)/d(sy), d(value)/d(sx)
inline void bilin_pos_grad(const double* plane, int h, int w, const BilinPoint& b,
                           double* dsy, double* dsx) {
    const double p00 = pix(plane, h, w, b.y0, b.x0);
    const double p01 = pix(plane, h, w, b.y0, b.x0 + 1);
    const double p10 = pix(plane, h, w, b.y0 + 1, b.x0);
    const double p11 = pix(plane, h, w, b.y0 + 1, b.x0 + 1);
    *dsy = (1.0 - b.wx1) * (p10 - p00) + b.wx1 * (p11 - p01);
    *dsx = (1.0 - b.wy1) * (p01 - p00) + b.wy1 * (p11 - p10);
}

inline void bilin_scatter(double* plane, int h, int w, const BilinPoint& b, double g) {
    const double wy0 = 1.0 - b.wy1, wx0 = 1.0 - b.wx1;
    auto addp = [&](int y, int x, double v) {
        if (y < 0 || y >= h || x < 0 || x >= w) return;
        plane[static_cast<size_t>(y) * w + x] += v;
    };
    addp(b.y0, b.x0, g * wy0 * wx0);
    addp(b.y0, b.x0 + 1, g * wy0 * b.wx1);
    addp(b.y0 + 1, b.x0, g * b.wy1 * wx0);
    addp(b.y0 + 1, b.x0 + 1, g * b.wy1 * b.wx1);
}

// im2col for zero-padded convolution: col is (cin*kh*kw) x (oh*ow).
void im2col(const Tensor& x, int kh, int kw, int stride, int pad, int oh, int ow,
            std::vector<double>& col) {
    const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    col.assign(static_cast<size_t>(cin) * kh * kw * oh * ow, 0.0);
    size_t row = 0;
    for (int ci = 0; ci < cin; ++ci) {
        const double* plane = x.v.data() + static_cast<size_t>(ci) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++row) {
                double* dst = col.data() + row * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    const double* src = plane + static_cast<size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) dst[static_cast<size_t>(oy) * ow + ox] = src[ix];
                    }
                }
            }
        }
    }
}

void col2im_acc(const std::vector<double>& col, int cin, int h, int w, int kh, int kw,
                int stride, int pad, int oh, int ow, Tensor& dx) {
    size_t row = 0;
    for (int ci = 0; ci < cin; ++ci) {
        double* plane = dx.v.data() + static_cast<size_t>(ci) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx, ++row) {
                const double* src = col.data() + row * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    double* dst = plane + static_cast<size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) dst[ix] += src[static_cast<size_t>(oy) * ow + ox];
                    }
                }
            }
        }
    }
}

// Builds the sampled-and-modulated column matrix S (cin*k*k) x (h*w) for the
// deformable convolution, so forward/backward reduce to plain GEMMs.
void deform_cols(const Tensor& x, const Tensor& off, const Tensor& mask, int groups, int k,
                 std::vector<double>& S) {
    const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int cg = cin / groups;
    const int pad = k / 2;
    const size_t P = static_cast<size_t>(h) * w;
    S.assign(static_cast<size_t>(cin) * k * k * P, 0.0);
    for (int ci = 0; ci < cin; ++ci) {
        const int g = ci / cg;
        const double* plane = x.v.data() + static_cast<size_t>(ci) * P;
        for (int kidx = 0; kidx < k * k; ++kidx) {
            const int ky = kidx / k, kx = kidx % k;
            const double* offy = off.v.data() + (static_cast<size_t>(g) * k * k + kidx) * 2 * P;
            const double* offx = offy + P;
            const double* m = mask.v.data() + (static_cast<size_t>(g) * k * k + kidx) * P;
            double* dst = S.data() + (static_cast<size_t>(ci) * k * k + kidx) * P;
            for (int py = 0; py < h; ++py) {
                for (int px = 0; px < w; ++px) {
                    const size_t p = static_cast<size_t>(py) * w + px;
                    const BilinPoint b =
                        bilin_point(py + ky - pad + offy[p], px + kx - pad + offx[p]);
                    dst[p] = bilin_value(plane, h, w, b) * m[p];
                }
            }
        }
    }
}

}  // namespace

std::vector<double> bilinear_sample(const Tensor& feature, double x, double y) {
    const int c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
    const BilinPoint b = bilin_point(y, x);
    std::vector<double> out(static_cast<size_t>(c));
    for (int ci = 0; ci < c; ++ci)
        out[static_cast<size_t>(ci)] =
            bilin_value(feature.v.data() + static_cast<size_t>(ci) * h * w, h, w, b);
    return out;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int pad) {
    require(x.rank() == 3 && w.rank() == 4, "conv2d: bad ranks");
    require(x.dim(0) == w.dim(1), "conv2d: input channels " + std::to_string(x.dim(0)) +
                                      " do not match weight " + std::to_string(w.dim(1)));
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int oh = (x.dim(1) + 2 * pad - kh) / stride + 1;
    const int ow = (x.dim(2) + 2 * pad - kw) / stride + 1;
    require(oh > 0 && ow > 0, "conv2d: output would be empty");
    const int K = x.dim(0) * kh * kw;
    const size_t P = static_cast<size_t>(oh) * ow;

    std::vector<double> col;
    im2col(x, kh, kw, stride, pad, oh, ow, col);
    Tensor y({cout, oh, ow});
    if (b) {
        require(b->rank() == 1 && b->dim(0) == cout, "conv2d: bad bias shape");
        for (int co = 0; co < cout; ++co)
            std::fill_n(y.v.begin() + static_cast<long>(co * P), P, b->v[static_cast<size_t>(co)]);
    }
    gemm_acc(w.v.data(), col.data(), y.v.data(), cout, K, static_cast<int>(P));
    return y;
}

namespace ops {

NodeId relu(Graph& g, NodeId x) {
    Tensor out = g.val(x);
    for (double& e : out.v) e = e > 0.0 ? e : 0.0;
    return g.make(std::move(out), {x}, [x](Graph& gg, NodeId self) {
        const Tensor& xv = gg.val(x);
        const Tensor& dout = gg.grad(self);
        Tensor& dx = gg.grad(x);
        for (size_t i = 0; i < dx.v.size(); ++i)
            if (xv.v[i] > 0.0) dx.v[i] += dout.v[i];
    });
}

NodeId sigmoid(Graph& g, NodeId x) {
    Tensor out = g.val(x);
    for (double& e : out.v)
        e = e >= 0.0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e));
    return g.make(std::move(out), {x}, [x](Graph& gg, NodeId self) {
        const Tensor& s = gg.val(self);
        const Tensor& dout = gg.grad(self);
        Tensor& dx = gg.grad(x);
        for (size_t i = 0; i < dx.v.size(); ++i)
            dx.v[i] += dout.v[i] * s.v[i] * (1.0 - s.v[i]);
    });
}

NodeId add(Graph& g, NodeId a, NodeId b) {
    require(g.val(a).same_shape(g.val(b)), "add: shape mismatch " + g.val(a).shape_str() +
                                               " vs " + g.val(b).shape_str());
    Tensor out = g.val(a);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += g.val(b).v[i];
    return g.make(std::move(out), {a, b}, [a, b](Graph& gg, NodeId self) {
        const Tensor& dout = gg.grad(self);
        Tensor& da = gg.grad(a);
        Tensor& db = gg.grad(b);
        for (size_t i = 0; i < dout.v.size(); ++i) {
            da.v[i] += dout.v[i];
            db.v[i] += dout.v[i];
        }
    });
}

NodeId scale_add(Graph& g, NodeId alpha, NodeId x, NodeId beta, NodeId y) {
    require(g.val(alpha).numel() == 1 && g.val(beta).numel() == 1,
            "scale_add: alpha/beta must be scalars");
    require(g.val(x).same_shape(g.val(y)), "scale_add: shape mismatch");
    const double a = g.val(alpha).v[0], b = g.val(beta).v[0];
    Tensor out = g.val(x);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a * out.v[i] + b * g.val(y).v[i];
    return g.make(std::move(out), {alpha, x, beta, y},
                  [alpha, x, beta, y, a, b](Graph& gg, NodeId self) {
                      const Tensor& dout = gg.grad(self);
                      const Tensor& xv = gg.val(x);
                      const Tensor& yv = gg.val(y);
                      Tensor& dx = gg.grad(x);
                      Tensor& dy = gg.grad(y);
                      double da = 0.0, db = 0.0;
                      for (size_t i = 0; i < dout.v.size(); ++i) {
                          dx.v[i] += a * dout.v[i];
                          dy.v[i] += b * dout.v[i];
                          da += dout.v[i] * xv.v[i];
                          db += dout.v[i] * yv.v[i];
                      }
                      gg.grad(alpha).v[0] += da;
                      gg.grad(beta).v[0] += db;
                  });
}

NodeId concat_channels(Graph& g, const std::vector<NodeId>& xs) {
    require(!xs.empty(), "concat_channels: empty input list");
    const int h = g.val(xs[0]).dim(1), w = g.val(xs[0]).dim(2);
    int ctot = 0;
    for (NodeId x : xs) {
        require(g.val(x).rank() == 3 && g.val(x).dim(1) == h && g.val(x).dim(2) == w,
                "concat_channels: spatial mismatch");
        ctot += g.val(x).dim(0);
    }
    Tensor out({ctot, h, w});
    size_t pos = 0;
    for (NodeId x : xs) {
        const Tensor& xv = g.val(x);
        std::copy(xv.v.begin(), xv.v.end(), out.v.begin() + static_cast<long>(pos));
        pos += xv.v.size();
    }
    return g.make(std::move(out), xs, [xs](Graph& gg, NodeId self) {
        const Tensor& dout = gg.grad(self);
        size_t pos = 0;
        for (NodeId x : xs) {
            Tensor& dx = gg.grad(x);
            for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dout.v[pos + i];
            pos += dx.v.size();
        }
    });
}

NodeId slice_channels(Graph& g, NodeId x, int c0, int c1) {
    const Tensor& xv = g.val(x);
    require(0 <= c0 && c0 < c1 && c1 <= xv.dim(0), "slice_channels: bad range");
    const size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out({c1 - c0, xv.dim(1), xv.dim(2)});
    std::copy(xv.v.begin() + static_cast<long>(c0 * plane),
              xv.v.begin() + static_cast<long>(c1 * plane), out.v.begin());
    return g.make(std::move(out), {x}, [x, c0, plane](Graph& gg, NodeId self) {
        const Tensor& dout = gg.grad(self);
        Tensor& dx = gg.grad(x);
        const size_t base = static_cast<size_t>(c0) * plane;
        for (size_t i = 0; i < dout.v.size(); ++i) dx.v[base + i] += dout.v[i];
    });
}

NodeId global_avg_pool(Graph& g, NodeId x) {
    const Tensor& xv = g.val(x);
    const int c = xv.dim(0);
    const size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out({c});
    for (int ci = 0; ci < c; ++ci) {
        double s = 0.0;
        for (size_t i = 0; i < plane; ++i) s += xv.v[ci * plane + i];
        out.v[static_cast<size_t>(ci)] = s / static_cast<double>(plane);
    }
    return g.make(std::move(out), {x}, [x, c, plane](Graph& gg, NodeId self) {
        const Tensor& dout = gg.grad(self);
        Tensor& dx = gg.grad(x);
        for (int ci = 0; ci < c; ++ci) {
            const double gv = dout.v[static_cast<size_t>(ci)] / static_cast<double>(plane);
            for (size_t i = 0; i < plane; ++i) dx.v[ci * plane + i] += gv;
        }
    });
}

NodeId global_max_pool(Graph& g, NodeId x) {
    const Tensor& xv = g.val(x);
    const int c = xv.dim(0);
    const size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out({c});
    std::vector<size_t> argmax(static_cast<size_t>(c));
    for (int ci = 0; ci < c; ++ci) {
        size_t best = ci * plane;
        for (size_t i = 1; i < plane; ++i)
            if (xv.v[ci * plane + i] > xv.v[best]) best = ci * plane + i;
        out.v[static_cast<size_t>(ci)] = xv.v[best];
        argmax[static_cast<size_t>(ci)] = best;
    }
    return g.make(std::move(out), {x}, [x, c, argmax](Graph& gg, NodeId self) {
        const Tensor& dout = gg.grad(self);
        Tensor& dx = gg.grad(x);
        for (int ci = 0; ci < c; ++ci)
            dx.v[argmax[static_cast<size_t>(ci)]] += dout.v[static_cast<size_t>(ci)];
    });
}

NodeId channel_mean(Graph& g, NodeId x) {
    const Tensor& xv = g.val(x);
    const int c = xv.dim(0);
    const size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out({1, xv.dim(1), xv.dim(2)});
    for (size_t i = 0; i < plane; ++i) {
        double s = 0.0;
        for (int ci = 0; ci < c; ++ci) s += xv.v[ci * plane + i];
        out.v[i] = s / c;
    }
    return g.make(std::move(out), {x}, [x, c, plane](Graph& gg, NodeId self) {
        const Tensor& dout = gg.grad(self);
        Tensor& dx = gg.grad(x);
        for (size_t i = 0; i < plane; ++i) {
            const double gv = dout.v[i] / c;
            for (int ci = 0; ci < c; ++ci) dx.v[ci * plane + i] += gv;
        }
    });
}

NodeId channel_max(Graph& g, NodeId x) {
    const Tensor& xv = g.val(x);
    const int c = xv.dim(0);
    const size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out({1, xv.dim(1), xv.dim(2)});
    std::vector<int> argmax(plane, 0);
    for (size_t i = 0; i < plane; ++i) {
        int best = 0;
        for (int ci = 1; ci < c; ++ci)
            if (xv.v[ci * plane + i] > xv.v[best * plane + i]) best = ci;
        out.v[i] = xv.v[static_cast<size_t>(best) * plane + i];
        argmax[i] = best;
    }
    return g.make(std::move(out), {x}, [x, plane, argmax](Graph& gg, NodeId self) {
        const Tensor& dout = gg.grad(self);
        Tensor& dx = gg.grad(x);
        for (size_t i = 0; i < plane; ++i)
            dx.v[static_cast<size_t>(argmax[i]) * plane + i] += dout.v[i];
    });
}

NodeId mul_channels(Graph& g, NodeId x, NodeId s) {
    const Tensor& xv = g.val(x);
    const Tensor& sv = g.val(s);
    require(sv.rank() == 1 && sv.dim(0) == xv.dim(0), "mul_channels: scale shape mismatch");
    const size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out = xv;
    for (int ci = 0; ci < xv.dim(0); ++ci)
        for (size_t i = 0; i < plane; ++i) out.v[ci * plane + i] *= sv.v[static_cast<size_t>(ci)];
    return g.make(std::move(out), {x, s}, [x, s, plane](Graph& gg, NodeId self) {
        const Tensor& dout = gg.grad(self);
        const Tensor& xv = gg.val(x);
        const Tensor& sv = gg.val(s);
        Tensor& dx = gg.grad(x);
        Tensor& ds = gg.grad(s);
        for (int ci = 0; ci < xv.dim(0); ++ci) {
            double acc = 0.0;
            for (size_t i = 0; i < plane; ++i) {
                dx.v[ci * plane + i] += dout.v[ci * plane + i] * sv.v[static_cast<size_t>(ci)];
                acc += dout.v[ci * plane + i] * xv.v[ci * plane + i];
            }
            ds.v[static_cast<size_t>(ci)] += acc;
        }
    });
}

NodeId mul_spatial(Graph& g, NodeId x, NodeId s) {
    const Tensor& xv = g.val(x);
    const Tensor& sv = g.val(s);
    require(sv.rank() == 3 && sv.dim(0) == 1 && sv.dim(1) == xv.dim(1) && sv.dim(2) == xv.dim(2),
            "mul_spatial: scale shape mismatch");
    const size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out = xv;
    for (int ci = 0; ci < xv.dim(0); ++ci)
        for (size_t i = 0; i < plane; ++i) out.v[ci * plane + i] *= sv.v[i];
    return g.make(std::move(out), {x, s}, [x, s, plane](Graph& gg, NodeId self) {
        const Tensor& dout = gg.grad(self);
        const Tensor& xv = gg.val(x);
        const Tensor& sv = gg.val(s);
        Tensor& dx = gg.grad(x);
        Tensor& ds = gg.grad(s);
        for (int ci = 0; ci < xv.dim(0); ++ci)
            for (size_t i = 0; i < plane; ++i) {
                dx.v[ci * plane + i] += dout.v[ci * plane + i] * sv.v[i];
                ds.v[i] += dout.v[ci * plane + i] * xv.v[ci * plane + i];
            }
    });
}

NodeId dense(Graph& g, NodeId x, NodeId w, NodeId b) {
    const Tensor& xv = g.val(x);
    const Tensor& wv = g.val(w);
    require(xv.rank() == 1 && wv.rank() == 2 && wv.dim(1) == xv.dim(0), "dense: shape mismatch");
    const int m = wv.dim(0), n = wv.dim(1);
    require(g.val(b).rank() == 1 && g.val(b).dim(0) == m, "dense: bias shape mismatch");
    Tensor out = g.val(b);
    for (int i = 0; i < m; ++i) {
        double s = out.v[static_cast<size_t>(i)];
        for (int j = 0; j < n; ++j)
            s += wv.v[static_cast<size_t>(i) * n + j] * xv.v[static_cast<size_t>(j)];
        out.v[static_cast<size_t>(i)] = s;
    }
    return g.make(std::move(out), {x, w, b}, [x, w, b, m, n](Graph& gg, NodeId self) {
        const Tensor& dout = gg.grad(self);
        const Tensor& xv = gg.val(x);
        const Tensor& wv = gg.val(w);
        Tensor& dx = gg.grad(x);
        Tensor& dw = gg.grad(w);
        Tensor& db = gg.grad(b);
        for (int i = 0; i < m; ++i) {
            const double gi = dout.v[static_cast<size_t>(i)];
            db.v[static_cast<size_t>(i)] += gi;
            for (int j = 0; j < n; ++j) {
                dx.v[static_cast<size_t>(j)] += gi * wv.v[static_cast<size_t>(i) * n + j];
                dw.v[static_cast<size_t>(i) * n + j] += gi * xv.v[static_cast<size_t>(j)];
            }
        }
    });
}

NodeId conv2d(Graph& g, NodeId x, NodeId w, NodeId b, int stride, int pad) {
    const Tensor& xv = g.val(x);
    const Tensor& wv = g.val(w);
    Tensor y = conv2d_forward(xv, wv, b >= 0 ? &g.val(b) : nullptr, stride, pad);
    const int cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    const int oh = y.dim(1), ow = y.dim(2);
    std::vector<NodeId> parents = {x, w};
    if (b >= 0) parents.push_back(b);
    return g.make(std::move(y), std::move(parents),
                  [x, w, b, stride, pad, cout, kh, kw, oh, ow](Graph& gg, NodeId self) {
                      const Tensor& dout = gg.grad(self);
                      const Tensor& xv = gg.val(x);
                      const Tensor& wv = gg.val(w);
                      const int cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
                      const int K = cin * kh * kw;
                      const int P = oh * ow;

                      // col is recomputed rather than cached: it is cheap next
                      // to the two GEMMs below and keeps node memory flat.
                      std::vector<double> col;
                      im2col(xv, kh, kw, stride, pad, oh, ow, col);

                      if (b >= 0) {
                          Tensor& db = gg.grad(b);
                          for (int co = 0; co < cout; ++co) {
                              double s = 0.0;
                              for (int p = 0; p < P; ++p)
                                  s += dout.v[static_cast<size_t>(co) * P + p];
                              db.v[static_cast<size_t>(co)] += s;
                          }
                      }
                      {  // dW += dout * col^T
                          std::vector<double> colT(col.size());
                          transpose(col.data(), colT.data(), K, P);
                          gemm_acc(dout.v.data(), colT.data(), gg.grad(w).v.data(), cout, P, K);
                      }
                      {  // dX += col2im(w^T * dout)
                          std::vector<double> wT(wv.v.size());
                          transpose(wv.v.data(), wT.data(), cout, K);
                          std::vector<double> dcol(static_cast<size_t>(K) * P, 0.0);
                          gemm_acc(wT.data(), dout.v.data(), dcol.data(), K, cout, P);
                          col2im_acc(dcol, cin, h, wd, kh, kw, stride, pad, oh, ow, gg.grad(x));
                      }
                  });
}

NodeId deform_conv(Graph& g, NodeId x, NodeId w, NodeId offsets, NodeId masks, int groups,
                   int k) {
    const Tensor& xv = g.val(x);
    const Tensor& wv = g.val(w);
    const Tensor& ov = g.val(offsets);
    const Tensor& mv = g.val(masks);
    require(xv.rank() == 3, "deform_conv: input must be (c,h,w)");
    const int cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
    require(k % 2 == 1, "deform_conv: kernel size must be odd");
    require(cin % groups == 0, "deform_conv: channels " + std::to_string(cin) +
                                   " not divisible by " + std::to_string(groups) + " groups");
    require(wv.rank() == 4 && wv.dim(1) == cin && wv.dim(2) == k && wv.dim(3) == k,
            "deform_conv: weight shape mismatch");
    require(ov.rank() == 3 && ov.dim(0) == groups * 2 * k * k && ov.dim(1) == h &&
                ov.dim(2) == wd,
            "deform_conv: offsets shape mismatch, want (" +
                std::to_string(groups * 2 * k * k) + ",h,w) got " + ov.shape_str());
    require(mv.rank() == 3 && mv.dim(0) == groups * k * k && mv.dim(1) == h && mv.dim(2) == wd,
            "deform_conv: masks shape mismatch");
    const int cout = wv.dim(0);
    const int K = cin * k * k;
    const int P = h * wd;

    std::vector<double> S;
    deform_cols(xv, ov, mv, groups, k, S);
    Tensor y({cout, h, wd});
    gemm_acc(wv.v.data(), S.data(), y.v.data(), cout, K, P);

    return g.make(
        std::move(y), {x, w, offsets, masks},
        [x, w, offsets, masks, groups, k, cout, K, P](Graph& gg, NodeId self) {
            const Tensor& dout = gg.grad(self);
            const Tensor& xv = gg.val(x);
            const Tensor& wv = gg.val(w);
            const Tensor& ov = gg.val(offsets);
            const Tensor& mv = gg.val(masks);
            const int cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
            const int cg = cin / groups;
            const int pad = k / 2;

            std::vector<double> S;
            deform_cols(xv, ov, mv, groups, k, S);

            {  // dW += dout * S^T
                std::vector<double> ST(S.size());
                transpose(S.data(), ST.data(), K, P);
                gemm_acc(dout.v.data(), ST.data(), gg.grad(w).v.data(), cout, P, K);
            }

            // dS = w^T * dout, then unwind sampling and modulation.
            std::vector<double> dS(static_cast<size_t>(K) * P, 0.0);
            {
                std::vector<double> wT(wv.v.size());
                transpose(wv.v.data(), wT.data(), cout, K);
                gemm_acc(wT.data(), dout.v.data(), dS.data(), K, cout, P);
            }

            Tensor& dx = gg.grad(x);
            Tensor& doff = gg.grad(offsets);
            Tensor& dmask = gg.grad(masks);
            for (int ci = 0; ci < cin; ++ci) {
                const int gidx = ci / cg;
                const double* plane = xv.v.data() + static_cast<size_t>(ci) * P;
                double* dplane = dx.v.data() + static_cast<size_t>(ci) * P;
                for (int kidx = 0; kidx < k * k; ++kidx) {
                    const int ky = kidx / k, kx = kidx % k;
                    const size_t obase = (static_cast<size_t>(gidx) * k * k + kidx) * 2 *
                                         static_cast<size_t>(P);
                    const size_t mbase =
                        (static_cast<size_t>(gidx) * k * k + kidx) * static_cast<size_t>(P);
                    const double* dSrow =
                        dS.data() + (static_cast<size_t>(ci) * k * k + kidx) * P;
                    for (int py = 0; py < h; ++py) {
                        for (int px = 0; px < wd; ++px) {
                            const size_t p = static_cast<size_t>(py) * wd + px;
                            const double ds = dSrow[p];
                            if (ds == 0.0) continue;
                            const double m = mv.v[mbase + p];
                            const BilinPoint b = bilin_point(py + ky - pad + ov.v[obase + p],
                                                             px + kx - pad + ov.v[obase + P + p]);
                            dmask.v[mbase + p] += ds * bilin_value(plane, h, wd, b);
                            const double dval = ds * m;
                            bilin_scatter(dplane, h, wd, b, dval);
                            double dsy, dsx;
                            bilin_pos_grad(plane, h, wd, b, &dsy, &dsx);
                            doff.v[obase + p] += dval * dsy;
                            doff.v[obase + P + p] += dval * dsx;
                        }
                    }
                }
            }
        });
}

NodeId l1_loss(Graph& g, NodeId a, NodeId b) {
    const Tensor& av = g.val(a);
    const Tensor& bv = g.val(b);
    if (!av.same_shape(bv))
        throw InputError("l1_loss: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    const size_t n = av.v.size();
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += std::fabs(av.v[i] - bv.v[i]);
    return g.make(Tensor::scalar(s / static_cast<double>(n)), {a, b},
                  [a, b, n](Graph& gg, NodeId self) {
                      const double gv = gg.grad(self).v[0] / static_cast<double>(n);
                      const Tensor& av = gg.val(a);
                      const Tensor& bv = gg.val(b);
                      Tensor& da = gg.grad(a);
                      Tensor& db = gg.grad(b);
                      for (size_t i = 0; i < n; ++i) {
                          const double d = av.v[i] - bv.v[i];
                          const double sg = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                          da.v[i] += gv * sg;
                          db.v[i] -= gv * sg;
                      }
                  });
}

NodeId bce_with_logits(Graph& g, NodeId logits, Tensor targets) {
    const Tensor& zv = g.val(logits);
    require(zv.same_shape(targets), "bce_with_logits: target shape mismatch");
    const size_t n = zv.v.size();
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double z = zv.v[i], t = targets.v[i];
        s += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::fabs(z)));
    }
    auto tgt = std::make_shared<Tensor>(std::move(targets));
    return g.make(Tensor::scalar(s / static_cast<double>(n)), {logits},
                  [logits, tgt, n](Graph& gg, NodeId self) {
                      const double gv = gg.grad(self).v[0] / static_cast<double>(n);
                      const Tensor& zv = gg.val(logits);
                      Tensor& dz = gg.grad(logits);
                      for (size_t i = 0; i < n; ++i) {
                          const double z = zv.v[i];
                          const double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                                      : std::exp(z) / (1.0 + std::exp(z));
                          dz.v[i] += gv * (sig - tgt->v[i]);
                      }
                  });
}

NodeId gather_cells(Graph& g, NodeId x, const std::vector<std::pair<int, int>>& cells) {
    const Tensor& xv = g.val(x);
    const int c = xv.dim(0);
    const size_t plane = static_cast<size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out({static_cast<int>(cells.size()) * c});
    for (size_t i = 0; i < cells.size(); ++i) {
        const size_t p = static_cast<size_t>(cells[i].first) * xv.dim(2) + cells[i].second;
        for (int ci = 0; ci < c; ++ci)
            out.v[i * c + ci] = xv.v[static_cast<size_t>(ci) * plane + p];
    }
    return g.make(std::move(out), {x}, [x, cells, c, plane](Graph& gg, NodeId self) {
        const Tensor& dout = gg.grad(self);
        const Tensor& xv = gg.val(x);
        Tensor& dx = gg.grad(x);
        for (size_t i = 0; i < cells.size(); ++i) {
            const size_t p = static_cast<size_t>(cells[i].first) * xv.dim(2) + cells[i].second;
            for (int ci = 0; ci < c; ++ci)
                dx.v[static_cast<size_t>(ci) * plane + p] += dout.v[i * c + ci];
        }
    });
}

NodeId sum_weighted(Graph& g, const std::vector<NodeId>& scalars,
                    const std::vector<double>& coeffs) {
    require(scalars.size() == coeffs.size() && !scalars.empty(), "sum_weighted: size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < scalars.size(); ++i) {
        require(g.val(scalars[i]).numel() == 1, "sum_weighted: non-scalar term");
        s += coeffs[i] * g.val(scalars[i]).v[0];
    }
    return g.make(Tensor::scalar(s), scalars, [scalars, coeffs](Graph& gg, NodeId self) {
        const double gv = gg.grad(self).v[0];
        for (size_t i = 0; i < scalars.size(); ++i) gg.grad(scalars[i]).v[0] += gv * coeffs[i];
    });
}

NodeId dot_const(Graph& g, NodeId x, Tensor coeffs) {
    const Tensor& xv = g.val(x);
    require(xv.v.size() == coeffs.v.size(), "dot_const: size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < xv.v.size(); ++i) s += coeffs.v[i] * xv.v[i];
    auto c = std::make_shared<Tensor>(std::move(coeffs));
    return g.make(Tensor::scalar(s), {x}, [x, c](Graph& gg, NodeId self) {
        const double gv = gg.grad(self).v[0];
        Tensor& dx = gg.grad(x);
        for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += gv * c->v[i];
    });
}

}  // namespace ops
}  // namespace bird
