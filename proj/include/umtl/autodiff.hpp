#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "umtl/error.hpp"
#include "umtl/tensor.hpp"

namespace umtl::ad {

using NodeId = int32_t;

// Reverse-mode tape. One Graph is built per instance forward pass and
// discarded after backward(); construction order is the topological order.
class Graph {
public:
    NodeId leaf(Tensor t) {
        nodes_.push_back(Node{std::move(t), Tensor{}, nullptr});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    const Tensor& val(NodeId id) const { return nodes_[static_cast<size_t>(id)].val; }

    // Gradient of the last backward() root w.r.t. node id; zeros if untouched.
    Tensor grad_of(NodeId id) const {
        const Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.grad.v.empty()) return n.grad;
        return Tensor::zeros(n.val.shape);
    }

    void backward(NodeId root) {
        Node& r = nodes_[static_cast<size_t>(root)];
        check(r.val.numel() == 1, errc::shape, "backward root must be scalar");
        grad(root).v[0] = 1.0;
        for (NodeId i = root; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.back && !n.grad.v.empty()) n.back(*this, i);
        }
    }

    // ---- elementwise ----

    NodeId add(NodeId a, NodeId b) {
        check(val(a).same_shape(val(b)), errc::shape, "add: shape mismatch");
        Tensor out = val(a);
        const Tensor& tb = val(b);
        for (int64_t i = 0; i < out.numel(); ++i) out.v[i] += tb.v[i];
        return make(std::move(out), [a, b](Graph& g, NodeId self) {
            const Tensor& go = g.node(self).grad;
            g.accumulate(a, go);
            g.accumulate(b, go);
        });
    }

    NodeId sub(NodeId a, NodeId b) {
        check(val(a).same_shape(val(b)), errc::shape, "sub: shape mismatch");
        Tensor out = val(a);
        const Tensor& tb = val(b);
        for (int64_t i = 0; i < out.numel(); ++i) out.v[i] -= tb.v[i];
        return make(std::move(out), [a, b](Graph& g, NodeId self) {
            const Tensor& go = g.node(self).grad;
            g.accumulate(a, go);
            Tensor& gb = g.grad(b);
            for (int64_t i = 0; i < go.numel(); ++i) gb.v[i] -= go.v[i];
        });
    }

    NodeId scale(NodeId a, double s) {
        Tensor out = val(a);
        for (double& x : out.v) x *= s;
        return make(std::move(out), [a, s](Graph& g, NodeId self) {
            const Tensor& go = g.node(self).grad;
            Tensor& ga = g.grad(a);
            for (int64_t i = 0; i < go.numel(); ++i) ga.v[i] += s * go.v[i];
        });
    }

    NodeId relu(NodeId a) {
        Tensor out = val(a);
        for (double& x : out.v) x = x > 0.0 ? x : 0.0;
        return make(std::move(out), [a](Graph& g, NodeId self) {
            const Tensor& go = g.node(self).grad;
            const Tensor& in = g.val(a);
            Tensor& ga = g.grad(a);
            for (int64_t i = 0; i < go.numel(); ++i)
                if (in.v[i] > 0.0) ga.v[i] += go.v[i];
        });
    }

    // ---- matrix ops (2-D {rows, cols}) ----

    // x[n,d] * W[d,e] + b[e]
    NodeId affine(NodeId x, NodeId w, NodeId b) {
        const Tensor& tx = val(x);
        const Tensor& tw = val(w);
        const Tensor& tb = val(b);
        check(tx.ndim() == 2 && tw.ndim() == 2 && tx.dim(1) == tw.dim(0), errc::shape,
              "affine: shape mismatch");
        check(tb.numel() == tw.dim(1), errc::shape, "affine: bias mismatch");
        const int64_t n = tx.dim(0), d = tx.dim(1), e = tw.dim(1);
        Tensor out({n, e});
        for (int64_t i = 0; i < n; ++i) {
            double* orow = &out.v[static_cast<size_t>(i * e)];
            for (int64_t j = 0; j < e; ++j) orow[j] = tb.v[static_cast<size_t>(j)];
            for (int64_t k = 0; k < d; ++k) {
                const double xv = tx.v[static_cast<size_t>(i * d + k)];
                const double* wrow = &tw.v[static_cast<size_t>(k * e)];
                for (int64_t j = 0; j < e; ++j) orow[j] += xv * wrow[j];
            }
        }
        return make(std::move(out), [x, w, b, n, d, e](Graph& g, NodeId self) {
            const Tensor& go = g.node(self).grad;
            const Tensor& tx = g.val(x);
            const Tensor& tw = g.val(w);
            Tensor& gx = g.grad(x);
            Tensor& gw = g.grad(w);
            Tensor& gb = g.grad(b);
            for (int64_t i = 0; i < n; ++i) {
                const double* grow = &go.v[static_cast<size_t>(i * e)];
                for (int64_t j = 0; j < e; ++j) gb.v[static_cast<size_t>(j)] += grow[j];
                for (int64_t k = 0; k < d; ++k) {
                    const double* wrow = &tw.v[static_cast<size_t>(k * e)];
                    double acc = 0.0;
                    for (int64_t j = 0; j < e; ++j) acc += grow[j] * wrow[j];
                    gx.v[static_cast<size_t>(i * d + k)] += acc;
                    const double xv = tx.v[static_cast<size_t>(i * d + k)];
                    double* gwrow = &gw.v[static_cast<size_t>(k * e)];
                    for (int64_t j = 0; j < e; ++j) gwrow[j] += xv * grow[j];
                }
            }
        });
    }

    // a[n,m] * b[m,e]
    NodeId matmul(NodeId a, NodeId b) {
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        check(ta.ndim() == 2 && tb.ndim() == 2 && ta.dim(1) == tb.dim(0), errc::shape,
              "matmul: shape mismatch");
        const int64_t n = ta.dim(0), m = ta.dim(1), e = tb.dim(1);
        Tensor out({n, e});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t k = 0; k < m; ++k) {
                const double av = ta.v[static_cast<size_t>(i * m + k)];
                const double* brow = &tb.v[static_cast<size_t>(k * e)];
                double* orow = &out.v[static_cast<size_t>(i * e)];
                for (int64_t j = 0; j < e; ++j) orow[j] += av * brow[j];
            }
        return make(std::move(out), [a, b, n, m, e](Graph& g, NodeId self) {
            const Tensor& go = g.node(self).grad;
            const Tensor& ta = g.val(a);
            const Tensor& tb = g.val(b);
            Tensor& ga = g.grad(a);
            Tensor& gb = g.grad(b);
            for (int64_t i = 0; i < n; ++i) {
                const double* grow = &go.v[static_cast<size_t>(i * e)];
                for (int64_t k = 0; k < m; ++k) {
                    const double* brow = &tb.v[static_cast<size_t>(k * e)];
                    double acc = 0.0;
                    for (int64_t j = 0; j < e; ++j) acc += grow[j] * brow[j];
                    ga.v[static_cast<size_t>(i * m + k)] += acc;
                    const double av = ta.v[static_cast<size_t>(i * m + k)];
                    double* gbrow = &gb.v[static_cast<size_t>(k * e)];
                    for (int64_t j = 0; j < e; ++j) gbrow[j] += av * grow[j];
                }
            }
        });
    }

    // a[n,d] * b[m,d]^T -> [n,m]
    NodeId matmul_nt(NodeId a, NodeId b) {
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        check(ta.ndim() == 2 && tb.ndim() == 2 && ta.dim(1) == tb.dim(1), errc::shape,
              "matmul_nt: shape mismatch");
        const int64_t n = ta.dim(0), d = ta.dim(1), m = tb.dim(0);
        Tensor out({n, m});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < m; ++j) {
                const double* arow = &ta.v[static_cast<size_t>(i * d)];
                const double* brow = &tb.v[static_cast<size_t>(j * d)];
                double acc = 0.0;
                for (int64_t k = 0; k < d; ++k) acc += arow[k] * brow[k];
                out.v[static_cast<size_t>(i * m + j)] = acc;
            }
        return make(std::move(out), [a, b, n, d, m](Graph& g, NodeId self) {
            const Tensor& go = g.node(self).grad;
            const Tensor& ta = g.val(a);
            const Tensor& tb = g.val(b);
            Tensor& ga = g.grad(a);
            Tensor& gb = g.grad(b);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < m; ++j) {
                    const double gv = go.v[static_cast<size_t>(i * m + j)];
                    if (gv == 0.0) continue;
                    double* garow = &ga.v[static_cast<size_t>(i * d)];
                    double* gbrow = &gb.v[static_cast<size_t>(j * d)];
                    const double* arow = &ta.v[static_cast<size_t>(i * d)];
                    const double* brow = &tb.v[static_cast<size_t>(j * d)];
                    for (int64_t k = 0; k < d; ++k) {
                        garow[k] += gv * brow[k];
                        gbrow[k] += gv * arow[k];
                    }
                }
        });
    }

    NodeId softmax_rows(NodeId a) {
        const Tensor& ta = val(a);
        check(ta.ndim() == 2, errc::shape, "softmax_rows: expects 2-D");
        const int64_t n = ta.dim(0), d = ta.dim(1);
        Tensor out = ta;
        for (int64_t i = 0; i < n; ++i) {
            double* row = &out.v[static_cast<size_t>(i * d)];
            double mx = row[0];
            for (int64_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            for (int64_t j = 0; j < d; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            for (int64_t j = 0; j < d; ++j) row[j] /= sum;
        }
        return make(std::move(out), [a, n, d](Graph& g, NodeId self) {
            const Tensor& go = g.node(self).grad;
            const Tensor& s = g.val(self);
            Tensor& ga = g.grad(a);
            for (int64_t i = 0; i < n; ++i) {
                const double* srow = &s.v[static_cast<size_t>(i * d)];
                const double* grow = &go.v[static_cast<size_t>(i * d)];
                double dot = 0.0;
                for (int64_t j = 0; j < d; ++j) dot += srow[j] * grow[j];
                double* garow = &ga.v[static_cast<size_t>(i * d)];
                for (int64_t j = 0; j < d; ++j) garow[j] += srow[j] * (grow[j] - dot);
            }
        });
    }

    // Per-row layer normalization with learnable gain/bias.
    NodeId layernorm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5) {
        const Tensor& tx = val(x);
        check(tx.ndim() == 2, errc::shape, "layernorm: expects 2-D");
        const int64_t n = tx.dim(0), d = tx.dim(1);
        check(val(gamma).numel() == d && val(beta).numel() == d, errc::shape,
              "layernorm: gain/bias mismatch");
        Tensor out({n, d});
        Tensor xhat({n, d});
        Tensor inv_sigma({n});
        const Tensor& tg = val(gamma);
        const Tensor& tb = val(beta);
        for (int64_t i = 0; i < n; ++i) {
            const double* row = &tx.v[static_cast<size_t>(i * d)];
            double mu = 0.0;
            for (int64_t j = 0; j < d; ++j) mu += row[j];
            mu /= static_cast<double>(d);
            double var = 0.0;
            for (int64_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
            var /= static_cast<double>(d);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_sigma.v[static_cast<size_t>(i)] = is;
            for (int64_t j = 0; j < d; ++j) {
                const double xh = (row[j] - mu) * is;
                xhat.v[static_cast<size_t>(i * d + j)] = xh;
                out.v[static_cast<size_t>(i * d + j)] =
                    xh * tg.v[static_cast<size_t>(j)] + tb.v[static_cast<size_t>(j)];
            }
        }
        NodeId id = make(std::move(out), nullptr);
        node(id).aux.push_back(std::move(xhat));
        node(id).aux.push_back(std::move(inv_sigma));
        node(id).back = [x, gamma, beta, n, d](Graph& g, NodeId self) {
            const Tensor& go = g.node(self).grad;
            const Tensor& xh = g.node(self).aux[0];
            const Tensor& is = g.node(self).aux[1];
            const Tensor& tg = g.val(gamma);
            Tensor& gx = g.grad(x);
            Tensor& gg = g.grad(gamma);
            Tensor& gb = g.grad(beta);
            for (int64_t i = 0; i < n; ++i) {
                const double* grow = &go.v[static_cast<size_t>(i * d)];
                const double* xrow = &xh.v[static_cast<size_t>(i * d)];
                double sum_dy = 0.0, sum_dyx = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    const double dyg = grow[j] * tg.v[static_cast<size_t>(j)];
                    sum_dy += dyg;
                    sum_dyx += dyg * xrow[j];
                    gg.v[static_cast<size_t>(j)] += grow[j] * xrow[j];
                    gb.v[static_cast<size_t>(j)] += grow[j];
                }
                const double inv_d = 1.0 / static_cast<double>(d);
                const double s = is.v[static_cast<size_t>(i)];
                double* gxrow = &gx.v[static_cast<size_t>(i * d)];
                for (int64_t j = 0; j < d; ++j) {
                    const double dyg = grow[j] * tg.v[static_cast<size_t>(j)];
                    gxrow[j] += s * (dyg - inv_d * sum_dy - xrow[j] * inv_d * sum_dyx);
                }
            }
        };
        return id;
    }

    // ---- structure ops ----

    NodeId slice_cols(NodeId x, int64_t c0, int64_t c1) {
        const Tensor& tx = val(x);
        check(tx.ndim() == 2 && c0 >= 0 && c1 <= tx.dim(1) && c0 < c1, errc::shape,
              "slice_cols: bad range");
        const int64_t n = tx.dim(0), d = tx.dim(1), w = c1 - c0;
        Tensor out({n, w});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < w; ++j)
                out.v[static_cast<size_t>(i * w + j)] = tx.v[static_cast<size_t>(i * d + c0 + j)];
        return make(std::move(out), [x, c0, n, d, w](Graph& g, NodeId self) {
            const Tensor& go = g.node(self).grad;
            Tensor& gx = g.grad(x);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < w; ++j)
                    gx.v[static_cast<size_t>(i * d + c0 + j)] +=
                        go.v[static_cast<size_t>(i * w + j)];
        });
    }

    NodeId concat_cols(const std::vector<NodeId>& parts) {
        check(!parts.empty(), errc::shape, "concat_cols: empty");
        const int64_t n = val(parts[0]).dim(0);
        int64_t total = 0;
        for (NodeId p : parts) {
            check(val(p).ndim() == 2 && val(p).dim(0) == n, errc::shape, "concat_cols: mismatch");
            total += val(p).dim(1);
        }
        Tensor out({n, total});
        int64_t off = 0;
        for (NodeId p : parts) {
            const Tensor& tp = val(p);
            const int64_t w = tp.dim(1);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < w; ++j)
                    out.v[static_cast<size_t>(i * total + off + j)] =
                        tp.v[static_cast<size_t>(i * w + j)];
            off += w;
        }
        std::vector<NodeId> ps = parts;
        return make(std::move(out), [ps, n, total](Graph& g, NodeId self) {
            const Tensor& go = g.node(self).grad;
            int64_t off = 0;
            for (NodeId p : ps) {
                Tensor& gp = g.grad(p);
                const int64_t w = gp.shape[1];
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < w; ++j)
                        gp.v[static_cast<size_t>(i * w + j)] +=
                            go.v[static_cast<size_t>(i * total + off + j)];
                off += w;
            }
        });
    }

    NodeId mean_rows(NodeId x) {
        const Tensor& tx = val(x);
        check(tx.ndim() == 2, errc::shape, "mean_rows: expects 2-D");
        const int64_t n = tx.dim(0), d = tx.dim(1);
        Tensor out({1, d});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < d; ++j)
                out.v[static_cast<size_t>(j)] += tx.v[static_cast<size_t>(i * d + j)];
        for (int64_t j = 0; j < d; ++j) out.v[static_cast<size_t>(j)] /= static_cast<double>(n);
        return make(std::move(out), [x, n, d](Graph& g, NodeId self) {
            const Tensor& go = g.node(self).grad;
            Tensor& gx = g.grad(x);
            const double inv_n = 1.0 / static_cast<double>(n);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < d; ++j)
                    gx.v[static_cast<size_t>(i * d + j)] += inv_n * go.v[static_cast<size_t>(j)];
        });
    }

    // Same-size zero-padded 2-D convolution: x[ci,H,W], w[co,ci,kh,kw], b[co].
    NodeId conv2d(NodeId x, NodeId w, NodeId b) {
        const Tensor& tx = val(x);
        const Tensor& tw = val(w);
        check(tx.ndim() == 3 && tw.ndim() == 4 && tw.dim(1) == tx.dim(0), errc::shape,
              "conv2d: shape mismatch");
        check(tw.dim(2) % 2 == 1 && tw.dim(3) % 2 == 1, errc::shape, "conv2d: odd kernels only");
        const int64_t ci = tx.dim(0), H = tx.dim(1), W = tx.dim(2);
        const int64_t co = tw.dim(0), kh = tw.dim(2), kw = tw.dim(3);
        check(val(b).numel() == co, errc::shape, "conv2d: bias mismatch");
        const int64_t ph = kh / 2, pw = kw / 2;
        Tensor out({co, H, W});
        const Tensor& tb = val(b);
        for (int64_t o = 0; o < co; ++o) {
            for (int64_t y = 0; y < H; ++y)
                for (int64_t xx = 0; xx < W; ++xx) {
                    double acc = tb.v[static_cast<size_t>(o)];
                    for (int64_t c = 0; c < ci; ++c)
                        for (int64_t ky = 0; ky < kh; ++ky) {
                            const int64_t sy = y + ky - ph;
                            if (sy < 0 || sy >= H) continue;
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const int64_t sx = xx + kx - pw;
                                if (sx < 0 || sx >= W) continue;
                                acc += tx.at(c, sy, sx) * tw.v[static_cast<size_t>(
                                                              ((o * ci + c) * kh + ky) * kw + kx)];
                            }
                        }
                    out.at(o, y, xx) = acc;
                }
        }
        return make(std::move(out), [x, w, b, ci, H, W, co, kh, kw, ph, pw](Graph& g, NodeId self) {
            const Tensor& go = g.node(self).grad;
            const Tensor& tx = g.val(x);
            const Tensor& tw = g.val(w);
            Tensor& gx = g.grad(x);
            Tensor& gw = g.grad(w);
            Tensor& gb = g.grad(b);
            for (int64_t o = 0; o < co; ++o)
                for (int64_t y = 0; y < H; ++y)
                    for (int64_t xx = 0; xx < W; ++xx) {
                        const double gv = go.at(o, y, xx);
                        if (gv == 0.0) continue;
                        gb.v[static_cast<size_t>(o)] += gv;
                        for (int64_t c = 0; c < ci; ++c)
                            for (int64_t ky = 0; ky < kh; ++ky) {
                                const int64_t sy = y + ky - ph;
                                if (sy < 0 || sy >= H) continue;
                                for (int64_t kx = 0; kx < kw; ++kx) {
                                    const int64_t sx = xx + kx - pw;
                                    if (sx < 0 || sx >= W) continue;
                                    const size_t wi = static_cast<size_t>(
                                        ((o * ci + c) * kh + ky) * kw + kx);
                                    gx.at(c, sy, sx) += gv * tw.v[wi];
                                    gw.v[wi] += gv * tx.at(c, sy, sx);
                                }
                            }
                    }
        });
    }

    // Feature map [c,m,m] -> tokens [n_k, a*a*c]; windows ordered row-major
    // over the window grid, token elements ordered (channel, dy, dx).
    NodeId windows(NodeId x, int64_t a) {
        const Tensor& tx = val(x);
        check(tx.ndim() == 3 && tx.dim(1) == tx.dim(2), errc::shape, "windows: expects [c,m,m]");
        const int64_t c = tx.dim(0), m = tx.dim(1);
        check(a >= 1 && m % a == 0, errc::shape, "windows: window size must divide map size");
        const int64_t per_axis = m / a, n_k = per_axis * per_axis, d = a * a * c;
        Tensor out({n_k, d});
        for (int64_t wy = 0; wy < per_axis; ++wy)
            for (int64_t wx = 0; wx < per_axis; ++wx) {
                const int64_t k = wy * per_axis + wx;
                for (int64_t ch = 0; ch < c; ++ch)
                    for (int64_t dy = 0; dy < a; ++dy)
                        for (int64_t dx = 0; dx < a; ++dx)
                            out.at(k, (ch * a + dy) * a + dx) =
                                tx.at(ch, wy * a + dy, wx * a + dx);
            }
        return make(std::move(out), [x, a, c, per_axis](Graph& g, NodeId self) {
            const Tensor& go = g.node(self).grad;
            Tensor& gx = g.grad(x);
            for (int64_t wy = 0; wy < per_axis; ++wy)
                for (int64_t wx = 0; wx < per_axis; ++wx) {
                    const int64_t k = wy * per_axis + wx;
                    for (int64_t ch = 0; ch < c; ++ch)
                        for (int64_t dy = 0; dy < a; ++dy)
                            for (int64_t dx = 0; dx < a; ++dx)
                                gx.at(ch, wy * a + dy, wx * a + dx) +=
                                    go.at(k, (ch * a + dy) * a + dx);
                }
        });
    }

    // ---- losses ----

    // sum |a - b|; both operands receive gradients, sign(0) := 0.
    NodeId l1(NodeId a, NodeId b) {
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        check(ta.same_shape(tb), errc::shape, "l1: shape mismatch");
        Tensor out({1});
        double acc = 0.0;
        for (int64_t i = 0; i < ta.numel(); ++i) acc += std::abs(ta.v[i] - tb.v[i]);
        out.v[0] = acc;
        return make(std::move(out), [a, b](Graph& g, NodeId self) {
            const double gv = g.node(self).grad.v[0];
            const Tensor& ta = g.val(a);
            const Tensor& tb = g.val(b);
            Tensor& ga = g.grad(a);
            Tensor& gb = g.grad(b);
            for (int64_t i = 0; i < ta.numel(); ++i) {
                const double diff = ta.v[i] - tb.v[i];
                const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                ga.v[i] += gv * s;
                gb.v[i] -= gv * s;
            }
        });
    }

    NodeId sum_all(NodeId a) {
        Tensor out({1});
        for (double x : val(a).v) out.v[0] += x;
        return make(std::move(out), [a](Graph& g, NodeId self) {
            const double gv = g.node(self).grad.v[0];
            Tensor& ga = g.grad(a);
            for (double& x : ga.v) x += gv;
        });
    }

    // Binary cross-entropy on a raw logit: the logit is clamped to +-30 and
    // the probability to [1e-7, 1-1e-7] before the log terms.
    NodeId bce_logit(NodeId logit, double label) {
        check(val(logit).numel() == 1, errc::shape, "bce_logit: scalar logit expected");
        const double raw = val(logit).v[0];
        const double l = std::clamp(raw, -30.0, 30.0);
        const double phi = 1.0 / (1.0 + std::exp(-l));
        const double phic = std::clamp(phi, 1e-7, 1.0 - 1e-7);
        Tensor out({1});
        out.v[0] = -(label * std::log(phic) + (1.0 - label) * std::log(1.0 - phic));
        const bool logit_clamped = raw != l;
        const bool phi_clamped = phi != phic;
        return make(std::move(out), [logit, label, phi, phic, logit_clamped, phi_clamped](
                                        Graph& g, NodeId self) {
            if (logit_clamped) return;
            const double gv = g.node(self).grad.v[0];
            double dphic = -(label / phic - (1.0 - label) / (1.0 - phic));
            if (phi_clamped) dphic = 0.0;
            g.grad(logit).v[0] += gv * dphic * phi * (1.0 - phi);
        });
    }

    // K-way cross-entropy over one logits row [1,K].
    NodeId softmax_ce(NodeId logits, int64_t label) {
        const Tensor& tl = val(logits);
        check(tl.ndim() == 2 && tl.dim(0) == 1, errc::shape, "softmax_ce: expects [1,K]");
        const int64_t k = tl.dim(1);
        check(label >= 0 && label < k, errc::shape, "softmax_ce: label out of range");
        double mx = tl.v[0];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, tl.v[static_cast<size_t>(j)]);
        double sum = 0.0;
        Tensor probs({k});
        for (int64_t j = 0; j < k; ++j) {
            probs.v[static_cast<size_t>(j)] = std::exp(tl.v[static_cast<size_t>(j)] - mx);
            sum += probs.v[static_cast<size_t>(j)];
        }
        for (int64_t j = 0; j < k; ++j) probs.v[static_cast<size_t>(j)] /= sum;
        Tensor out({1});
        out.v[0] = -std::log(std::max(probs.v[static_cast<size_t>(label)], 1e-300));
        NodeId id = make(std::move(out), nullptr);
        node(id).aux.push_back(std::move(probs));
        node(id).back = [logits, label, k](Graph& g, NodeId self) {
            const double gv = g.node(self).grad.v[0];
            const Tensor& p = g.node(self).aux[0];
            Tensor& gl = g.grad(logits);
            for (int64_t j = 0; j < k; ++j)
                gl.v[static_cast<size_t>(j)] +=
                    gv * (p.v[static_cast<size_t>(j)] - (j == label ? 1.0 : 0.0));
        };
        return id;
    }

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor val;
        Tensor grad;                                 // lazily allocated
        std::function<void(Graph&, NodeId)> back;    // null for leaves
        std::vector<Tensor> aux;                     // saved forward intermediates
    };

    Node& node(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }

    Tensor& grad(NodeId id) {
        Node& n = node(id);
        if (n.grad.v.empty()) n.grad = Tensor::zeros(n.val.shape);
        return n.grad;
    }

    void accumulate(NodeId id, const Tensor& g) {
        Tensor& dst = grad(id);
        for (int64_t i = 0; i < g.numel(); ++i) dst.v[i] += g.v[i];
    }

    NodeId make(Tensor val, std::function<void(Graph&, NodeId)> back) {
        nodes_.push_back(Node{std::move(val), Tensor{}, std::move(back)});
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
};

}  // namespace umtl::ad
