#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hydra/tensor/tensor.hpp"

namespace hydra::ad {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

void require_rank(const Tensor& t, std::size_t rank, std::string_view op) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(t.shape()));
    }
}

void require_axis(const Tensor& t, std::size_t axis, std::string_view op) {
    if (axis >= t.rank()) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         to_string(t.shape()));
    }
}

void require_finite(const Tensor& t, std::string_view op) {
    for (double v : t.data()) {
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
    }
}

// (outer, length, inner) factorization around one axis.
struct AxisSplit {
    std::size_t outer = 1, length = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    r.length = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

Shape without_axis(const Shape& s, std::size_t axis) {
    Shape out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i != axis) out.push_back(s[i]);
    }
    return out;
}

// C[m,n] (+)= A[m,k] B[k,n] on raw row-major buffers.
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// dA[m,k] += dC[m,n] B[k,n]^T
void gemm_nt_acc(const double* dc, const double* b, double* da, std::size_t m, std::size_t k,
                 std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = dc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            da[i * k + p] += acc;
        }
    }
}

// dB[k,n] += A[m,k]^T dC[m,n]
void gemm_tn_acc(const double* a, const double* dc, double* db, std::size_t m, std::size_t k,
                 std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* grow = dc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            double* drow = db + p * n;
            for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const bool batched = a.rank() == 3;
    if (!((a.rank() == 2 && b.rank() == 2) || (a.rank() == 3 && b.rank() == 3))) {
        throw ShapeError("matmul: expected rank-2 or rank-3 operands, got " + to_string(a.shape()) +
                         " and " + to_string(b.shape()));
    }
    const std::size_t batch = batched ? a.dim(0) : 1;
    const std::size_t m = a.dim(batched ? 1 : 0), k = a.dim(batched ? 2 : 1);
    const std::size_t kb = b.dim(batched ? 1 : 0), n = b.dim(batched ? 2 : 1);
    if (k != kb || (batched && b.dim(0) != batch)) {
        throw ShapeError("matmul: incompatible " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    std::vector<double> out(batch * m * n, 0.0);
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    for (std::size_t q = 0; q < batch; ++q) {
        gemm_nn(ad + q * m * k, bd + q * k * n, out.data() + q * m * n, m, k, n);
    }
    Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
    return make_result("matmul", shape, std::move(out), {a, b},
                       [a, b, batch, m, k, n](std::span<const double> g) {
                           const double* ad = a.data().data();
                           const double* bd = b.data().data();
                           double* ga = grad_buffer(a);
                           double* gb = grad_buffer(b);
                           for (std::size_t q = 0; q < batch; ++q) {
                               const double* gq = g.data() + q * m * n;
                               if (ga) gemm_nt_acc(gq, bd + q * k * n, ga + q * m * k, m, k, n);
                               if (gb) gemm_tn_acc(ad + q * m * k, gq, gb + q * k * n, m, k, n);
                           }
                       });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(w, 2, "linear");
    if (x.rank() < 1 || x.shape().back() != w.dim(0)) {
        throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                         to_string(w.shape()));
    }
    const std::size_t k = w.dim(0), n = w.dim(1);
    const std::size_t m = x.numel() / k;
    if (b.defined() && b.shape() != Shape{n}) {
        throw ShapeError("linear: bias shape " + to_string(b.shape()) + " expected [" +
                         std::to_string(n) + "]");
    }
    std::vector<double> out(m * n, 0.0);
    if (b.defined()) {
        const auto bd = b.data();
        for (std::size_t i = 0; i < m; ++i) std::copy(bd.begin(), bd.end(), out.begin() + i * n);
    }
    gemm_nn(x.data().data(), w.data().data(), out.data(), m, k, n);
    Shape shape = x.shape();
    shape.back() = n;
    return make_result("linear", shape, std::move(out), {x, w, b},
                       [x, w, b, m, k, n](std::span<const double> g) {
                           if (double* gx = grad_buffer(x)) {
                               gemm_nt_acc(g.data(), w.data().data(), gx, m, k, n);
                           }
                           if (double* gw = grad_buffer(w)) {
                               gemm_tn_acc(x.data().data(), g.data(), gw, m, k, n);
                           }
                           if (double* gb = grad_buffer(b)) {
                               for (std::size_t i = 0; i < m; ++i) {
                                   for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                               }
                           }
                       });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(x, 3, "conv2d");
    require_rank(w, 4, "conv2d");
    const std::size_t ks = w.dim(0);
    if ((ks != 1 && ks != 3) || w.dim(1) != ks) {
        throw ShapeError("conv2d: only 1x1 and 3x3 kernels are supported, got " + to_string(w.shape()));
    }
    const std::size_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2), cout = w.dim(3);
    if (w.dim(2) != cin) {
        throw ShapeError("conv2d: input channels " + std::to_string(cin) + " vs weight " +
                         to_string(w.shape()));
    }
    if (b.defined() && b.shape() != Shape{cout}) throw ShapeError("conv2d: bias shape mismatch");
    const long pad = static_cast<long>(ks / 2);

    std::vector<double> out(h * wd * cout, 0.0);
    const double* xd = x.data().data();
    const double* wdat = w.data().data();
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t xx = 0; xx < wd; ++xx) {
            double* o = out.data() + (y * wd + xx) * cout;
            if (b.defined()) std::copy(b.data().begin(), b.data().end(), o);
            for (std::size_t dy = 0; dy < ks; ++dy) {
                const long sy = static_cast<long>(y + dy) - pad;
                if (sy < 0 || sy >= static_cast<long>(h)) continue;
                for (std::size_t dx = 0; dx < ks; ++dx) {
                    const long sx = static_cast<long>(xx + dx) - pad;
                    if (sx < 0 || sx >= static_cast<long>(wd)) continue;
                    const double* in = xd + (static_cast<std::size_t>(sy) * wd + sx) * cin;
                    const double* kw = wdat + (dy * ks + dx) * cin * cout;
                    gemm_nn(in, kw, o, 1, cin, cout);
                }
            }
        }
    }
    return make_result(
        "conv2d", {h, wd, cout}, std::move(out), {x, w, b},
        [x, w, b, h, wd, cin, cout, ks, pad](std::span<const double> g) {
            double* gx = grad_buffer(x);
            double* gw = grad_buffer(w);
            double* gb = grad_buffer(b);
            const double* xd = x.data().data();
            const double* wdat = w.data().data();
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t xx = 0; xx < wd; ++xx) {
                    const double* go = g.data() + (y * wd + xx) * cout;
                    if (gb) {
                        for (std::size_t c = 0; c < cout; ++c) gb[c] += go[c];
                    }
                    for (std::size_t dy = 0; dy < ks; ++dy) {
                        const long sy = static_cast<long>(y + dy) - pad;
                        if (sy < 0 || sy >= static_cast<long>(h)) continue;
                        for (std::size_t dx = 0; dx < ks; ++dx) {
                            const long sx = static_cast<long>(xx + dx) - pad;
                            if (sx < 0 || sx >= static_cast<long>(wd)) continue;
                            const std::size_t in_off = (static_cast<std::size_t>(sy) * wd + sx) * cin;
                            const std::size_t k_off = (dy * ks + dx) * cin * cout;
                            if (gx) gemm_nt_acc(go, wdat + k_off, gx + in_off, 1, cin, cout);
                            if (gw) gemm_tn_acc(xd + in_off, go, gw + k_off, 1, cin, cout);
                        }
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Pointwise
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
    return make_result("relu", x.shape(), std::move(out), {x}, [x](std::span<const double> g) {
        double* gx = grad_buffer(x);
        const auto xd = x.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (xd[i] > 0.0) gx[i] += g[i];
        }
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.numel());
    const auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xd[i]));
    auto y = std::make_shared<std::vector<double>>(out);
    return make_result("sigmoid", x.shape(), std::move(out), {x}, [x, y](std::span<const double> g) {
        double* gx = grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*y)[i] * (1.0 - (*y)[i]);
    });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    require_axis(x, axis, "softmax");
    require_finite(x, "softmax");
    const auto sp = split_at(x.shape(), axis);
    const auto xd = x.data();
    std::vector<double> out(x.numel());
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.length * sp.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < sp.length; ++l) mx = std::max(mx, xd[base + l * sp.inner]);
            double total = 0.0;
            for (std::size_t l = 0; l < sp.length; ++l) {
                const double e = std::exp(xd[base + l * sp.inner] - mx);
                out[base + l * sp.inner] = e;
                total += e;
            }
            for (std::size_t l = 0; l < sp.length; ++l) out[base + l * sp.inner] /= total;
        }
    }
    auto y = std::make_shared<std::vector<double>>(out);
    return make_result("softmax", x.shape(), std::move(out), {x}, [x, y, sp](std::span<const double> g) {
        double* gx = grad_buffer(x);
        for (std::size_t o = 0; o < sp.outer; ++o) {
            for (std::size_t i = 0; i < sp.inner; ++i) {
                const std::size_t base = o * sp.length * sp.inner + i;
                double dot = 0.0;
                for (std::size_t l = 0; l < sp.length; ++l) {
                    dot += g[base + l * sp.inner] * (*y)[base + l * sp.inner];
                }
                for (std::size_t l = 0; l < sp.length; ++l) {
                    const std::size_t idx = base + l * sp.inner;
                    gx[idx] += (*y)[idx] * (g[idx] - dot);
                }
            }
        }
    });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
    require_axis(x, axis, "log_softmax");
    require_finite(x, "log_softmax");
    const auto sp = split_at(x.shape(), axis);
    const auto xd = x.data();
    std::vector<double> out(x.numel());
    auto probs = std::make_shared<std::vector<double>>(x.numel());
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.length * sp.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t l = 0; l < sp.length; ++l) mx = std::max(mx, xd[base + l * sp.inner]);
            double total = 0.0;
            for (std::size_t l = 0; l < sp.length; ++l) total += std::exp(xd[base + l * sp.inner] - mx);
            const double lse = mx + std::log(total);
            for (std::size_t l = 0; l < sp.length; ++l) {
                const std::size_t idx = base + l * sp.inner;
                out[idx] = xd[idx] - lse;
                (*probs)[idx] = std::exp(out[idx]);
            }
        }
    }
    return make_result("log_softmax", x.shape(), std::move(out), {x},
                       [x, probs, sp](std::span<const double> g) {
                           double* gx = grad_buffer(x);
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                               for (std::size_t i = 0; i < sp.inner; ++i) {
                                   const std::size_t base = o * sp.length * sp.inner + i;
                                   double total = 0.0;
                                   for (std::size_t l = 0; l < sp.length; ++l) total += g[base + l * sp.inner];
                                   for (std::size_t l = 0; l < sp.length; ++l) {
                                       const std::size_t idx = base + l * sp.inner;
                                       gx[idx] += g[idx] - (*probs)[idx] * total;
                                   }
                               }
                           }
                       });
}

Tensor log(const Tensor& x) {
    const auto xd = x.data();
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(xd[i] > 0.0)) throw NumericError("log: input must be positive");
        out[i] = std::log(xd[i]);
    }
    return make_result("log", x.shape(), std::move(out), {x}, [x](std::span<const double> g) {
        double* gx = grad_buffer(x);
        const auto xd = x.data();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / xd[i];
    });
}

Tensor abs(const Tensor& x) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = std::fabs(v);
    return make_result("abs", x.shape(), std::move(out), {x}, [x](std::span<const double> g) {
        double* gx = grad_buffer(x);
        const auto xd = x.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            gx[i] += xd[i] > 0.0 ? g[i] : (xd[i] < 0.0 ? -g[i] : 0.0);
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    const auto ad = a.data(), bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
    return make_result("add", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
        if (double* ga = grad_buffer(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (double* gb = grad_buffer(b)) {
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    const auto ad = a.data(), bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
    return make_result("sub", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
        if (double* ga = grad_buffer(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (double* gb = grad_buffer(b)) {
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    const auto ad = a.data(), bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
    return make_result("mul", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
        const auto ad = a.data(), bd = b.data();
        if (double* ga = grad_buffer(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i];
        }
        if (double* gb = grad_buffer(b)) {
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad[i];
        }
    });
}

Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= factor;
    return make_result("scale", x.shape(), std::move(out), {x}, [x, factor](std::span<const double> g) {
        double* gx = grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    });
}

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    require_axis(parts.front(), axis, "concat");
    Shape shape = parts.front().shape();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != shape.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i != axis && p.dim(i) != shape[i]) {
                throw ShapeError("concat: shape mismatch " + to_string(p.shape()) + " vs " +
                                 to_string(shape));
            }
        }
        total += p.dim(axis);
    }
    shape[axis] = total;
    const auto sp = split_at(shape, axis);
    std::vector<double> out(numel(shape));
    std::size_t offset = 0;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(offset);
        const std::size_t len = p.dim(axis);
        const auto pd = p.data();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            std::copy_n(pd.begin() + o * len * sp.inner, len * sp.inner,
                        out.begin() + (o * total + offset) * sp.inner);
        }
        offset += len;
    }
    return make_result("concat", shape, std::move(out), parts,
                       [parts, offsets, axis, sp, total](std::span<const double> g) {
                           for (std::size_t k = 0; k < parts.size(); ++k) {
                               double* gp = grad_buffer(parts[k]);
                               if (!gp) continue;
                               const std::size_t len = parts[k].dim(axis);
                               for (std::size_t o = 0; o < sp.outer; ++o) {
                                   const double* src = g.data() + (o * total + offsets[k]) * sp.inner;
                                   double* dst = gp + o * len * sp.inner;
                                   for (std::size_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
                               }
                           }
                       });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.numel()) {
        throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result("reshape", std::move(shape), std::move(out), {x}, [x](std::span<const double> g) {
        double* gx = grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
    const std::size_t r = x.rank();
    if (order.size() != r) throw ShapeError("permute: order length mismatch");
    std::vector<bool> seen(r, false);
    for (auto a : order) {
        if (a >= r || seen[a]) throw ShapeError("permute: invalid axis order");
        seen[a] = true;
    }
    const Shape& in_shape = x.shape();
    Shape out_shape(r);
    std::vector<std::size_t> in_strides(r, 1);
    for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[order[i]];

    // Source offset for each destination element, walked with an odometer.
    const std::size_t n = x.numel();
    auto src_index = std::make_shared<std::vector<std::size_t>>(n);
    std::vector<std::size_t> counter(r, 0);
    std::size_t src = 0;
    for (std::size_t dst = 0; dst < n; ++dst) {
        (*src_index)[dst] = src;
        for (std::size_t ax = r; ax-- > 0;) {
            ++counter[ax];
            src += in_strides[order[ax]];
            if (counter[ax] < out_shape[ax]) break;
            src -= in_strides[order[ax]] * out_shape[ax];
            counter[ax] = 0;
        }
    }
    std::vector<double> out(n);
    const auto xd = x.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = xd[(*src_index)[i]];
    return make_result("permute", out_shape, std::move(out), {x}, [x, src_index](std::span<const double> g) {
        double* gx = grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[(*src_index)[i]] += g[i];
    });
}

// ---------------------------------------------------------------------------
// Sampling and indexed reductions
// ---------------------------------------------------------------------------

Tensor bilinear_sample(const Tensor& input, const Tensor& coords) {
    require_rank(input, 3, "bilinear_sample");
    require_rank(coords, 2, "bilinear_sample");
    if (coords.dim(1) != 2) throw ShapeError("bilinear_sample: coords must be [P, 2]");
    require_finite(coords, "bilinear_sample");
    const long h = static_cast<long>(input.dim(0)), w = static_cast<long>(input.dim(1));
    const std::size_t c = input.dim(2), p = coords.dim(0);
    const auto in = input.data();
    const auto cd = coords.data();

    std::vector<double> out(p * c, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        const double r = cd[2 * i], col = cd[2 * i + 1];
        const double r0f = std::floor(r), c0f = std::floor(col);
        const double fr = r - r0f, fc = col - c0f;
        const long r0 = static_cast<long>(r0f), c0 = static_cast<long>(c0f);
        const double wts[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
        const long rr[4] = {r0, r0, r0 + 1, r0 + 1};
        const long cc[4] = {c0, c0 + 1, c0, c0 + 1};
        double* o = out.data() + i * c;
        for (int t = 0; t < 4; ++t) {
            if (wts[t] == 0.0 || rr[t] < 0 || rr[t] >= h || cc[t] < 0 || cc[t] >= w) continue;
            const double* src = in.data() + (rr[t] * w + cc[t]) * c;
            for (std::size_t k = 0; k < c; ++k) o[k] += wts[t] * src[k];
        }
    }
    return make_result(
        "bilinear_sample", {p, c}, std::move(out), {input, coords},
        [input, coords, h, w, c, p](std::span<const double> g) {
            double* gin = grad_buffer(input);
            double* gco = grad_buffer(coords);
            const auto in = input.data();
            const auto cd = coords.data();
            for (std::size_t i = 0; i < p; ++i) {
                const double r = cd[2 * i], col = cd[2 * i + 1];
                const double r0f = std::floor(r), c0f = std::floor(col);
                const double fr = r - r0f, fc = col - c0f;
                const long r0 = static_cast<long>(r0f), c0 = static_cast<long>(c0f);
                const double wts[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
                const double dwr[4] = {-(1 - fc), -fc, 1 - fc, fc};
                const double dwc[4] = {-(1 - fr), 1 - fr, -fr, fr};
                const long rr[4] = {r0, r0, r0 + 1, r0 + 1};
                const long cc[4] = {c0, c0 + 1, c0, c0 + 1};
                const double* go = g.data() + i * c;
                for (int t = 0; t < 4; ++t) {
                    if (rr[t] < 0 || rr[t] >= h || cc[t] < 0 || cc[t] >= w) continue;
                    const std::size_t off = static_cast<std::size_t>(rr[t] * w + cc[t]) * c;
                    if (gin && wts[t] != 0.0) {
                        for (std::size_t k = 0; k < c; ++k) gin[off + k] += wts[t] * go[k];
                    }
                    if (gco) {
                        double dot = 0.0;
                        for (std::size_t k = 0; k < c; ++k) dot += go[k] * in[off + k];
                        gco[2 * i] += dot * dwr[t];
                        gco[2 * i + 1] += dot * dwc[t];
                    }
                }
            }
        });
}

Tensor scatter_add(const Tensor& src, std::span<const std::int64_t> index, std::size_t rows) {
    require_rank(src, 2, "scatter_add");
    if (index.size() != src.dim(0)) throw ShapeError("scatter_add: index length mismatch");
    const std::size_t c = src.dim(1);
    auto idx = std::make_shared<std::vector<std::int64_t>>(index.begin(), index.end());
    for (auto i : *idx) {
        if (i >= static_cast<std::int64_t>(rows)) throw ShapeError("scatter_add: index out of range");
    }
    std::vector<double> out(rows * c, 0.0);
    const auto sd = src.data();
    for (std::size_t p = 0; p < idx->size(); ++p) {
        const auto row = (*idx)[p];
        if (row < 0) continue;
        for (std::size_t k = 0; k < c; ++k) out[row * c + k] += sd[p * c + k];
    }
    return make_result("scatter_add", {rows, c}, std::move(out), {src}, [src, idx, c](std::span<const double> g) {
        double* gs = grad_buffer(src);
        for (std::size_t p = 0; p < idx->size(); ++p) {
            const auto row = (*idx)[p];
            if (row < 0) continue;
            for (std::size_t k = 0; k < c; ++k) gs[p * c + k] += g[row * c + k];
        }
    });
}

Tensor gather_rows(const Tensor& src, std::span<const std::int64_t> index) {
    require_rank(src, 2, "gather_rows");
    const std::size_t rows = src.dim(0), c = src.dim(1);
    auto idx = std::make_shared<std::vector<std::int64_t>>(index.begin(), index.end());
    std::vector<double> out(idx->size() * c);
    const auto sd = src.data();
    for (std::size_t i = 0; i < idx->size(); ++i) {
        const auto row = (*idx)[i];
        if (row < 0 || row >= static_cast<std::int64_t>(rows)) {
            throw ShapeError("gather_rows: index out of range");
        }
        std::copy_n(sd.begin() + row * c, c, out.begin() + i * c);
    }
    return make_result("gather_rows", {idx->size(), c}, std::move(out), {src},
                       [src, idx, c](std::span<const double> g) {
                           double* gs = grad_buffer(src);
                           for (std::size_t i = 0; i < idx->size(); ++i) {
                               const auto row = (*idx)[i];
                               for (std::size_t k = 0; k < c; ++k) gs[row * c + k] += g[i * c + k];
                           }
                       });
}

Tensor max_pool(const Tensor& src, std::span<const std::int64_t> group, std::size_t groups) {
    require_rank(src, 2, "max_pool");
    if (group.size() != src.dim(0)) throw ShapeError("max_pool: group length mismatch");
    const std::size_t c = src.dim(1);
    const auto sd = src.data();
    // winner[g*c + k] = source row holding the max, or -1 for an empty group
    auto winner = std::make_shared<std::vector<std::int64_t>>(groups * c, -1);
    for (std::size_t p = 0; p < group.size(); ++p) {
        const auto gi = group[p];
        if (gi < 0) continue;
        if (gi >= static_cast<std::int64_t>(groups)) throw ShapeError("max_pool: group id out of range");
        for (std::size_t k = 0; k < c; ++k) {
            auto& wnr = (*winner)[gi * c + k];
            if (wnr < 0 || sd[p * c + k] > sd[wnr * c + k]) wnr = static_cast<std::int64_t>(p);
        }
    }
    std::vector<double> out(groups * c, 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto wnr = (*winner)[i];
        if (wnr >= 0) out[i] = sd[wnr * c + i % c];
    }
    return make_result("max_pool", {groups, c}, std::move(out), {src}, [src, winner, c](std::span<const double> g) {
        double* gs = grad_buffer(src);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto wnr = (*winner)[i];
            if (wnr >= 0) gs[wnr * c + i % c] += g[i];
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions and normalization
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x, std::size_t axis) {
    require_axis(x, axis, "sum");
    const auto sp = split_at(x.shape(), axis);
    const auto xd = x.data();
    std::vector<double> out(sp.outer * sp.inner, 0.0);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t l = 0; l < sp.length; ++l) {
            for (std::size_t i = 0; i < sp.inner; ++i) {
                out[o * sp.inner + i] += xd[(o * sp.length + l) * sp.inner + i];
            }
        }
    }
    return make_result("sum_axis", without_axis(x.shape(), axis), std::move(out), {x},
                       [x, sp](std::span<const double> g) {
                           double* gx = grad_buffer(x);
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                               for (std::size_t l = 0; l < sp.length; ++l) {
                                   for (std::size_t i = 0; i < sp.inner; ++i) {
                                       gx[(o * sp.length + l) * sp.inner + i] += g[o * sp.inner + i];
                                   }
                               }
                           }
                       });
}

Tensor mean(const Tensor& x, std::size_t axis) {
    require_axis(x, axis, "mean");
    const auto sp = split_at(x.shape(), axis);
    if (sp.length == 0) throw ShapeError("mean: empty axis");
    const auto xd = x.data();
    const double inv = 1.0 / static_cast<double>(sp.length);
    std::vector<double> out(sp.outer * sp.inner, 0.0);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t l = 0; l < sp.length; ++l) {
            for (std::size_t i = 0; i < sp.inner; ++i) {
                out[o * sp.inner + i] += xd[(o * sp.length + l) * sp.inner + i];
            }
        }
    }
    for (auto& v : out) v *= inv;
    return make_result("mean", without_axis(x.shape(), axis), std::move(out), {x},
                       [x, sp, inv](std::span<const double> g) {
                           double* gx = grad_buffer(x);
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                               for (std::size_t l = 0; l < sp.length; ++l) {
                                   for (std::size_t i = 0; i < sp.inner; ++i) {
                                       gx[(o * sp.length + l) * sp.inner + i] += g[o * sp.inner + i] * inv;
                                   }
                               }
                           }
                       });
}

Tensor sum(const Tensor& x) {
    const auto xd = x.data();
    const double total = std::accumulate(xd.begin(), xd.end(), 0.0);
    return make_result("sum", {}, {total}, {x}, [x](std::span<const double> g) {
        double* gx = grad_buffer(x);
        const std::size_t n = x.numel();
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() < 1) throw ShapeError("layer_norm: rank-0 input");
    const std::size_t c = x.shape().back();
    if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
        throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(c) + "]");
    }
    const std::size_t rows = x.numel() / c;
    const auto xd = x.data();
    const auto gd = gamma.data(), bd = beta.data();
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xd.data() + r * c;
        double mu = 0.0;
        for (std::size_t k = 0; k < c; ++k) mu += row[k];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t k = 0; k < c; ++k) var += (row[k] - mu) * (row[k] - mu);
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = inv;
        for (std::size_t k = 0; k < c; ++k) {
            const double xh = (row[k] - mu) * inv;
            (*xhat)[r * c + k] = xh;
            out[r * c + k] = xh * gd[k] + bd[k];
        }
    }
    return make_result(
        "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
        [x, gamma, beta, xhat, inv_std, rows, c](std::span<const double> g) {
            double* gx = grad_buffer(x);
            double* gg = grad_buffer(gamma);
            double* gb = grad_buffer(beta);
            const auto gd = gamma.data();
            std::vector<double> dxh(c);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* go = g.data() + r * c;
                const double* xh = xhat->data() + r * c;
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t k = 0; k < c; ++k) {
                    if (gg) gg[k] += go[k] * xh[k];
                    if (gb) gb[k] += go[k];
                    dxh[k] = go[k] * gd[k];
                    m1 += dxh[k];
                    m2 += dxh[k] * xh[k];
                }
                if (!gx) continue;
                m1 /= static_cast<double>(c);
                m2 /= static_cast<double>(c);
                for (std::size_t k = 0; k < c; ++k) {
                    gx[r * c + k] += (*inv_std)[r] * (dxh[k] - m1 - xh[k] * m2);
                }
            }
        });
}

}  // namespace hydra::ad
