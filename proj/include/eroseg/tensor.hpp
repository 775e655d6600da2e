#ifndef EROSEG_TENSOR_HPP
#define EROSEG_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eroseg/errors.hpp"
#include "eroseg/labelmap.hpp"

// Dense double-precision tensors with a tape-based reverse-mode autodiff
// graph. Only the operations the toy segmentation pipeline needs are
// provided; there is no broadcasting engine.
//
// Every reduction runs in a fixed, documented index order so results are
// bit-reproducible:
//   - conv2d forward accumulates contributions per output element in
//     ascending (cin, ky, kx) order, starting from the bias;
//   - conv2d backward accumulates per element in ascending (cout, ky, kx)
//     order for input gradients and ascending (n, y, x) order for kernel
//     and bias gradients;
//   - log_softmax_channels scans channels in ascending order;
//   - sum and weighted_sum fold a straight ascending scan per leading-index
//     slice, then fold the per-slice partials in ascending leading order.

namespace eroseg {

using Dims = std::vector<std::size_t>;

inline std::size_t dims_product(const Dims& d) {
    std::size_t n = 1;
    for (std::size_t e : d) n *= e;
    return n;
}

inline std::string dims_to_string(const Dims& d) {
    std::string s = "[";
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(d[i]);
    }
    return s + "]";
}

struct TensorImpl {
    Dims dims;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily by Graph::backward
    bool requires_grad = false;
};

// Shared-payload handle: copies alias the same storage, clone() deep-copies.
class Tensor {
public:
    Tensor() : impl_(std::make_shared<TensorImpl>()) { impl_->value.assign(1, 0.0); }

    explicit Tensor(Dims dims, double fill = 0.0, bool requires_grad = false)
        : impl_(std::make_shared<TensorImpl>()) {
        impl_->dims = std::move(dims);
        impl_->value.assign(dims_product(impl_->dims), fill);
        impl_->requires_grad = requires_grad;
    }

    static Tensor scalar(double v) {
        Tensor t;
        t.impl_->value[0] = v;
        return t;
    }

    static Tensor from_values(Dims dims, std::vector<double> values,
                              bool requires_grad = false) {
        if (dims_product(dims) != values.size()) {
            throw ShapeError("tensor dims " + dims_to_string(dims) + " expect " +
                             std::to_string(dims_product(dims)) + " values, got " +
                             std::to_string(values.size()));
        }
        Tensor t;
        t.impl_->dims = std::move(dims);
        t.impl_->value = std::move(values);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    const Dims& dims() const noexcept { return impl_->dims; }
    std::size_t rank() const noexcept { return impl_->dims.size(); }
    std::size_t size() const noexcept { return impl_->value.size(); }
    std::size_t extent(std::size_t axis) const { return impl_->dims.at(axis); }

    bool requires_grad() const noexcept { return impl_->requires_grad; }
    void set_requires_grad(bool b) noexcept { impl_->requires_grad = b; }

    std::span<const double> values() const noexcept { return impl_->value; }
    std::span<double> values() noexcept { return impl_->value; }

    bool has_grad() const noexcept { return !impl_->grad.empty(); }
    std::span<const double> grad() const {
        if (impl_->grad.empty()) throw ContractError("tensor has no gradient; run backward first");
        return impl_->grad;
    }

    double operator[](std::size_t i) const { return impl_->value[i]; }
    double& operator[](std::size_t i) { return impl_->value[i]; }

    double at(std::initializer_list<std::size_t> idx) const { return impl_->value[flat(idx)]; }
    double& at(std::initializer_list<std::size_t> idx) { return impl_->value[flat(idx)]; }

    Tensor clone() const {
        Tensor t;
        t.impl_->dims = impl_->dims;
        t.impl_->value = impl_->value;
        return t;
    }

    bool same_dims(const Tensor& o) const noexcept { return impl_->dims == o.impl_->dims; }

    bool all_finite() const noexcept {
        for (double v : impl_->value)
            if (!std::isfinite(v)) return false;
        return true;
    }

    const std::shared_ptr<TensorImpl>& impl() const noexcept { return impl_; }

private:
    std::size_t flat(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != impl_->dims.size())
            throw ShapeError("index rank mismatch for tensor " + dims_to_string(impl_->dims));
        std::size_t off = 0;
        std::size_t axis = 0;
        for (std::size_t i : idx) {
            off = off * impl_->dims[axis] + i;
            ++axis;
        }
        return off;
    }

    std::shared_ptr<TensorImpl> impl_;
};

// Tape of executed operations. Backward visits nodes in exact reverse
// insertion order; each parameter's gradient is the sum of all path
// contributions. Single-threaded per instance.
class Graph {
public:
    void record(std::function<void()> backprop, std::initializer_list<Tensor> touched) {
        for (const Tensor& t : touched) touched_.push_back(t.impl());
        nodes_.push_back(std::move(backprop));
    }

    std::size_t node_count() const noexcept { return nodes_.size(); }

    // Seeds d(out)/d(out) = seed and propagates. Gradients of every tensor
    // touched by this graph are reset first, so each backward call is
    // self-contained.
    void backward(const Tensor& out, double seed = 1.0) {
        if (out.size() != 1)
            throw ContractError("backward requires a scalar output, got dims " +
                                dims_to_string(out.dims()));
        for (const auto& impl : touched_) impl->grad.assign(impl->value.size(), 0.0);
        auto& og = out.impl()->grad;
        if (og.empty()) og.assign(1, 0.0);
        og[0] = seed;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> nodes_;
    std::vector<std::shared_ptr<TensorImpl>> touched_;
};

namespace detail {

inline void check_same_dims(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_dims(b))
        throw ShapeError(std::string(op) + ": dims mismatch " + dims_to_string(a.dims()) +
                         " vs " + dims_to_string(b.dims()));
}

inline std::size_t leading_extent(const Dims& d) { return d.empty() ? 1 : d[0]; }

}  // namespace detail

// ---- elementwise ----------------------------------------------------------

inline Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
    detail::check_same_dims(a, b, "add");
    Tensor out(a.dims());
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    double* po = out.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
    if (a.requires_grad() || b.requires_grad()) {
        out.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        bool na = a.requires_grad(), nb = b.requires_grad();
        g.record(
            [ai, bi, oi, na, nb] {
                for (std::size_t i = 0; i < oi->grad.size(); ++i) {
                    if (na) ai->grad[i] += oi->grad[i];
                    if (nb) bi->grad[i] += oi->grad[i];
                }
            },
            {a, b, out});
    }
    return out;
}

inline Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
    detail::check_same_dims(a, b, "mul");
    Tensor out(a.dims());
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    double* po = out.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
    if (a.requires_grad() || b.requires_grad()) {
        out.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        bool na = a.requires_grad(), nb = b.requires_grad();
        g.record(
            [ai, bi, oi, na, nb] {
                for (std::size_t i = 0; i < oi->grad.size(); ++i) {
                    if (na) ai->grad[i] += bi->value[i] * oi->grad[i];
                    if (nb) bi->grad[i] += ai->value[i] * oi->grad[i];
                }
            },
            {a, b, out});
    }
    return out;
}

inline Tensor scale(Graph& g, const Tensor& x, double k) {
    Tensor out(x.dims());
    const double* px = x.values().data();
    double* po = out.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = px[i] * k;
    if (x.requires_grad()) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        g.record(
            [xi, oi, k] {
                for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += k * oi->grad[i];
            },
            {x, out});
    }
    return out;
}

inline Tensor relu(Graph& g, const Tensor& x) {
    Tensor out(x.dims());
    const double* px = x.values().data();
    double* po = out.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = px[i] > 0.0 ? px[i] : 0.0;
    if (x.requires_grad()) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        // Subgradient at exactly 0 is 0.
        g.record(
            [xi, oi] {
                for (std::size_t i = 0; i < oi->grad.size(); ++i)
                    if (xi->value[i] > 0.0) xi->grad[i] += oi->grad[i];
            },
            {x, out});
    }
    return out;
}

// ---- reductions ------------------------------------------------------------

namespace detail {

// Fold per leading-index slice, then fold the partials in ascending order.
// `coeffs` may be null (treated as all-ones).
inline double sliced_weighted_sum(const Dims& dims, const double* x, const double* coeffs) {
    const std::size_t lead = leading_extent(dims);
    std::size_t total = 1;
    for (std::size_t e : dims) total *= e;
    const std::size_t stride = lead == 0 ? 0 : total / lead;
    double acc = 0.0;
    for (std::size_t s = 0; s < lead; ++s) {
        const double* xs = x + s * stride;
        double part = 0.0;
        if (coeffs) {
            const double* cs = coeffs + s * stride;
            for (std::size_t i = 0; i < stride; ++i) part += cs[i] * xs[i];
        } else {
            for (std::size_t i = 0; i < stride; ++i) part += xs[i];
        }
        acc += part;
    }
    return acc;
}

}  // namespace detail

inline Tensor sum(Graph& g, const Tensor& x) {
    Tensor out = Tensor::scalar(detail::sliced_weighted_sum(x.dims(), x.values().data(), nullptr));
    if (x.requires_grad()) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        g.record(
            [xi, oi] {
                const double up = oi->grad[0];
                for (std::size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += up;
            },
            {x, out});
    }
    return out;
}

// sum(coeffs * x). Coefficients are constants: no gradient flows into them,
// and gradient w.r.t. x is exactly zero wherever the coefficient is zero.
inline Tensor weighted_sum(Graph& g, const Tensor& x, const Tensor& coeffs) {
    detail::check_same_dims(x, coeffs, "weighted_sum");
    Tensor out =
        Tensor::scalar(detail::sliced_weighted_sum(x.dims(), x.values().data(), coeffs.values().data()));
    if (x.requires_grad()) {
        out.set_requires_grad(true);
        auto xi = x.impl(), ci = coeffs.impl(), oi = out.impl();
        g.record(
            [xi, ci, oi] {
                const double up = oi->grad[0];
                for (std::size_t i = 0; i < xi->grad.size(); ++i)
                    if (ci->value[i] != 0.0) xi->grad[i] += ci->value[i] * up;
            },
            {x, coeffs, out});
    }
    return out;
}

// ---- conv / softmax / cross-entropy ---------------------------------------

// 3x3 cross-correlation with zero padding 1 and per-channel bias; spatial
// dims are preserved. Differentiable w.r.t. input, kernel, and bias.
inline Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel, const Tensor& bias) {
    if (input.rank() != 4)
        throw ShapeError("conv2d: input must be [N,Cin,H,W], got " + dims_to_string(input.dims()));
    if (kernel.rank() != 4 || kernel.extent(2) != 3 || kernel.extent(3) != 3)
        throw ShapeError("conv2d: kernel must be [Cout,Cin,3,3], got " +
                         dims_to_string(kernel.dims()));
    if (kernel.extent(1) != input.extent(1))
        throw ShapeError("conv2d: kernel Cin " + std::to_string(kernel.extent(1)) +
                         " != input Cin " + std::to_string(input.extent(1)));
    if (bias.rank() != 1 || bias.extent(0) != kernel.extent(0))
        throw ShapeError("conv2d: bias must be [Cout], got " + dims_to_string(bias.dims()));

    const std::size_t n = input.extent(0), cin = input.extent(1), h = input.extent(2),
                      w = input.extent(3), cout = kernel.extent(0);
    Tensor out(Dims{n, cout, h, w});

    const double* in = input.values().data();
    const double* kn = kernel.values().data();
    const double* bs = bias.values().data();
    double* ot = out.values().data();
    const std::size_t plane = h * w;

    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t co = 0; co < cout; ++co) {
            double* op = ot + (ni * cout + co) * plane;
            const double b = bs[co];
            for (std::size_t i = 0; i < plane; ++i) op[i] = b;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double* ip = in + (ni * cin + ci) * plane;
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const double kv = kn[((co * cin + ci) * 3 + ky) * 3 + kx];
                        const std::size_t y0 = ky == 0 ? 1 : 0;
                        const std::size_t y1 = ky == 2 ? h - 1 : h;
                        const std::size_t x0 = kx == 0 ? 1 : 0;
                        const std::size_t x1 = kx == 2 ? w - 1 : w;
                        for (std::size_t y = y0; y < y1; ++y) {
                            double* orow = op + y * w;
                            const double* irow = ip + (y + ky - 1) * w;
                            for (std::size_t x = x0; x < x1; ++x)
                                orow[x] += kv * irow[x + kx - 1];
                        }
                    }
                }
            }
        }
    }

    if (input.requires_grad() || kernel.requires_grad() || bias.requires_grad()) {
        out.set_requires_grad(true);
        auto ii = input.impl(), ki = kernel.impl(), bi = bias.impl(), oi = out.impl();
        bool ni_ = input.requires_grad(), nk = kernel.requires_grad(), nb = bias.requires_grad();
        g.record(
            [ii, ki, bi, oi, ni_, nk, nb, n, cin, cout, h, w, plane] {
                const double* go = oi->grad.data();
                if (ni_) {
                    double* gi = ii->grad.data();
                    const double* kn = ki->value.data();
                    for (std::size_t ni2 = 0; ni2 < n; ++ni2) {
                        for (std::size_t co = 0; co < cout; ++co) {
                            const double* gop = go + (ni2 * cout + co) * plane;
                            for (std::size_t ci = 0; ci < cin; ++ci) {
                                double* gip = gi + (ni2 * cin + ci) * plane;
                                for (std::size_t ky = 0; ky < 3; ++ky) {
                                    for (std::size_t kx = 0; kx < 3; ++kx) {
                                        const double kv = kn[((co * cin + ci) * 3 + ky) * 3 + kx];
                                        const std::size_t y0 = ky == 0 ? 1 : 0;
                                        const std::size_t y1 = ky == 2 ? h - 1 : h;
                                        const std::size_t x0 = kx == 0 ? 1 : 0;
                                        const std::size_t x1 = kx == 2 ? w - 1 : w;
                                        for (std::size_t y = y0; y < y1; ++y) {
                                            const double* grow = gop + y * w;
                                            double* girow = gip + (y + ky - 1) * w;
                                            for (std::size_t x = x0; x < x1; ++x)
                                                girow[x + kx - 1] += kv * grow[x];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                if (nk) {
                    double* gk = ki->grad.data();
                    const double* in = ii->value.data();
                    for (std::size_t co = 0; co < cout; ++co) {
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            for (std::size_t ky = 0; ky < 3; ++ky) {
                                for (std::size_t kx = 0; kx < 3; ++kx) {
                                    const std::size_t y0 = ky == 0 ? 1 : 0;
                                    const std::size_t y1 = ky == 2 ? h - 1 : h;
                                    const std::size_t x0 = kx == 0 ? 1 : 0;
                                    const std::size_t x1 = kx == 2 ? w - 1 : w;
                                    double acc = 0.0;
                                    for (std::size_t ni2 = 0; ni2 < n; ++ni2) {
                                        const double* gop = go + (ni2 * cout + co) * plane;
                                        const double* ip = in + (ni2 * cin + ci) * plane;
                                        for (std::size_t y = y0; y < y1; ++y) {
                                            const double* grow = gop + y * w;
                                            const double* irow = ip + (y + ky - 1) * w;
                                            double part = 0.0;
                                            for (std::size_t x = x0; x < x1; ++x)
                                                part += grow[x] * irow[x + kx - 1];
                                            acc += part;
                                        }
                                    }
                                    gk[((co * cin + ci) * 3 + ky) * 3 + kx] += acc;
                                }
                            }
                        }
                    }
                }
                if (nb) {
                    double* gb = bi->grad.data();
                    for (std::size_t co = 0; co < cout; ++co) {
                        double acc = 0.0;
                        for (std::size_t ni2 = 0; ni2 < n; ++ni2) {
                            const double* gop = go + (ni2 * cout + co) * plane;
                            double part = 0.0;
                            for (std::size_t i = 0; i < plane; ++i) part += gop[i];
                            acc += part;
                        }
                        gb[co] += acc;
                    }
                }
            },
            {input, kernel, bias, out});
    }
    return out;
}

// Numerically stable log-softmax over the channel axis, per pixel.
inline Tensor log_softmax_channels(Graph& g, const Tensor& logits) {
    if (logits.rank() != 4)
        throw ShapeError("log_softmax_channels: want [N,C,H,W], got " +
                         dims_to_string(logits.dims()));
    const std::size_t n = logits.extent(0), c = logits.extent(1), h = logits.extent(2),
                      w = logits.extent(3);
    if (c < 2) throw ValidationError("log_softmax_channels: need C >= 2, got " + std::to_string(c));

    Tensor out(logits.dims());
    const double* in = logits.values().data();
    double* ot = out.values().data();
    const std::size_t plane = h * w;
    const std::size_t image = c * plane;

    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t p = 0; p < plane; ++p) {
            const double* px = in + ni * image + p;
            double m = px[0];
            for (std::size_t ci = 1; ci < c; ++ci) m = std::max(m, px[ci * plane]);
            double s = 0.0;
            for (std::size_t ci = 0; ci < c; ++ci) s += std::exp(px[ci * plane] - m);
            const double lse = m + std::log(s);
            double* po = ot + ni * image + p;
            for (std::size_t ci = 0; ci < c; ++ci) po[ci * plane] = px[ci * plane] - lse;
        }
    }

    if (logits.requires_grad()) {
        out.set_requires_grad(true);
        auto li = logits.impl(), oi = out.impl();
        g.record(
            [li, oi, n, c, plane, image] {
                const double* go = oi->grad.data();
                const double* ov = oi->value.data();
                double* gl = li->grad.data();
                for (std::size_t ni = 0; ni < n; ++ni) {
                    for (std::size_t p = 0; p < plane; ++p) {
                        const std::size_t base = ni * image + p;
                        double tot = 0.0;
                        for (std::size_t ci = 0; ci < c; ++ci) tot += go[base + ci * plane];
                        for (std::size_t ci = 0; ci < c; ++ci) {
                            const std::size_t k = base + ci * plane;
                            gl[k] += go[k] - std::exp(ov[k]) * tot;
                        }
                    }
                }
            },
            {logits, out});
    }
    return out;
}

// Per-pixel -log p_y. No reduction; masking and averaging are the caller's
// job. Input is expected to be log-probabilities.
inline Tensor pixel_cross_entropy(Graph& g, const Tensor& log_probs, const LabelMap& labels) {
    if (log_probs.rank() != 4)
        throw ShapeError("pixel_cross_entropy: want [N,C,H,W], got " +
                         dims_to_string(log_probs.dims()));
    const std::size_t n = log_probs.extent(0), c = log_probs.extent(1), h = log_probs.extent(2),
                      w = log_probs.extent(3);
    if (labels.n != n || labels.h != h || labels.w != w)
        throw ShapeError("pixel_cross_entropy: labels [" + std::to_string(labels.n) + "," +
                         std::to_string(labels.h) + "," + std::to_string(labels.w) +
                         "] do not match log_probs " + dims_to_string(log_probs.dims()));
    labels.validate_range(static_cast<std::uint32_t>(c));

    Tensor out(Dims{n, h, w});
    const double* lp = log_probs.values().data();
    double* po = out.values().data();
    const std::size_t plane = h * w;
    const std::size_t image = c * plane;
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t p = 0; p < plane; ++p) {
            const std::uint32_t y = labels.v[ni * plane + p];
            po[ni * plane + p] = -lp[ni * image + y * plane + p];
        }
    }

    if (log_probs.requires_grad()) {
        out.set_requires_grad(true);
        auto li = log_probs.impl(), oi = out.impl();
        auto lv = labels.v;  // copy; label maps are small
        g.record(
            [li, oi, lv, n, plane, image] {
                const double* go = oi->grad.data();
                double* gl = li->grad.data();
                for (std::size_t ni = 0; ni < n; ++ni) {
                    for (std::size_t p = 0; p < plane; ++p) {
                        const std::uint32_t y = lv[ni * plane + p];
                        gl[ni * image + y * plane + p] -= go[ni * plane + p];
                    }
                }
            },
            {log_probs, out});
    }
    return out;
}

}  // namespace eroseg

#endif  // EROSEG_TENSOR_HPP
