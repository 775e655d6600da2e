#ifndef EROSEG_GRADSUITE_HPP
#define EROSEG_GRADSUITE_HPP

#include <cmath>
#include <string>
#include <vector>

#include "eroseg/attack.hpp"
#include "eroseg/gradcheck.hpp"
#include "eroseg/model.hpp"
#include "eroseg/prng.hpp"

// Randomized finite-difference validation of every differentiable operation,
// from single ops up to the full model loss. Instances are drawn from a
// seeded stream so a run is reproducible; ReLU inputs are kept away from the
// kink so central differences stay valid.

namespace eroseg {

struct GradSuiteEntry {
    std::string op;
    int trials = 0;
    double max_rel_err = 0.0;
};

struct GradSuiteReport {
    std::vector<GradSuiteEntry> entries;
    double max_rel_err = 0.0;

    bool pass(double threshold) const { return max_rel_err < threshold; }
};

namespace detail {

inline double u(SplitMix64& rng, double lo, double hi) {
    return lo + (hi - lo) * rng.next_double();
}

inline Tensor random_tensor(SplitMix64& rng, Dims dims, double lo, double hi,
                            bool requires_grad = true) {
    Tensor t(std::move(dims), 0.0, requires_grad);
    for (double& v : t.values()) v = u(rng, lo, hi);
    return t;
}

inline double conv_instance(SplitMix64& rng, double h) {
    const std::size_t n = 1 + rng.next_below(2), cin = 1 + rng.next_below(3),
                      cout = 1 + rng.next_below(3), hh = 3 + rng.next_below(3),
                      ww = 3 + rng.next_below(3);
    Tensor input = random_tensor(rng, {n, cin, hh, ww}, -1.0, 1.0);
    Tensor kernel = random_tensor(rng, {cout, cin, 3, 3}, -1.0, 1.0);
    Tensor bias = random_tensor(rng, {cout}, -0.5, 0.5);
    Tensor coeffs = random_tensor(rng, {n, cout, hh, ww}, -1.0, 1.0, false);
    auto fn = [&](Graph& g) { return weighted_sum(g, conv2d(g, input, kernel, bias), coeffs); };
    return grad_check(fn, {input, kernel, bias}, h).max_rel_err;
}

inline double relu_instance(SplitMix64& rng, double h) {
    // Magnitudes in [0.2, 1.2] with random signs keep |x*y| >= 0.04, far from
    // the ReLU kink relative to the step.
    const std::size_t m = 8 + rng.next_below(25);
    Tensor x(Dims{m}, 0.0, true), y(Dims{m}, 0.0, true);
    for (std::size_t i = 0; i < m; ++i) {
        x[i] = u(rng, 0.2, 1.2) * (rng.next_below(2) ? 1.0 : -1.0);
        y[i] = u(rng, 0.2, 1.2) * (rng.next_below(2) ? 1.0 : -1.0);
    }
    auto fn = [&](Graph& g) { return sum(g, relu(g, mul(g, x, y))); };
    return grad_check(fn, {x, y}, h).max_rel_err;
}

inline double softmax_ce_instance(SplitMix64& rng, double h) {
    const std::size_t n = 1 + rng.next_below(2), c = 2 + rng.next_below(3),
                      hh = 2 + rng.next_below(3), ww = 2 + rng.next_below(3);
    Tensor logits = random_tensor(rng, {n, c, hh, ww}, -2.0, 2.0);
    LabelMap labels(n, hh, ww);
    for (auto& v : labels.v) v = static_cast<std::uint32_t>(rng.next_below(c));
    // Mixed zero/positive coefficients also exercise the masked-out path.
    Tensor coeffs(Dims{n, hh, ww});
    for (double& v : coeffs.values()) v = rng.next_below(4) == 0 ? 0.0 : u(rng, 0.1, 1.0);
    const double k = 1.0 / static_cast<double>(labels.size());
    auto fn = [&](Graph& g) {
        return scale(g, weighted_sum(g, pixel_cross_entropy(g, log_softmax_channels(g, logits),
                                                            labels),
                                     coeffs),
                     k);
    };
    return grad_check(fn, {logits}, h).max_rel_err;
}

// Full pipeline: model forward into the class-weighted masked loss,
// differentiated w.r.t. the input image and a subset of the parameters
// (layer 2's kernel mirrors layer 1's structure and is skipped for speed).
inline double model_loss_instance(SplitMix64& rng, double h, const GradFault& fault) {
    for (int attempt = 0;; ++attempt) {
        const std::size_t hh = 5 + rng.next_below(2), ww = 5 + rng.next_below(2);
        const int classes = 3 + static_cast<int>(rng.next_below(2));
        SegNetTiny model = SegNetTiny::init(rng.next_u64(), classes);
        Tensor images = random_tensor(rng, {1, 3, hh, ww}, 0.0, 1.0);
        LabelMap labels(1, hh, ww);
        for (auto& v : labels.v)
            v = static_cast<std::uint32_t>(rng.next_below(static_cast<std::uint64_t>(classes)));
        SensitiveMask mask(1, hh, ww);
        for (auto& v : mask.v) v = rng.next_below(3) ? 1 : 0;
        const Tensor weights = class_weights(labels, u(rng, 0.3, 0.9));

        // Central differences need every ReLU pre-activation clear of 0.
        {
            Graph probe;
            Tensor a1 = conv2d(probe, images, model.parameters()[0], model.parameters()[1]);
            Tensor a2 = conv2d(probe, relu(probe, a1), model.parameters()[2],
                               model.parameters()[3]);
            bool near_kink = false;
            for (double v : a1.values())
                if (std::abs(v) < 1e-4) near_kink = true;
            for (double v : a2.values())
                if (std::abs(v) < 1e-4) near_kink = true;
            if (near_kink && attempt < 8) continue;
        }

        auto params = model.parameters();
        auto fn = [&](Graph& g) {
            return eroseg_loss(g, model.forward(g, images), labels, mask, weights);
        };
        return grad_check(fn, {images, params[0], params[1], params[3], params[4], params[5]}, h,
                          fault)
            .max_rel_err;
    }
}

}  // namespace detail

// Runs ~trials randomized instances split across the op families. The fault
// hook corrupts one autodiff gradient in the first conv instance so callers
// can verify the suite actually detects broken gradients.
inline GradSuiteReport gradient_suite(int trials = 100, double h = 1e-6,
                                      std::uint64_t seed = 0x5eb5ac1e5ULL,
                                      bool inject_fault = false) {
    if (trials < 4) throw ValidationError("gradient suite needs at least 4 trials");
    SplitMix64 rng(seed);
    GradSuiteReport rep;

    const int n_conv = trials / 4;
    const int n_relu = trials * 15 / 100;
    const int n_sce = trials / 4;
    const int n_model = trials - n_conv - n_relu - n_sce;

    GradSuiteEntry conv{"conv2d", n_conv, 0.0};
    for (int i = 0; i < n_conv; ++i) {
        GradFault fault;
        if (inject_fault && i == 0) fault = GradFault{true, 1, 0, 2.0};
        SplitMix64 scratch(rng.next_u64());
        double e = 0.0;
        if (fault.active) {
            const std::size_t n = 1, cin = 2, cout = 2, hh = 4, ww = 4;
            Tensor input = detail::random_tensor(scratch, {n, cin, hh, ww}, -1.0, 1.0);
            Tensor kernel = detail::random_tensor(scratch, {cout, cin, 3, 3}, -1.0, 1.0);
            Tensor bias = detail::random_tensor(scratch, {cout}, -0.5, 0.5);
            auto fn = [&](Graph& g) { return sum(g, conv2d(g, input, kernel, bias)); };
            e = grad_check(fn, {input, kernel, bias}, h, fault).max_rel_err;
        } else {
            e = detail::conv_instance(scratch, h);
        }
        conv.max_rel_err = std::max(conv.max_rel_err, e);
    }
    rep.entries.push_back(conv);

    GradSuiteEntry rl{"relu", n_relu, 0.0};
    for (int i = 0; i < n_relu; ++i) {
        SplitMix64 scratch(rng.next_u64());
        rl.max_rel_err = std::max(rl.max_rel_err, detail::relu_instance(scratch, h));
    }
    rep.entries.push_back(rl);

    GradSuiteEntry sce{"log_softmax_cross_entropy", n_sce, 0.0};
    for (int i = 0; i < n_sce; ++i) {
        SplitMix64 scratch(rng.next_u64());
        sce.max_rel_err = std::max(sce.max_rel_err, detail::softmax_ce_instance(scratch, h));
    }
    rep.entries.push_back(sce);

    GradSuiteEntry ml{"model_eroseg_loss", n_model, 0.0};
    for (int i = 0; i < n_model; ++i) {
        SplitMix64 scratch(rng.next_u64());
        ml.max_rel_err = std::max(ml.max_rel_err, detail::model_loss_instance(scratch, h, {}));
    }
    rep.entries.push_back(ml);

    for (const GradSuiteEntry& e : rep.entries)
        rep.max_rel_err = std::max(rep.max_rel_err, e.max_rel_err);
    return rep;
}

}  // namespace eroseg

#endif  // EROSEG_GRADSUITE_HPP
