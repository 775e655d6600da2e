#ifndef EROSEG_ATTACK_HPP
#define EROSEG_ATTACK_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "eroseg/metrics.hpp"
#include "eroseg/model.hpp"
#include "eroseg/parallel.hpp"
#include "eroseg/prng.hpp"
#include "eroseg/tensor.hpp"
#include "eroseg/text_util.hpp"

// Iterative l-inf sign-gradient attacks on segmentation inputs.
//
// The EroSeg attack selects sensitive pixels (correctly classified, maximum
// class probability below a threshold), raises the threshold over iterations
// as tau_t = 1 - (1 - tau0) * exp(-beta * t) so the perturbation spreads from
// fragile pixels toward stable ones, and maximizes a class-weighted masked
// cross-entropy. Plain PGD is the same loop with an all-ones mask and
// uniform weights.
//
// Batch items are attacked independently; with EROSEG_THREADS > 1 they run
// concurrently and the per-iteration trace is merged in batch-index order.
// The merged numbers are bit-identical to the single-threaded ones because
// every cross-pixel reduction folds per item first (see tensor.hpp).

namespace eroseg {

enum class AttackInit { kZero, kUniformInBall };
enum class MaskMode { kEroseg, kAll, kForeground, kBackground, kConfEq1, kConfLt1 };
enum class AttackKind { kEroseg, kPgd };

// "Confidence 1" in floating point means conf >= 1 - kConfOneEps.
constexpr double kConfOneEps = 1e-9;

inline const char* to_string(MaskMode m) {
    switch (m) {
        case MaskMode::kEroseg: return "eroseg";
        case MaskMode::kAll: return "all";
        case MaskMode::kForeground: return "foreground";
        case MaskMode::kBackground: return "background";
        case MaskMode::kConfEq1: return "conf-eq-1";
        case MaskMode::kConfLt1: return "conf-lt-1";
    }
    return "?";
}

inline MaskMode mask_mode_from_string(const std::string& s) {
    if (s == "eroseg") return MaskMode::kEroseg;
    if (s == "all") return MaskMode::kAll;
    if (s == "foreground") return MaskMode::kForeground;
    if (s == "background") return MaskMode::kBackground;
    if (s == "conf-eq-1") return MaskMode::kConfEq1;
    if (s == "conf-lt-1") return MaskMode::kConfLt1;
    throw ValidationError("unknown mask mode '" + s +
                          "'; valid: eroseg, all, foreground, background, conf-eq-1, conf-lt-1");
}

struct AttackConfig {
    double epsilon = 8.0 / 255.0;  // l-inf budget in image units
    double alpha = 0.001;          // sign-step size in image units
    int iters = 10;                // T
    double tau0 = 0.8;
    double beta = 0.8;
    double lambda_fg = 0.7;
    AttackInit init = AttackInit::kUniformInBall;
    MaskMode mask_mode = MaskMode::kEroseg;
    std::uint64_t seed = 0;

    // epsilon = 0 and alpha = 0 are permitted as degenerate budgets so that
    // zero-attack sanity checks can share the normal code path.
    void validate() const {
        if (!(epsilon >= 0.0 && epsilon <= 1.0))
            throw ValidationError("attack: epsilon must be in [0,1], got " + fmt_g12(epsilon));
        if (!(alpha >= 0.0)) throw ValidationError("attack: alpha must be >= 0");
        if (iters < 1) throw ValidationError("attack: iteration count T must be >= 1");
        if (!(tau0 > 0.0 && tau0 < 1.0))
            throw ValidationError("attack: tau0 must be in (0,1), got " + fmt_g12(tau0));
        if (!(beta > 0.0)) throw ValidationError("attack: beta must be > 0");
        if (!(lambda_fg >= 0.0 && lambda_fg <= 1.0))
            throw ValidationError("attack: lambda_fg must be in [0,1], got " + fmt_g12(lambda_fg));
    }
};

// tau_t = 1 - (1 - tau0) * exp(-beta * t): equals tau0 at t = 0, strictly
// increasing, below 1 for every finite t. In double precision tau(t)
// saturates to 1.0 once the gap underflows past 2^-53; gap()/log_gap() expose
// the exact complement for tests and for reasoning about the limit.
struct TauSchedule {
    double tau0 = 0.8;
    double beta = 0.8;

    double gap(int t) const { return (1.0 - tau0) * std::exp(-beta * static_cast<double>(t)); }
    double log_gap(int t) const { return std::log1p(-tau0) - beta * static_cast<double>(t); }
    double tau(int t) const { return 1.0 - gap(t); }
};

inline double tau_schedule(double tau0, double beta, int t) {
    return TauSchedule{tau0, beta}.tau(t);
}

// ---- per-pixel views of a softmax output ------------------------------------

// c_{i,j} = max over channels of p_c. Input [N,C,H,W] probabilities.
inline Tensor pixel_confidence(const Tensor& probs) {
    if (probs.rank() != 4)
        throw ShapeError("pixel_confidence: want [N,C,H,W], got " + dims_to_string(probs.dims()));
    const std::size_t n = probs.extent(0), c = probs.extent(1), h = probs.extent(2),
                      w = probs.extent(3);
    Tensor out(Dims{n, h, w});
    const double* pp = probs.values().data();
    double* po = out.values().data();
    const std::size_t plane = h * w, image = c * plane;
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t p = 0; p < plane; ++p) {
            const double* px = pp + ni * image + p;
            double m = px[0];
            for (std::size_t ci = 1; ci < c; ++ci) m = std::max(m, px[ci * plane]);
            po[ni * plane + p] = m;
        }
    }
    return out;
}

// argmax channel per pixel; ties break toward the lowest class index.
inline LabelMap predict(const Tensor& probs) {
    if (probs.rank() != 4)
        throw ShapeError("predict: want [N,C,H,W], got " + dims_to_string(probs.dims()));
    const std::size_t n = probs.extent(0), c = probs.extent(1), h = probs.extent(2),
                      w = probs.extent(3);
    LabelMap out(n, h, w);
    const double* pp = probs.values().data();
    const std::size_t plane = h * w, image = c * plane;
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t p = 0; p < plane; ++p) {
            const double* px = pp + ni * image + p;
            std::uint32_t best = 0;
            double bv = px[0];
            for (std::size_t ci = 1; ci < c; ++ci) {
                if (px[ci * plane] > bv) {
                    bv = px[ci * plane];
                    best = static_cast<std::uint32_t>(ci);
                }
            }
            out.v[ni * plane + p] = best;
        }
    }
    return out;
}

// Binary attack mask over pixels.
struct SensitiveMask {
    std::size_t n = 0, h = 0, w = 0;
    std::vector<std::uint8_t> v;

    SensitiveMask() = default;
    SensitiveMask(std::size_t n_, std::size_t h_, std::size_t w_, std::uint8_t fill = 0)
        : n(n_), h(h_), w(w_), v(n_ * h_ * w_, fill) {}

    std::uint64_t count() const {
        std::uint64_t c = 0;
        for (std::uint8_t b : v) c += b;
        return c;
    }
    double density() const { return v.empty() ? 0.0 : static_cast<double>(count()) / v.size(); }
};

// m = 1 iff confidence < tau (strict) and the pixel is currently classified
// correctly.
inline SensitiveMask sensitive_mask(const Tensor& conf, const LabelMap& preds,
                                    const LabelMap& labels, double tau) {
    if (conf.rank() != 3 || conf.extent(0) != preds.n || conf.extent(1) != preds.h ||
        conf.extent(2) != preds.w || !preds.same_dims(labels))
        throw ShapeError("sensitive_mask: confidence/prediction/label dims disagree");
    SensitiveMask m(preds.n, preds.h, preds.w);
    const double* cv = conf.values().data();
    for (std::size_t i = 0; i < m.v.size(); ++i)
        m.v[i] = (cv[i] < tau && preds.v[i] == labels.v[i]) ? 1 : 0;
    return m;
}

// lambda_fg where the label is foreground (non-zero), 1 - lambda_fg on
// background.
inline Tensor class_weights(const LabelMap& labels, double lambda_fg) {
    Tensor out(Dims{labels.n, labels.h, labels.w});
    double* po = out.values().data();
    for (std::size_t i = 0; i < labels.v.size(); ++i)
        po[i] = labels.v[i] != 0 ? lambda_fg : 1.0 - lambda_fg;
    return out;
}

namespace detail {

inline SensitiveMask build_mask(MaskMode mode, const Tensor& conf, const LabelMap& preds,
                                const LabelMap& labels, double tau) {
    switch (mode) {
        case MaskMode::kEroseg: return sensitive_mask(conf, preds, labels, tau);
        case MaskMode::kAll: {
            return SensitiveMask(labels.n, labels.h, labels.w, 1);
        }
        case MaskMode::kForeground: {
            SensitiveMask m(labels.n, labels.h, labels.w);
            for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] = labels.v[i] != 0 ? 1 : 0;
            return m;
        }
        case MaskMode::kBackground: {
            SensitiveMask m(labels.n, labels.h, labels.w);
            for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] = labels.v[i] == 0 ? 1 : 0;
            return m;
        }
        case MaskMode::kConfEq1: {
            SensitiveMask m(labels.n, labels.h, labels.w);
            const double* cv = conf.values().data();
            for (std::size_t i = 0; i < m.v.size(); ++i)
                m.v[i] = (cv[i] >= 1.0 - kConfOneEps && preds.v[i] == labels.v[i]) ? 1 : 0;
            return m;
        }
        case MaskMode::kConfLt1: {
            SensitiveMask m(labels.n, labels.h, labels.w);
            const double* cv = conf.values().data();
            for (std::size_t i = 0; i < m.v.size(); ++i)
                m.v[i] = (cv[i] < 1.0 - kConfOneEps && preds.v[i] == labels.v[i]) ? 1 : 0;
            return m;
        }
    }
    throw ContractError("unhandled mask mode");
}

}  // namespace detail

// L_t = (1/(N*H*W)) sum_{i,j} m * w * CE(logits, y). The normalizer is the
// total pixel count regardless of mask density; gradients w.r.t. logits are
// exactly zero at masked-out pixels. `pixel_count` lets a per-item slice use
// the full batch's normalizer; 0 means "use this tensor's own pixel count".
inline Tensor eroseg_loss(Graph& g, const Tensor& logits, const LabelMap& labels,
                          const SensitiveMask& mask, const Tensor& weights,
                          std::size_t pixel_count = 0) {
    if (mask.n != labels.n || mask.h != labels.h || mask.w != labels.w)
        throw ShapeError("eroseg_loss: mask dims do not match labels");
    if (weights.rank() != 3 || weights.extent(0) != labels.n || weights.extent(1) != labels.h ||
        weights.extent(2) != labels.w)
        throw ShapeError("eroseg_loss: weight dims do not match labels");

    Tensor coeffs(Dims{labels.n, labels.h, labels.w});
    const double* wv = weights.values().data();
    double* cv = coeffs.values().data();
    for (std::size_t i = 0; i < mask.v.size(); ++i) cv[i] = mask.v[i] ? wv[i] : 0.0;

    Tensor log_probs = log_softmax_channels(g, logits);
    Tensor ce = pixel_cross_entropy(g, log_probs, labels);
    Tensor s = weighted_sum(g, ce, coeffs);
    const std::size_t denom = pixel_count ? pixel_count : labels.size();
    return scale(g, s, 1.0 / static_cast<double>(denom));
}

// One projected sign step:
//   x' = clip_[0,1]( x_clean + clamp( (x_adv - x_clean) + alpha*sign(g), -eps, eps ) )
// with sign(0) = 0.
inline Tensor attack_step(const Tensor& x_adv, const Tensor& x_clean,
                          std::span<const double> grad, double alpha, double epsilon) {
    detail::check_same_dims(x_adv, x_clean, "attack_step");
    if (grad.size() != x_adv.size())
        throw ShapeError("attack_step: gradient size does not match input");
    Tensor out(x_adv.dims());
    const double* pa = x_adv.values().data();
    const double* pc = x_clean.values().data();
    double* po = out.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double s = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
        double delta = (pa[i] - pc[i]) + alpha * s;
        delta = std::clamp(delta, -epsilon, epsilon);
        po[i] = std::clamp(pc[i] + delta, 0.0, 1.0);
    }
    return out;
}

// ---- iterative attack loop ---------------------------------------------------

struct TraceRow {
    int t = 0;
    double tau = 0.0;
    double mask_density = 0.0;
    double loss = 0.0;
    double miou = 0.0;
};

struct AttackTrace {
    std::vector<TraceRow> rows;

    void write_csv(std::ostream& os) const {
        os << "t,tau_t,mask_density,loss,miou\n";
        for (const TraceRow& r : rows)
            os << r.t << "," << fmt_g12(r.tau) << "," << fmt_g12(r.mask_density) << ","
               << fmt_g12(r.loss) << "," << fmt_g12(r.miou) << "\n";
    }
};

struct AttackResult {
    Tensor adversarial;
    AttackTrace trace;
};

// Called after every projected step of every batch item; concurrent across
// items when EROSEG_THREADS > 1.
using StepObserver =
    std::function<void(std::size_t item, int t, std::span<const double> x_adv,
                       std::span<const double> x_clean)>;

namespace detail {

struct IterCell {
    double loss_sum = 0.0;       // masked weighted CE sum over the item's pixels
    std::uint64_t mask_count = 0;
    std::vector<std::uint64_t> confusion;  // C*C, gt-major
};

inline AttackResult run_attack(const SegNetTiny& model, const Tensor& images,
                               const LabelMap& labels, const AttackConfig& cfg, AttackKind kind,
                               const StepObserver& observer = nullptr) {
    cfg.validate();
    if (images.rank() != 4 || images.extent(1) != 3)
        throw ShapeError("attack: images must be [N,3,H,W], got " + dims_to_string(images.dims()));
    if (images.extent(0) != labels.n || images.extent(2) != labels.h ||
        images.extent(3) != labels.w)
        throw ShapeError("attack: image and label dims disagree");
    labels.validate_range(static_cast<std::uint32_t>(model.class_count()));

    const std::size_t n = labels.n, h = labels.h, w = labels.w;
    const std::size_t plane = h * w;
    const std::size_t item_elems = 3 * plane;
    const std::size_t total_pixels = n * plane;
    const double k = 1.0 / static_cast<double>(total_pixels);
    const int classes = model.class_count();
    const TauSchedule schedule{cfg.tau0, cfg.beta};

    AttackResult res;
    res.adversarial = Tensor(images.dims());
    std::vector<std::vector<IterCell>> cells(n);

    parallel_for(n, [&](std::size_t ni) {
        // Slice this item out of the batch.
        Tensor x_clean(Dims{1, 3, h, w});
        std::copy_n(images.values().data() + ni * item_elems, item_elems,
                    x_clean.values().data());
        LabelMap y(1, h, w);
        std::copy_n(labels.v.data() + ni * plane, plane, y.v.data());

        Tensor x_adv = x_clean.clone();
        if (cfg.init == AttackInit::kUniformInBall) {
            // One shared stream, row-major over [N,3,H,W]; each item jumps to
            // its own block so parallel order cannot change the draws.
            SplitMix64 rng(cfg.seed);
            rng.discard(ni * item_elems);
            double* pa = x_adv.values().data();
            for (std::size_t i = 0; i < item_elems; ++i) {
                const double delta = (2.0 * rng.next_double() - 1.0) * cfg.epsilon;
                pa[i] = std::clamp(pa[i] + delta, 0.0, 1.0);
            }
        }

        auto& item_cells = cells[ni];
        item_cells.resize(cfg.iters);
        const Tensor weights = kind == AttackKind::kPgd
                                   ? Tensor(Dims{1, h, w}, 1.0)
                                   : class_weights(y, cfg.lambda_fg);

        for (int t = 0; t < cfg.iters; ++t) {
            x_adv.set_requires_grad(true);
            Graph g;
            Tensor logits = model.forward(g, x_adv);
            Tensor log_probs = log_softmax_channels(g, logits);

            // Value-side views for mask construction.
            Tensor probs(log_probs.dims());
            {
                const double* lp = log_probs.values().data();
                double* pp = probs.values().data();
                for (std::size_t i = 0; i < probs.size(); ++i) pp[i] = std::exp(lp[i]);
            }
            const Tensor conf = pixel_confidence(probs);
            const LabelMap preds = predict(probs);
            const double tau = schedule.tau(t);
            const SensitiveMask mask =
                kind == AttackKind::kPgd
                    ? SensitiveMask(1, h, w, 1)
                    : build_mask(cfg.mask_mode, conf, preds, y, tau);

            Tensor coeffs(Dims{1, h, w});
            {
                const double* wv = weights.values().data();
                double* cv = coeffs.values().data();
                for (std::size_t i = 0; i < plane; ++i) cv[i] = mask.v[i] ? wv[i] : 0.0;
            }
            Tensor ce = pixel_cross_entropy(g, log_probs, y);
            Tensor s = weighted_sum(g, ce, coeffs);
            g.backward(s, k);

            IterCell& cell = item_cells[t];
            cell.loss_sum = s[0];
            cell.mask_count = mask.count();
            cell.confusion.assign(static_cast<std::size_t>(classes) * classes, 0);
            for (std::size_t i = 0; i < plane; ++i)
                ++cell.confusion[y.v[i] * static_cast<std::size_t>(classes) + preds.v[i]];

            Tensor next = attack_step(x_adv, x_clean, x_adv.grad(), cfg.alpha, cfg.epsilon);
            x_adv = next;
            if (observer) observer(ni, t, x_adv.values(), x_clean.values());
        }

        std::copy_n(x_adv.values().data(), item_elems,
                    res.adversarial.values().data() + ni * item_elems);
    });

    // Merge the per-item records in batch-index order.
    res.trace.rows.resize(cfg.iters);
    for (int t = 0; t < cfg.iters; ++t) {
        double loss_sum = 0.0;
        std::uint64_t mask_count = 0;
        ConfusionMatrix cm(classes);
        for (std::size_t ni = 0; ni < n; ++ni) {
            const IterCell& cell = cells[ni][t];
            loss_sum += cell.loss_sum;
            mask_count += cell.mask_count;
            for (int gt = 0; gt < classes; ++gt)
                for (int pr = 0; pr < classes; ++pr)
                    cm.add_count(gt, pr, cell.confusion[std::size_t(gt) * classes + pr]);
        }
        TraceRow& row = res.trace.rows[t];
        row.t = t;
        row.tau = schedule.tau(t);
        row.mask_density = static_cast<double>(mask_count) / static_cast<double>(total_pixels);
        row.loss = loss_sum * k;
        row.miou = miou(cm);
    }
    return res;
}

}  // namespace detail

inline AttackResult eroseg_attack(const SegNetTiny& model, const Tensor& images,
                                  const LabelMap& labels, const AttackConfig& cfg,
                                  const StepObserver& observer = nullptr) {
    return detail::run_attack(model, images, labels, cfg, AttackKind::kEroseg, observer);
}

// Plain PGD: mask identically 1, weights identically 1, i.e. sign-gradient
// ascent on the mean cross-entropy over all pixels.
inline AttackResult pgd_attack(const SegNetTiny& model, const Tensor& images,
                               const LabelMap& labels, const AttackConfig& cfg,
                               const StepObserver& observer = nullptr) {
    return detail::run_attack(model, images, labels, cfg, AttackKind::kPgd, observer);
}

}  // namespace eroseg

#endif  // EROSEG_ATTACK_HPP
