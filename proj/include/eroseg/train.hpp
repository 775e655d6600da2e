#ifndef EROSEG_TRAIN_HPP
#define EROSEG_TRAIN_HPP

#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "eroseg/attack.hpp"
#include "eroseg/dataset.hpp"
#include "eroseg/metrics.hpp"
#include "eroseg/model.hpp"

// Clean training and adversarial training for the toy segmentation model.
//
// Everything is a pure function of (dataset bytes, config, seed). Plain
// gradient descent with a fixed learning rate: no momentum or adaptive state,
// so trajectories are easy to reproduce in any implementation. Seed use is
// layered through one SplitMix64 root stream:
//   seed_init    = root.next_u64()   (model initialization)
//   seed_shuffle = root.next_u64()   (epoch batch order, Fisher-Yates)
//   seed_attack  = root.next_u64()   (root of one inner-attack seed per batch,
//                                     drawn in (epoch, batch) order)
// Batches are consecutive chunks of the permuted index list; a short tail
// batch is kept.

namespace eroseg {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 16;
    double lr = 0.05;
    std::uint64_t seed = 1;
    double lambda_balance = 1.0;   // weight of the adversarial loss term
    AttackConfig inner;            // inner maximizer for adversarial training
    AttackKind inner_kind = AttackKind::kEroseg;
    int eval_robust_every = 0;     // 0 = only after the last epoch
    std::uint64_t config_hash = 0; // recorded into the checkpoint metadata

    void validate() const {
        if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
        if (batch_size < 1) throw ValidationError("train: batch size must be >= 1");
        if (!(lr > 0.0)) throw ValidationError("train: learning rate must be > 0");
        if (!(lambda_balance >= 0.0))
            throw ValidationError("train: lambda_balance must be >= 0");
        inner.validate();
    }
};

// Combined objective of the min-max formulation: clean + lambda * adversarial.
inline double adv_objective(double clean_loss, double adv_loss, double lambda_balance) {
    return clean_loss + lambda_balance * adv_loss;
}

struct EpochRecord {
    int epoch = 0;
    double clean_loss = 0.0;
    double adv_loss = 0.0;    // nan when the epoch had no adversarial term
    double clean_miou = 0.0;
    double robust_miou = 0.0; // nan when not evaluated that epoch
};

struct TrainResult {
    SegNetTiny model;
    std::vector<EpochRecord> history;
};

inline void write_metrics_csv(std::ostream& os, const std::vector<EpochRecord>& history) {
    os << "epoch,clean_loss,adv_loss,clean_miou,robust_miou\n";
    for (const EpochRecord& r : history)
        os << r.epoch << "," << fmt_g12(r.clean_loss) << "," << fmt_g12(r.adv_loss) << ","
           << fmt_g12(r.clean_miou) << "," << fmt_g12(r.robust_miou) << "\n";
}

struct EvalResult {
    double clean_miou = 0.0;
    double robust_miou = 0.0;
    AttackTrace trace;
};

namespace detail {

inline LabelMap predict_images(const SegNetTiny& model, const Tensor& images) {
    Graph g;
    Tensor log_probs = log_softmax_channels(g, model.forward(g, images));
    Tensor probs(log_probs.dims());
    const double* lp = log_probs.values().data();
    double* pp = probs.values().data();
    for (std::size_t i = 0; i < probs.size(); ++i) pp[i] = std::exp(lp[i]);
    return predict(probs);
}

inline double clean_miou_of(const SegNetTiny& model, const Dataset& ds) {
    return miou(ConfusionMatrix::from(predict_images(model, ds.images), ds.labels,
                                      model.class_count()));
}

inline void gather_batch(const Dataset& ds, const std::vector<std::size_t>& order,
                         std::size_t begin, std::size_t end, Tensor& images, LabelMap& labels) {
    const std::size_t h = ds.height(), w = ds.width();
    const std::size_t plane = h * w, item = 3 * plane;
    const std::size_t b = end - begin;
    images = Tensor(Dims{b, 3, h, w});
    labels = LabelMap(b, h, w);
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t src = order[begin + i];
        std::copy_n(ds.images.values().data() + src * item, item,
                    images.values().data() + i * item);
        std::copy_n(ds.labels.v.data() + src * plane, plane, labels.v.data() + i * plane);
    }
}

inline Tensor mean_ce_loss(Graph& g, const SegNetTiny& model, const Tensor& images,
                           const LabelMap& labels) {
    Tensor log_probs = log_softmax_channels(g, model.forward(g, images));
    Tensor ce = pixel_cross_entropy(g, log_probs, labels);
    Tensor ones(Dims{labels.n, labels.h, labels.w}, 1.0);
    Tensor s = weighted_sum(g, ce, ones);
    return scale(g, s, 1.0 / static_cast<double>(labels.size()));
}

inline TrainResult train_loop(const Dataset& train_ds, const Dataset& val_ds,
                              const TrainConfig& cfg, bool adversarial) {
    cfg.validate();
    if (train_ds.count() == 0) throw ValidationError("train: empty dataset");

    SplitMix64 root(cfg.seed);
    const std::uint64_t seed_init = root.next_u64();
    const std::uint64_t seed_shuffle = root.next_u64();
    const std::uint64_t seed_attack = root.next_u64();

    TrainResult res;
    res.model = SegNetTiny::init(seed_init, train_ds.class_count);
    SplitMix64 shuffle_rng(seed_shuffle);
    SplitMix64 attack_rng(seed_attack);
    std::vector<Tensor> params = res.model.parameters();

    const std::size_t n = train_ds.count();
    std::vector<std::size_t> order(n);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = n - 1; i > 0; --i) {
            const std::size_t j = shuffle_rng.next_below(i + 1);
            std::swap(order[i], order[j]);
        }

        double clean_sum = 0.0, adv_sum = 0.0;
        int batches = 0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t end = std::min(n, begin + cfg.batch_size);
            Tensor images;
            LabelMap labels;
            gather_batch(train_ds, order, begin, end, images, labels);

            // Inner maximization first: the perturbation is treated as a
            // fixed input once generated, so no second-order terms reach the
            // parameter step.
            Tensor adv_images;
            AttackConfig inner = cfg.inner;
            if (adversarial) {
                inner.seed = attack_rng.next_u64();
                adv_images =
                    run_attack(res.model, images, labels, inner, cfg.inner_kind).adversarial;
            }

            Graph g;
            Tensor clean_loss = mean_ce_loss(g, res.model, images, labels);
            Tensor total = clean_loss;
            Tensor adv_loss;
            if (adversarial) {
                adv_loss = mean_ce_loss(g, res.model, adv_images, labels);
                total = add(g, clean_loss, scale(g, adv_loss, cfg.lambda_balance));
            }
            g.backward(total);

            if (!std::isfinite(total[0]))
                throw TrainingError("training loss diverged to " + fmt_g12(total[0]), epoch,
                                    batches);

            for (Tensor& p : params) {
                auto grad = p.grad();
                auto vals = p.values();
                for (std::size_t i = 0; i < vals.size(); ++i) vals[i] -= cfg.lr * grad[i];
            }

            clean_sum += clean_loss[0];
            if (adversarial) adv_sum += adv_loss[0];
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.clean_loss = clean_sum / batches;
        rec.adv_loss = adversarial ? adv_sum / batches : std::nan("");
        rec.clean_miou = clean_miou_of(res.model, val_ds);
        const bool last = epoch == cfg.epochs - 1;
        const bool scheduled =
            cfg.eval_robust_every > 0 && (epoch + 1) % cfg.eval_robust_every == 0;
        if (adversarial && (last || scheduled)) {
            const AttackResult r =
                run_attack(res.model, val_ds.images, val_ds.labels, cfg.inner, cfg.inner_kind);
            rec.robust_miou =
                miou(ConfusionMatrix::from(predict_images(res.model, r.adversarial),
                                           val_ds.labels, res.model.class_count()));
        } else {
            rec.robust_miou = std::nan("");
        }
        res.history.push_back(rec);
    }

    res.model.set_training_meta(static_cast<std::uint32_t>(cfg.epochs), cfg.config_hash);
    return res;
}

}  // namespace detail

inline TrainResult train_clean(const Dataset& train_ds, const Dataset& val_ds,
                               const TrainConfig& cfg) {
    return detail::train_loop(train_ds, val_ds, cfg, /*adversarial=*/false);
}

inline TrainResult adv_train(const Dataset& train_ds, const Dataset& val_ds,
                             const TrainConfig& cfg) {
    return detail::train_loop(train_ds, val_ds, cfg, /*adversarial=*/true);
}

// Runs the attack against the checkpointed model on a dataset and scores the
// adversarial inputs.
inline EvalResult evaluate_under_attack(const SegNetTiny& model, const Dataset& ds,
                                        const AttackConfig& cfg, AttackKind kind) {
    if (model.class_count() != ds.class_count)
        throw ValidationError("evaluate: checkpoint has " + std::to_string(model.class_count()) +
                              " classes but dataset declares " + std::to_string(ds.class_count));
    EvalResult out;
    out.clean_miou = detail::clean_miou_of(model, ds);
    AttackResult r = detail::run_attack(model, ds.images, ds.labels, cfg, kind);
    out.robust_miou = miou(ConfusionMatrix::from(detail::predict_images(model, r.adversarial),
                                                 ds.labels, model.class_count()));
    out.trace = std::move(r.trace);
    return out;
}

}  // namespace eroseg

#endif  // EROSEG_TRAIN_HPP
