#ifndef EROSEG_METRICS_HPP
#define EROSEG_METRICS_HPP

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "eroseg/labelmap.hpp"
#include "eroseg/text_util.hpp"

namespace eroseg {

// C x C pixel counts; entry (gt, pred) counts pixels with ground truth gt
// predicted as pred.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int class_count)
        : c_(class_count), counts_(static_cast<std::size_t>(class_count) * class_count, 0) {
        if (class_count < 2)
            throw ValidationError("confusion matrix needs >= 2 classes, got " +
                                  std::to_string(class_count));
    }

    static ConfusionMatrix from(const LabelMap& preds, const LabelMap& labels, int class_count) {
        ConfusionMatrix cm(class_count);
        cm.add(preds, labels);
        return cm;
    }

    void add(const LabelMap& preds, const LabelMap& labels) {
        if (!preds.same_dims(labels))
            throw ShapeError("confusion: prediction and label dims differ");
        const auto c = static_cast<std::uint32_t>(c_);
        preds.validate_range(c);
        labels.validate_range(c);
        for (std::size_t i = 0; i < labels.v.size(); ++i)
            ++counts_[labels.v[i] * static_cast<std::size_t>(c_) + preds.v[i]];
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        if (o.c_ != c_) throw ShapeError("confusion: class counts differ");
        for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
        return *this;
    }

    std::uint64_t at(int gt, int pred) const {
        return counts_[static_cast<std::size_t>(gt) * c_ + pred];
    }

    void add_count(int gt, int pred, std::uint64_t count) {
        counts_[static_cast<std::size_t>(gt) * c_ + pred] += count;
    }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (std::uint64_t v : counts_) t += v;
        return t;
    }

    int class_count() const noexcept { return c_; }

private:
    int c_;
    std::vector<std::uint64_t> counts_;
};

struct IouReport {
    std::vector<double> per_class;  // valid only where present
    std::vector<bool> present;      // class appears in ground truth or prediction
    double miou = 0.0;
};

// IoU per class = TP / (TP + FP + FN). Classes absent from both ground truth
// and prediction are excluded from the mean so a batch lacking a class does
// not deflate the score; if no class is present at all the mean is undefined.
inline IouReport iou_report(const ConfusionMatrix& cm) {
    const int c = cm.class_count();
    IouReport rep;
    rep.per_class.assign(c, 0.0);
    rep.present.assign(c, false);
    double sum = 0.0;
    int n_present = 0;
    for (int k = 0; k < c; ++k) {
        std::uint64_t row = 0, col = 0;
        for (int j = 0; j < c; ++j) {
            row += cm.at(k, j);
            col += cm.at(j, k);
        }
        if (row + col == 0) continue;
        rep.present[k] = true;
        const std::uint64_t tp = cm.at(k, k);
        const std::uint64_t uni = row + col - tp;
        rep.per_class[k] = static_cast<double>(tp) / static_cast<double>(uni);
        sum += rep.per_class[k];
        ++n_present;
    }
    if (n_present == 0)
        throw ValidationError("mIoU undefined: no class present in ground truth or prediction");
    rep.miou = sum / n_present;
    return rep;
}

inline double miou(const ConfusionMatrix& cm) { return iou_report(cm).miou; }

// One row per present class, then the aggregate.
inline void write_iou_csv(std::ostream& os, const ConfusionMatrix& cm) {
    const IouReport rep = iou_report(cm);
    os << "class,iou\n";
    for (int k = 0; k < cm.class_count(); ++k) {
        if (!rep.present[k]) continue;
        os << k << "," << fmt_g12(rep.per_class[k]) << "\n";
    }
    os << "miou," << fmt_g12(rep.miou) << "\n";
}

}  // namespace eroseg

#endif  // EROSEG_METRICS_HPP
