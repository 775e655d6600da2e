#ifndef EROSEG_DATASET_HPP
#define EROSEG_DATASET_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "eroseg/labelmap.hpp"
#include "eroseg/prng.hpp"
#include "eroseg/sgt_io.hpp"
#include "eroseg/tensor.hpp"

// Synthetic "shapes world" segmentation data: gray background with 1-3
// non-overlapping colored shapes per image. Small enough to learn in
// seconds, noisy enough that boundary pixels stay genuinely uncertain.
//
// Generation is a pure function of the seed. All randomness comes from one
// SplitMix64 stream in this documented draw order, per image:
//   1. shape count s = 1 + next_u64() % 3;
//   2. per shape, up to kPlacementRetries attempts, each drawing
//        class     = 1 + next_u64() % 3           (1 rect, 2 disk, 3 diamond)
//        rect:       rx, ry                        (two extent draws)
//        disk/diamond: r                           (one extent draw)
//        cx        = rx + next_u64() % (W - 2*rx)
//        cy        = ry + next_u64() % (H - 2*ry)
//      extents are uniform in [kMinRadius, min(H,W)/4]; an attempt is
//      rejected if its bounding box meets an accepted shape's box or if it
//      would push total foreground above half the pixels; after the retry
//      cap the shape is skipped;
//   3. pixel noise, scanning (y, x, channel): value =
//      clamp(base + 0.2*next_double() - 0.1, 0, 1).
//
// Shape interiors: rect |dx|<=rx and |dy|<=ry; disk dx^2+dy^2 <= r^2;
// diamond |dx|+|dy| <= r.

namespace eroseg {

constexpr int kClassCount = 4;  // background + rect + disk + diamond
constexpr int kMinRadius = 3;
constexpr int kPlacementRetries = 64;
constexpr std::size_t kMinExtent = 16;
constexpr double kNoiseAmplitude = 0.1;
// Base colors, class-indexed. Separable but close enough that noise keeps
// boundary pixels below full confidence.
constexpr double kBaseColor[kClassCount][3] = {
    {0.5, 0.5, 0.5}, {0.9, 0.2, 0.2}, {0.2, 0.9, 0.2}, {0.2, 0.2, 0.9}};

struct ShapeSpec {
    int cls = 0;  // 1 rect, 2 disk, 3 diamond
    int cx = 0, cy = 0;
    int rx = 0, ry = 0;  // rx == ry for disk and diamond

    bool contains(int x, int y) const {
        const int dx = x - cx, dy = y - cy;
        switch (cls) {
            case 1: return std::abs(dx) <= rx && std::abs(dy) <= ry;
            case 2: return dx * dx + dy * dy <= rx * rx;
            case 3: return std::abs(dx) + std::abs(dy) <= rx;
            default: return false;
        }
    }
};

struct Dataset {
    Tensor images;   // [N,3,H,W], values in [0,1]
    LabelMap labels; // [N,H,W]
    std::uint64_t seed = 0;
    std::string split = "train";
    int class_count = kClassCount;
    // Shape parameters per image; kept for generated data so labels can be
    // re-derived from geometry. Empty for loaded datasets.
    std::vector<std::vector<ShapeSpec>> shapes;

    std::size_t count() const { return labels.n; }
    std::size_t height() const { return labels.h; }
    std::size_t width() const { return labels.w; }
};

namespace detail {

inline std::uint64_t shape_pixel_area(const ShapeSpec& s) {
    if (s.cls == 1) return std::uint64_t(2 * s.rx + 1) * std::uint64_t(2 * s.ry + 1);
    if (s.cls == 3) {
        const std::uint64_t r = s.rx;
        return 2 * r * r + 2 * r + 1;
    }
    std::uint64_t area = 0;
    for (int dy = -s.rx; dy <= s.rx; ++dy) {
        int dx = 0;
        while ((dx + 1) * (dx + 1) + dy * dy <= s.rx * s.rx) ++dx;
        area += std::uint64_t(2 * dx + 1);
    }
    return area;
}

inline bool boxes_meet(const ShapeSpec& a, const ShapeSpec& b) {
    return std::abs(a.cx - b.cx) <= a.rx + b.rx && std::abs(a.cy - b.cy) <= a.ry + b.ry;
}

}  // namespace detail

inline Dataset generate_dataset(std::uint64_t seed, std::size_t n, std::size_t h, std::size_t w,
                                const std::string& split = "train") {
    if (n == 0) throw ValidationError("dataset: need at least one image");
    if (h < kMinExtent || w < kMinExtent)
        throw ValidationError("dataset: H,W too small to place a shape; need >= " +
                              std::to_string(kMinExtent) + ", got " + std::to_string(h) + "x" +
                              std::to_string(w));

    Dataset ds;
    ds.seed = seed;
    ds.split = split;
    ds.images = Tensor(Dims{n, 3, h, w});
    ds.labels = LabelMap(n, h, w);
    ds.shapes.resize(n);

    SplitMix64 rng(seed);
    const int rmax = static_cast<int>(std::min(h, w) / 4);
    const std::uint64_t fg_budget = static_cast<std::uint64_t>(h) * w / 2;
    double* img = ds.images.values().data();
    const std::size_t plane = h * w;

    for (std::size_t ni = 0; ni < n; ++ni) {
        const int want = 1 + static_cast<int>(rng.next_below(3));
        std::uint64_t fg_area = 0;
        auto& placed = ds.shapes[ni];
        for (int s = 0; s < want; ++s) {
            for (int attempt = 0; attempt < kPlacementRetries; ++attempt) {
                ShapeSpec cand;
                cand.cls = 1 + static_cast<int>(rng.next_below(3));
                const auto extent_draw = [&] {
                    return kMinRadius +
                           static_cast<int>(rng.next_below(std::uint64_t(rmax - kMinRadius + 1)));
                };
                if (cand.cls == 1) {
                    cand.rx = extent_draw();
                    cand.ry = extent_draw();
                } else {
                    cand.rx = cand.ry = extent_draw();
                }
                cand.cx = cand.rx + static_cast<int>(rng.next_below(w - 2 * std::size_t(cand.rx)));
                cand.cy = cand.ry + static_cast<int>(rng.next_below(h - 2 * std::size_t(cand.ry)));

                const std::uint64_t area = detail::shape_pixel_area(cand);
                if (fg_area + area > fg_budget) continue;
                bool meets = false;
                for (const ShapeSpec& p : placed)
                    if (detail::boxes_meet(cand, p)) { meets = true; break; }
                if (meets) continue;

                placed.push_back(cand);
                fg_area += area;
                break;
            }
        }

        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                std::uint32_t lab = 0;
                for (const ShapeSpec& p : placed) {
                    if (p.contains(static_cast<int>(x), static_cast<int>(y))) {
                        lab = static_cast<std::uint32_t>(p.cls);
                        break;
                    }
                }
                ds.labels.v[ni * plane + y * w + x] = lab;
            }
        }

        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const std::uint32_t lab = ds.labels.v[ni * plane + y * w + x];
                for (int c = 0; c < 3; ++c) {
                    const double noise = 2.0 * kNoiseAmplitude * rng.next_double() - kNoiseAmplitude;
                    const double v = std::clamp(kBaseColor[lab][c] + noise, 0.0, 1.0);
                    img[(ni * 3 + c) * plane + y * w + x] = v;
                }
            }
        }
    }
    return ds;
}

// Validates externally supplied image/label tensors: SGT1 files, matching
// [N,3,H,W] / [N,H,W] dims, image values in [0,1], labels below class_count.
inline Dataset load_dataset_pair(const std::string& images_path, const std::string& labels_path,
                                 int class_count = kClassCount,
                                 const std::string& split = "train") {
    Dataset ds;
    ds.split = split;
    ds.class_count = class_count;
    ds.images = read_tensor_sgt(images_path);
    ds.labels = read_labels_sgt(labels_path);

    if (ds.images.rank() != 4 || ds.images.extent(1) != 3)
        throw ValidationError(images_path + ": images must be [N,3,H,W], got " +
                              dims_to_string(ds.images.dims()));
    if (ds.images.extent(0) != ds.labels.n || ds.images.extent(2) != ds.labels.h ||
        ds.images.extent(3) != ds.labels.w)
        throw ValidationError(labels_path + ": label dims [" + std::to_string(ds.labels.n) + "," +
                              std::to_string(ds.labels.h) + "," + std::to_string(ds.labels.w) +
                              "] do not match images " + dims_to_string(ds.images.dims()) +
                              " from " + images_path);
    const auto vals = ds.images.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (!(vals[i] >= 0.0 && vals[i] <= 1.0))
            throw ValidationError(images_path + ": image value " + fmt_g12(vals[i]) +
                                  " out of [0,1] at flat index " + std::to_string(i));
    }
    try {
        ds.labels.validate_range(static_cast<std::uint32_t>(class_count));
    } catch (const ValidationError& e) {
        throw ValidationError(labels_path + ": " + e.what());
    }
    return ds;
}

// ---- manifest + directory layout -------------------------------------------

inline void save_dataset_dir(const Dataset& ds, const std::string& dir) {
    write_tensor_sgt(dir + "/images.sgt", ds.images);
    write_labels_sgt(dir + "/labels.sgt", ds.labels);
    std::ofstream mf(dir + "/manifest.txt", std::ios::trunc);
    if (!mf) throw ValidationError("cannot write manifest: " + dir + "/manifest.txt");
    mf << "seed=" << ds.seed << "\n"
       << "n=" << ds.count() << "\n"
       << "h=" << ds.height() << "\n"
       << "w=" << ds.width() << "\n"
       << "c=" << ds.class_count << "\n"
       << "split=" << ds.split << "\n"
       << "images=images.sgt\n"
       << "labels=labels.sgt\n";
}

inline Dataset load_dataset_dir(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.txt");
    if (!mf) throw ValidationError("cannot open dataset manifest: " + dir + "/manifest.txt");
    std::uint64_t seed = 0;
    int class_count = kClassCount;
    std::string split = "train", images = "images.sgt", labels = "labels.sgt", line;
    while (std::getline(mf, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
        if (k == "seed") seed = std::stoull(v);
        else if (k == "c") class_count = std::stoi(v);
        else if (k == "split") split = v;
        else if (k == "images") images = v;
        else if (k == "labels") labels = v;
    }
    Dataset ds = load_dataset_pair(dir + "/" + images, dir + "/" + labels, class_count, split);
    ds.seed = seed;
    return ds;
}

}  // namespace eroseg

#endif  // EROSEG_DATASET_HPP
