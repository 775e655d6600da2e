#ifndef EROSEG_LABELMAP_HPP
#define EROSEG_LABELMAP_HPP

#include <cstdint>
#include <vector>

#include "eroseg/errors.hpp"

namespace eroseg {

// Per-pixel integer class map, laid out row-major as [N,H,W]. Class 0 is
// background by convention.
struct LabelMap {
    std::size_t n = 0, h = 0, w = 0;
    std::vector<std::uint32_t> v;

    LabelMap() = default;
    LabelMap(std::size_t n_, std::size_t h_, std::size_t w_, std::uint32_t fill = 0)
        : n(n_), h(h_), w(w_), v(n_ * h_ * w_, fill) {}

    std::size_t size() const noexcept { return v.size(); }

    std::uint32_t at(std::size_t ni, std::size_t yi, std::size_t xi) const {
        return v[(ni * h + yi) * w + xi];
    }
    std::uint32_t& at(std::size_t ni, std::size_t yi, std::size_t xi) {
        return v[(ni * h + yi) * w + xi];
    }

    bool same_dims(const LabelMap& o) const noexcept {
        return n == o.n && h == o.h && w == o.w;
    }

    // Highest legal class is class_count-1.
    void validate_range(std::uint32_t class_count) const {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i] >= class_count) {
                throw ValidationError("label value " + std::to_string(v[i]) + " at flat index " +
                                      std::to_string(i) + " exceeds max legal class " +
                                      std::to_string(class_count - 1));
            }
        }
    }
};

}  // namespace eroseg

#endif  // EROSEG_LABELMAP_HPP
