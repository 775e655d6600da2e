#ifndef EROSEG_PRNG_HPP
#define EROSEG_PRNG_HPP

#include <cstdint>

namespace eroseg {

// splitmix64, transliterated from Sebastiano Vigna's public-domain reference
// (https://prng.di.unimi.it/splitmix64.c). Chosen because the reference
// sequence is published, so any implementation language can regenerate the
// exact same datasets and initializations.
class SplitMix64 {
public:
    SplitMix64() = default;
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1): top 53 bits scaled by 2^-53.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, bound). Plain modulo; the tiny bias is irrelevant
    // here and keeps the draw count cross-language reproducible.
    std::uint64_t next_below(std::uint64_t bound) { return next_u64() % bound; }

    // Skip n draws in O(1): the state advances by a fixed increment per draw.
    void discard(std::uint64_t n) { state_ += n * 0x9e3779b97f4a7c15ULL; }

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_ = 0;
};

}  // namespace eroseg

#endif  // EROSEG_PRNG_HPP
