#ifndef EROSEG_TEXT_UTIL_HPP
#define EROSEG_TEXT_UTIL_HPP

#include <cstdio>
#include <string>

namespace eroseg {

// CSV/report formatting. 12 significant digits, '.' decimal, no locale.
inline std::string fmt_g12(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

// Lossless round-trip formatting for config snapshots.
inline std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// FNV-1a 64-bit, used to fingerprint resolved configs and parameter bytes.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace eroseg

#endif  // EROSEG_TEXT_UTIL_HPP
