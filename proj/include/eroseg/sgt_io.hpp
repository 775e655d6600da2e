#ifndef EROSEG_SGT_IO_HPP
#define EROSEG_SGT_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "eroseg/labelmap.hpp"
#include "eroseg/tensor.hpp"

// SGT1 portable tensor format:
//   magic "SGT1" | dtype u8 (0x01 float64, 0x02 uint32) | rank u8 |
//   rank x little-endian u64 extents | raw little-endian row-major payload.
// All on-disk tensors in this project use this format.

namespace eroseg {

constexpr std::uint8_t kSgtF64 = 0x01;
constexpr std::uint8_t kSgtU32 = 0x02;

namespace detail {

inline void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

// Bounds-checked little-endian reader over one buffer. `where` strings feed
// the FormatError messages so a truncated file names what was being read.
class ByteReader {
public:
    ByteReader(const std::vector<std::uint8_t>& buf, std::size_t base_offset = 0)
        : buf_(buf), pos_(base_offset) {}

    std::size_t pos() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return buf_.size() - pos_; }

    std::uint8_t u8(const std::string& where) {
        need(1, where);
        return buf_[pos_++];
    }

    std::uint32_t u32_le(const std::string& where) {
        need(4, where);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64_le(const std::string& where) {
        need(8, where);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }

    void bytes(std::uint8_t* dst, std::size_t len, const std::string& where) {
        need(len, where);
        std::memcpy(dst, buf_.data() + pos_, len);
        pos_ += len;
    }

    void expect_magic(const char magic[4], const std::string& what) {
        need(4, "magic " + what);
        if (std::memcmp(buf_.data() + pos_, magic, 4) != 0)
            throw FormatError("bad magic, expected \"" + std::string(magic, 4) + "\" for " + what,
                              pos_);
        pos_ += 4;
    }

private:
    void need(std::size_t len, const std::string& where) const {
        if (buf_.size() - pos_ < len)
            throw FormatError("truncated while reading " + where, pos_);
    }

    const std::vector<std::uint8_t>& buf_;
    std::size_t pos_;
};

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open file for reading: " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
    return buf;
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot open file for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ValidationError("failed writing file: " + path);
}

}  // namespace detail

inline void encode_sgt(std::vector<std::uint8_t>& out, const Tensor& t) {
    out.insert(out.end(), {'S', 'G', 'T', '1'});
    out.push_back(kSgtF64);
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t e : t.dims()) detail::put_u64_le(out, e);
    for (double v : t.values()) detail::put_u64_le(out, std::bit_cast<std::uint64_t>(v));
}

inline void encode_sgt(std::vector<std::uint8_t>& out, const LabelMap& m) {
    out.insert(out.end(), {'S', 'G', 'T', '1'});
    out.push_back(kSgtU32);
    out.push_back(3);
    detail::put_u64_le(out, m.n);
    detail::put_u64_le(out, m.h);
    detail::put_u64_le(out, m.w);
    for (std::uint32_t v : m.v) detail::put_u32_le(out, v);
}

struct SgtRecord {
    std::uint8_t dtype = 0;
    Dims dims;
    std::vector<double> f64;
    std::vector<std::uint32_t> u32;
};

// Tensors stay desk-scale; anything larger is a corrupt header.
constexpr std::uint64_t kSgtMaxElements = 1ull << 30;

inline SgtRecord decode_sgt(detail::ByteReader& r, const std::string& what) {
    r.expect_magic("SGT1", what);
    SgtRecord rec;
    const std::size_t dtype_off = r.pos();
    rec.dtype = r.u8("dtype of " + what);
    if (rec.dtype != kSgtF64 && rec.dtype != kSgtU32)
        throw FormatError("unknown dtype code " + std::to_string(rec.dtype) + " in " + what,
                          dtype_off);
    const std::uint8_t rank = r.u8("rank of " + what);
    std::uint64_t count = 1;
    for (std::uint8_t i = 0; i < rank; ++i) {
        const std::size_t ext_off = r.pos();
        const std::uint64_t e = r.u64_le("extent " + std::to_string(i) + " of " + what);
        if (e == 0 || e > kSgtMaxElements || count > kSgtMaxElements / e)
            throw FormatError("unreasonable extent " + std::to_string(e) + " in " + what, ext_off);
        rec.dims.push_back(static_cast<std::size_t>(e));
        count *= e;
    }
    if (rec.dtype == kSgtF64) {
        rec.f64.resize(count);
        for (std::uint64_t i = 0; i < count; ++i)
            rec.f64[i] = std::bit_cast<double>(r.u64_le("payload of " + what));
    } else {
        rec.u32.resize(count);
        for (std::uint64_t i = 0; i < count; ++i) rec.u32[i] = r.u32_le("payload of " + what);
    }
    return rec;
}

inline void write_tensor_sgt(const std::string& path, const Tensor& t) {
    std::vector<std::uint8_t> bytes;
    encode_sgt(bytes, t);
    detail::write_file_bytes(path, bytes);
}

inline void write_labels_sgt(const std::string& path, const LabelMap& m) {
    std::vector<std::uint8_t> bytes;
    encode_sgt(bytes, m);
    detail::write_file_bytes(path, bytes);
}

inline Tensor read_tensor_sgt(const std::string& path) {
    const auto bytes = detail::read_file_bytes(path);
    detail::ByteReader r(bytes);
    SgtRecord rec = decode_sgt(r, "tensor file " + path);
    if (rec.dtype != kSgtF64)
        throw ValidationError("expected float64 tensor in " + path + ", found dtype " +
                              std::to_string(rec.dtype));
    return Tensor::from_values(rec.dims, std::move(rec.f64));
}

inline LabelMap read_labels_sgt(const std::string& path) {
    const auto bytes = detail::read_file_bytes(path);
    detail::ByteReader r(bytes);
    SgtRecord rec = decode_sgt(r, "label file " + path);
    if (rec.dtype != kSgtU32)
        throw ValidationError("expected uint32 labels in " + path + ", found dtype " +
                              std::to_string(rec.dtype));
    if (rec.dims.size() != 3)
        throw ValidationError("expected rank-3 [N,H,W] labels in " + path + ", got rank " +
                              std::to_string(rec.dims.size()));
    LabelMap m(rec.dims[0], rec.dims[1], rec.dims[2]);
    m.v = std::move(rec.u32);
    return m;
}

}  // namespace eroseg

#endif  // EROSEG_SGT_IO_HPP
