#ifndef EROSEG_MODEL_HPP
#define EROSEG_MODEL_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eroseg/prng.hpp"
#include "eroseg/sgt_io.hpp"
#include "eroseg/tensor.hpp"
#include "eroseg/text_util.hpp"

namespace eroseg {

constexpr int kHiddenChannels = 16;

// Three 3x3 convolutions (3 -> 16 -> 16 -> C) with ReLU between them, pad 1
// throughout, so logits keep the input's spatial dims. Small enough to train
// in seconds yet deep enough that boundary pixels see mixed context.
//
// Initialization, fixed so other implementations can reproduce it from the
// same PRNG: kernels are drawn from SplitMix64(seed) in layer order, each
// row-major, as (2*next_double() - 1) / sqrt(fan_in) with fan_in = Cin*3*3;
// biases are zero and consume no draws.
class SegNetTiny {
public:
    SegNetTiny() = default;

    static SegNetTiny init(std::uint64_t seed, int class_count) {
        if (class_count < 2)
            throw ValidationError("model: class count must be >= 2, got " +
                                  std::to_string(class_count));
        SegNetTiny m;
        m.class_count_ = class_count;
        m.init_seed_ = seed;
        SplitMix64 rng(seed);
        m.k1_ = draw_kernel(rng, kHiddenChannels, 3);
        m.b1_ = Tensor(Dims{kHiddenChannels}, 0.0, true);
        m.k2_ = draw_kernel(rng, kHiddenChannels, kHiddenChannels);
        m.b2_ = Tensor(Dims{kHiddenChannels}, 0.0, true);
        m.k3_ = draw_kernel(rng, static_cast<std::size_t>(class_count), kHiddenChannels);
        m.b3_ = Tensor(Dims{static_cast<std::size_t>(class_count)}, 0.0, true);
        return m;
    }

    Tensor forward(Graph& g, const Tensor& images) const {
        if (images.rank() != 4 || images.extent(1) != 3)
            throw ShapeError("model: images must be [N,3,H,W], got " +
                             dims_to_string(images.dims()));
        Tensor h1 = relu(g, conv2d(g, images, k1_, b1_));
        Tensor h2 = relu(g, conv2d(g, h1, k2_, b2_));
        return conv2d(g, h2, k3_, b3_);
    }

    int class_count() const noexcept { return class_count_; }
    std::uint64_t init_seed() const noexcept { return init_seed_; }
    std::uint32_t trained_epochs() const noexcept { return trained_epochs_; }
    std::uint64_t config_hash() const noexcept { return config_hash_; }
    void set_training_meta(std::uint32_t epochs, std::uint64_t config_hash) {
        trained_epochs_ = epochs;
        config_hash_ = config_hash;
    }

    std::vector<Tensor> parameters() { return {k1_, b1_, k2_, b2_, k3_, b3_}; }

    std::vector<std::pair<std::string, Tensor>> named_parameters() const {
        return {{"layer1.kernel", k1_}, {"layer1.bias", b1_}, {"layer2.kernel", k2_},
                {"layer2.bias", b2_},   {"layer3.kernel", k3_}, {"layer3.bias", b3_}};
    }

    // FNV-1a over the little-endian bytes of every parameter in declaration
    // order; pinned in tests as a regression value.
    std::uint64_t parameter_checksum() const {
        std::vector<std::uint8_t> bytes;
        for (const auto& [name, t] : named_parameters())
            for (double v : t.values()) detail::put_u64_le(bytes, std::bit_cast<std::uint64_t>(v));
        return fnv1a64(bytes.data(), bytes.size());
    }

private:
    static Tensor draw_kernel(SplitMix64& rng, std::size_t cout, std::size_t cin) {
        Tensor k(Dims{cout, cin, 3, 3}, 0.0, true);
        const double scaling = 1.0 / std::sqrt(static_cast<double>(cin * 9));
        for (double& v : k.values()) v = (2.0 * rng.next_double() - 1.0) * scaling;
        return k;
    }

    Tensor k1_, b1_, k2_, b2_, k3_, b3_;
    int class_count_ = 0;
    std::uint64_t init_seed_ = 0;
    std::uint32_t trained_epochs_ = 0;
    std::uint64_t config_hash_ = 0;

    friend SegNetTiny load_checkpoint(const std::string&);
};

// ---- SGM1 checkpoint container ----------------------------------------------
// magic "SGM1" | u32 LE entry count | per entry: u32 LE name length, name
// bytes, embedded SGT1 tensor. Parameter entries come first in declaration
// order, then meta entries; load reproduces parameters bit-exactly.

namespace detail {

inline void put_entry(std::vector<std::uint8_t>& out, const std::string& name) {
    put_u32_le(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
}

inline LabelMap u32_meta(std::uint32_t a) {
    LabelMap m(1, 1, 1);
    m.v = {a};
    return m;
}

inline LabelMap u32_meta2(std::uint64_t v) {
    LabelMap m(1, 1, 2);
    m.v = {static_cast<std::uint32_t>(v & 0xffffffffu), static_cast<std::uint32_t>(v >> 32)};
    return m;
}

}  // namespace detail

inline void save_checkpoint(const SegNetTiny& model, const std::string& path) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'S', 'G', 'M', '1'});
    const auto params = model.named_parameters();
    detail::put_u32_le(out, static_cast<std::uint32_t>(params.size() + 4));
    for (const auto& [name, t] : params) {
        detail::put_entry(out, name);
        encode_sgt(out, t);
    }
    detail::put_entry(out, "meta.class_count");
    encode_sgt(out, detail::u32_meta(static_cast<std::uint32_t>(model.class_count())));
    detail::put_entry(out, "meta.epochs");
    encode_sgt(out, detail::u32_meta(model.trained_epochs()));
    detail::put_entry(out, "meta.seed");
    encode_sgt(out, detail::u32_meta2(model.init_seed()));
    detail::put_entry(out, "meta.config_hash");
    encode_sgt(out, detail::u32_meta2(model.config_hash()));
    detail::write_file_bytes(path, out);
}

inline SegNetTiny load_checkpoint(const std::string& path) {
    const auto bytes = detail::read_file_bytes(path);
    detail::ByteReader r(bytes);
    r.expect_magic("SGM1", "checkpoint " + path);
    const std::uint32_t count = r.u32_le("entry count of " + path);

    SegNetTiny m;
    bool have_class_count = false;
    std::vector<std::pair<std::string, SgtRecord>> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t name_off = r.pos();
        const std::uint32_t name_len = r.u32_le("name length of entry " + std::to_string(i));
        if (name_len > 4096)
            throw FormatError("unreasonable entry name length " + std::to_string(name_len),
                              name_off);
        std::string name(name_len, '\0');
        r.bytes(reinterpret_cast<std::uint8_t*>(name.data()), name_len,
                "name of entry " + std::to_string(i));
        entries.emplace_back(name, decode_sgt(r, "entry '" + name + "'"));
    }

    auto find = [&entries, &path](const std::string& name) -> SgtRecord& {
        for (auto& [n, rec] : entries)
            if (n == name) return rec;
        throw FormatError("checkpoint " + path + " is missing entry '" + name + "'", 0);
    };
    auto tensor_of = [&](const std::string& name, bool requires_grad) {
        SgtRecord& rec = find(name);
        if (rec.dtype != kSgtF64)
            throw ValidationError("checkpoint entry '" + name + "' must be float64");
        return Tensor::from_values(rec.dims, std::move(rec.f64), requires_grad);
    };
    auto meta_u32 = [&](const std::string& name) -> std::uint32_t {
        SgtRecord& rec = find(name);
        if (rec.dtype != kSgtU32 || rec.u32.empty())
            throw ValidationError("checkpoint entry '" + name + "' must be a uint32 tensor");
        return rec.u32[0];
    };
    auto meta_u64 = [&](const std::string& name) -> std::uint64_t {
        SgtRecord& rec = find(name);
        if (rec.dtype != kSgtU32 || rec.u32.size() != 2)
            throw ValidationError("checkpoint entry '" + name + "' must hold two uint32 words");
        return static_cast<std::uint64_t>(rec.u32[0]) |
               (static_cast<std::uint64_t>(rec.u32[1]) << 32);
    };

    m.class_count_ = static_cast<int>(meta_u32("meta.class_count"));
    have_class_count = true;
    m.trained_epochs_ = meta_u32("meta.epochs");
    m.init_seed_ = meta_u64("meta.seed");
    m.config_hash_ = meta_u64("meta.config_hash");
    m.k1_ = tensor_of("layer1.kernel", true);
    m.b1_ = tensor_of("layer1.bias", true);
    m.k2_ = tensor_of("layer2.kernel", true);
    m.b2_ = tensor_of("layer2.bias", true);
    m.k3_ = tensor_of("layer3.kernel", true);
    m.b3_ = tensor_of("layer3.bias", true);

    if (!have_class_count || m.k3_.extent(0) != static_cast<std::size_t>(m.class_count_))
        throw ValidationError("checkpoint " + path + ": layer3 kernel Cout " +
                              std::to_string(m.k3_.extent(0)) + " disagrees with meta class count " +
                              std::to_string(m.class_count_));
    return m;
}

}  // namespace eroseg

#endif  // EROSEG_MODEL_HPP
