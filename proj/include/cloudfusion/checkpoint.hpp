#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "cloudfusion/binary_io.hpp"
#include "cloudfusion/tensor.hpp"

namespace cloudfusion {

/// One named array of a CFW1 checkpoint.
struct NamedArray {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> values;

    bool operator==(const NamedArray&) const = default;
};

// Layout: "CFW1", then per entry: name length u32, UTF-8 name, rank u32,
// dims u32..., raw f32 values. All little-endian.
inline std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedArray>& entries) {
    std::vector<std::uint8_t> buf;
    binary::put_bytes(buf, "CFW1");
    for (const auto& e : entries) {
        std::size_t expect = 1;
        for (auto d : e.dims) expect *= d;
        if (expect != e.values.size()) {
            throw DimensionError("checkpoint entry '" + e.name + "': dims hold " + std::to_string(expect) +
                                 " values, data has " + std::to_string(e.values.size()));
        }
        binary::put_u32(buf, static_cast<std::uint32_t>(e.name.size()));
        binary::put_bytes(buf, e.name);
        binary::put_u32(buf, static_cast<std::uint32_t>(e.dims.size()));
        for (auto d : e.dims) binary::put_u32(buf, d);
        for (float v : e.values) binary::put_f32(buf, v);
    }
    return buf;
}

inline std::vector<NamedArray> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    binary::Reader r(bytes, "CFW1 checkpoint");
    if (bytes.size() < 4 || r.str(4) != "CFW1") throw BadMagicError("CFW1 checkpoint: bad magic");
    std::vector<NamedArray> out;
    while (!r.at_end()) {
        NamedArray e;
        std::uint32_t name_len = r.u32();
        e.name = r.str(name_len);
        std::uint32_t rank = r.u32();
        if (rank > 8) throw DimOverflowError("CFW1 entry '" + e.name + "': rank " + std::to_string(rank));
        std::uint64_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            e.dims.push_back(r.u32());
            count *= e.dims.back();
            if (count > (std::numeric_limits<std::uint32_t>::max)()) {
                throw DimOverflowError("CFW1 entry '" + e.name + "': element count overflows");
            }
        }
        r.need(static_cast<std::size_t>(count) * 4);
        e.values.resize(static_cast<std::size_t>(count));
        for (auto& v : e.values) v = r.f32();
        out.push_back(std::move(e));
    }
    return out;
}

inline void write_checkpoint(const std::string& path, const std::vector<NamedArray>& entries) {
    binary::write_file(path, encode_checkpoint(entries));
}

inline std::vector<NamedArray> read_checkpoint(const std::string& path) {
    return decode_checkpoint(binary::read_file(path));
}

template <typename T>
std::vector<NamedArray> to_named_arrays(const ParamList<T>& params) {
    std::vector<NamedArray> out;
    out.reserve(params.size());
    for (const auto& p : params) {
        const Shape& s = p.tensor.shape();
        NamedArray e;
        e.name = p.name;
        e.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                  static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
        e.values.assign(p.tensor.data().begin(), p.tensor.data().end());
        out.push_back(std::move(e));
    }
    return out;
}

/// Copies values into matching parameters by name. Every parameter must be present.
template <typename T>
void load_named_arrays(ParamList<T>& params, const std::vector<NamedArray>& entries) {
    std::map<std::string, const NamedArray*> by_name;
    for (const auto& e : entries) by_name[e.name] = &e;
    for (auto& p : params) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) throw FormatError("checkpoint is missing parameter '" + p.name + "'");
        if (it->second->values.size() != p.tensor.numel()) {
            throw DimensionError("checkpoint parameter '" + p.name + "' has " +
                                 std::to_string(it->second->values.size()) + " values, model expects " +
                                 std::to_string(p.tensor.numel()));
        }
        auto dst = p.tensor.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second->values[i]);
    }
}

}  // namespace cloudfusion
