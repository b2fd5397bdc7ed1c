#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cloudfusion/binary_io.hpp"
#include "cloudfusion/raster.hpp"

namespace cloudfusion {

// SR12 container: "SR12", version u8 = 1, dtype u8 = 1 (f32 LE), reserved u16 = 0,
// bands u32, height u32, width u32, then bands*height*width f32 values.
inline constexpr std::size_t kSr12HeaderBytes = 20;

inline std::vector<std::uint8_t> encode_raster(const Raster& r) {
    if (r.data.size() != r.bands * r.height * r.width) throw DimensionError("write_raster: data/dims mismatch");
    std::vector<std::uint8_t> buf;
    buf.reserve(kSr12HeaderBytes + r.data.size() * 4);
    binary::put_bytes(buf, "SR12");
    binary::put_u8(buf, 1);
    binary::put_u8(buf, 1);
    binary::put_u16(buf, 0);
    binary::put_u32(buf, static_cast<std::uint32_t>(r.bands));
    binary::put_u32(buf, static_cast<std::uint32_t>(r.height));
    binary::put_u32(buf, static_cast<std::uint32_t>(r.width));
    for (float v : r.data) binary::put_f32(buf, v);
    return buf;
}

/// The container does not record modality; the caller supplies it.
inline Raster decode_raster(const std::vector<std::uint8_t>& bytes, Modality modality = Modality::Other) {
    binary::Reader rd(bytes, "SR12 raster");
    if (bytes.size() < 4) throw TruncatedError("SR12 raster header", kSr12HeaderBytes, bytes.size());
    if (rd.str(4) != "SR12") throw BadMagicError("SR12 raster: bad magic");
    if (bytes.size() < kSr12HeaderBytes) throw TruncatedError("SR12 raster header", kSr12HeaderBytes, bytes.size());
    const std::uint8_t version = rd.u8();
    const std::uint8_t dtype = rd.u8();
    const std::uint16_t reserved = rd.u16();
    if (version != 1) throw FormatError("SR12 raster: unsupported version " + std::to_string(version));
    if (dtype != 1) throw FormatError("SR12 raster: unsupported dtype " + std::to_string(dtype));
    if (reserved != 0) throw FormatError("SR12 raster: reserved field must be 0");
    const std::uint64_t bands = rd.u32(), height = rd.u32(), width = rd.u32();
    const std::uint64_t count = bands * height * width;  // each factor < 2^32, product may still overflow
    if ((height != 0 && width != 0 && bands > (std::numeric_limits<std::uint64_t>::max)() / (height * width)) ||
        count > (std::numeric_limits<std::size_t>::max)() / 8) {
        throw DimOverflowError("SR12 raster: dims " + std::to_string(bands) + "x" + std::to_string(height) + "x" +
                               std::to_string(width) + " overflow");
    }
    const std::size_t expected = kSr12HeaderBytes + static_cast<std::size_t>(count) * 4;
    if (bytes.size() < expected) throw TruncatedError("SR12 raster payload", expected, bytes.size());
    if (bytes.size() > expected) {
        throw FormatError("SR12 raster: " + std::to_string(bytes.size() - expected) + " trailing bytes");
    }
    Raster r;
    r.bands = bands;
    r.height = height;
    r.width = width;
    r.modality = modality;
    r.data.resize(static_cast<std::size_t>(count));
    for (float& v : r.data) v = rd.f32();
    return r;
}

inline void write_raster(const Raster& r, const std::string& path) { binary::write_file(path, encode_raster(r)); }

inline Raster read_raster(const std::string& path, Modality modality = Modality::Other) {
    return decode_raster(binary::read_file(path), modality);
}

// ---- previews ----------------------------------------------------------------

/// Affine map [lo, hi] -> [0, 255] with rounding half up; out-of-range values saturate.
inline std::uint8_t to_byte(float v, double lo = -1.0, double hi = 1.0) {
    double x = (std::clamp(static_cast<double>(v), lo, hi) - lo) / (hi - lo) * 255.0;
    return static_cast<std::uint8_t>(std::floor(x + 0.5));
}

/// P5 for single-band, P6 for 3-band rasters.
inline std::vector<std::uint8_t> encode_preview(const Raster& r, double lo = -1.0, double hi = 1.0) {
    if (r.bands != 1 && r.bands != 3) {
        throw DimensionError("preview: need 1 or 3 bands, got " + std::to_string(r.bands));
    }
    std::vector<std::uint8_t> buf;
    binary::put_bytes(buf, std::string(r.bands == 1 ? "P5" : "P6") + "\n" + std::to_string(r.width) + " " +
                               std::to_string(r.height) + "\n255\n");
    const std::size_t p = r.plane();
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t b = 0; b < r.bands; ++b) buf.push_back(to_byte(r.data[b * p + i], lo, hi));
    return buf;
}

inline void write_preview(const Raster& r, const std::string& path, double lo = -1.0, double hi = 1.0) {
    binary::write_file(path, encode_preview(r, lo, hi));
}

// ---- embedding vectors -------------------------------------------------------

/// CFE1: "CFE1", n u32, d u32, n*d f32 (row-major).
struct EmbeddingFile {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<float> values;
};

inline std::vector<std::uint8_t> encode_embeddings(const EmbeddingFile& e) {
    if (e.values.size() != e.n * e.d) throw DimensionError("embeddings: n*d != value count");
    std::vector<std::uint8_t> buf;
    binary::put_bytes(buf, "CFE1");
    binary::put_u32(buf, static_cast<std::uint32_t>(e.n));
    binary::put_u32(buf, static_cast<std::uint32_t>(e.d));
    for (float v : e.values) binary::put_f32(buf, v);
    return buf;
}

inline EmbeddingFile decode_embeddings(const std::vector<std::uint8_t>& bytes) {
    binary::Reader rd(bytes, "CFE1 embeddings");
    if (bytes.size() < 4 || rd.str(4) != "CFE1") throw BadMagicError("CFE1 embeddings: bad magic");
    EmbeddingFile e;
    e.n = rd.u32();
    e.d = rd.u32();
    const std::uint64_t count = static_cast<std::uint64_t>(e.n) * e.d;
    if (count > (std::numeric_limits<std::uint32_t>::max)()) throw DimOverflowError("CFE1 embeddings: n*d overflows");
    rd.need(static_cast<std::size_t>(count) * 4);
    e.values.resize(static_cast<std::size_t>(count));
    for (float& v : e.values) v = rd.f32();
    return e;
}

inline void write_embeddings(const EmbeddingFile& e, const std::string& path) {
    binary::write_file(path, encode_embeddings(e));
}
inline EmbeddingFile read_embeddings(const std::string& path) { return decode_embeddings(binary::read_file(path)); }

}  // namespace cloudfusion
