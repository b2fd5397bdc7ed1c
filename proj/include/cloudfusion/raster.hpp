#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cloudfusion/error.hpp"
#include "cloudfusion/tensor.hpp"

namespace cloudfusion {

enum class Modality : std::uint8_t { S1, S2, Mask, Other };

inline const char* modality_name(Modality m) {
    switch (m) {
        case Modality::S1: return "S1";
        case Modality::S2: return "S2";
        case Modality::Mask: return "Mask";
        case Modality::Other: return "Other";
    }
    return "?";
}

/// Band-major, row-major multi-band image of 32-bit reals.
struct Raster {
    std::size_t bands = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    Modality modality = Modality::Other;
    std::vector<float> data;

    Raster() = default;
    Raster(std::size_t b, std::size_t h, std::size_t w, Modality m = Modality::Other, float fill = 0.0f)
        : bands(b), height(h), width(w), modality(m), data(b * h * w, fill) {}
    Raster(std::size_t b, std::size_t h, std::size_t w, Modality m, std::vector<float> values)
        : bands(b), height(h), width(w), modality(m), data(std::move(values)) {
        if (data.size() != b * h * w) {
            throw DimensionError("raster: " + std::to_string(b) + "x" + std::to_string(h) + "x" +
                                 std::to_string(w) + " needs " + std::to_string(b * h * w) + " values, got " +
                                 std::to_string(data.size()));
        }
    }

    std::size_t plane() const { return height * width; }
    float& at(std::size_t b, std::size_t y, std::size_t x) { return data[(b * height + y) * width + x]; }
    float at(std::size_t b, std::size_t y, std::size_t x) const { return data[(b * height + y) * width + x]; }

    Raster band(std::size_t b) const {
        if (b >= bands) throw DimensionError("raster: band " + std::to_string(b) + " out of " + std::to_string(bands));
        Raster out(1, height, width, modality);
        std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(b * plane()), plane(), out.data.begin());
        return out;
    }

    bool same_dims(const Raster& o) const { return height == o.height && width == o.width; }
    bool operator==(const Raster&) const = default;
};

inline void require_same_hw(const Raster& a, const Raster& b, const char* op) {
    if (!a.same_dims(b)) {
        throw DimensionError(std::string(op) + ": height x width mismatch " + std::to_string(a.height) + "x" +
                             std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                             std::to_string(b.width));
    }
}

enum class Split : std::uint8_t { Train, Test };

/// Co-registered S1 / cloudy S2 / cloud-free S2 patches of one location.
class PatchTriplet {
public:
    PatchTriplet(Raster s1_, Raster s2_cloudy_, Raster s2_cloudfree_, std::string roi, Split split)
        : s1(std::move(s1_)),
          s2_cloudy(std::move(s2_cloudy_)),
          s2_cloudfree(std::move(s2_cloudfree_)),
          roi_id(std::move(roi)),
          split_(split) {
        require_same_hw(s1, s2_cloudy, "patch triplet");
        require_same_hw(s1, s2_cloudfree, "patch triplet");
    }

    Raster s1;
    Raster s2_cloudy;
    Raster s2_cloudfree;
    std::optional<Raster> mask;  // cached cloud map, filled on first use
    std::string roi_id;

    Split split() const { return split_; }

private:
    Split split_;
};

struct TileSpec {
    std::size_t patch_size = 256;
    double overlap_fraction = 0.5;

    void validate() const {
        if (patch_size < 1) throw ParameterError("tile: patch_size must be >= 1");
        if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
            throw ParameterError("tile: overlap_fraction must lie in [0, 1)");
        }
    }
    std::size_t stride() const {
        auto s = static_cast<std::size_t>(std::llround(static_cast<double>(patch_size) * (1.0 - overlap_fraction)));
        return std::max<std::size_t>(1, s);
    }
};

struct Tile {
    std::size_t row = 0;
    std::size_t col = 0;
    Raster patch;
};

// ---- value preparation -----------------------------------------------------

struct ValueRange {
    double lo;
    double hi;
};

inline ValueRange modality_range(Modality m) {
    switch (m) {
        case Modality::S1: return {-25.0, 0.0};
        case Modality::S2: return {0.0, 10000.0};
        default: throw ParameterError(std::string("clip_rescale: no value range for modality ") + modality_name(m));
    }
}

/// Clips to the modality's physical range and maps it affinely onto [-1, 1].
inline Raster clip_rescale(const Raster& r, Modality modality) {
    const ValueRange range = modality_range(modality);
    Raster out = r;
    out.modality = modality;
    const double span = range.hi - range.lo;
    for (float& v : out.data) {
        double c = std::clamp(static_cast<double>(v), range.lo, range.hi);
        v = static_cast<float>(2.0 * (c - range.lo) / span - 1.0);
    }
    return out;
}

/// (VV, VH, mean(VV, VH)).
inline Raster s1_three_channel(const Raster& vv, const Raster& vh) {
    if (vv.bands != 1 || vh.bands != 1) throw DimensionError("s1_three_channel: VV and VH must be single-band");
    require_same_hw(vv, vh, "s1_three_channel");
    Raster out(3, vv.height, vv.width, Modality::S1);
    const std::size_t p = vv.plane();
    for (std::size_t i = 0; i < p; ++i) {
        out.data[i] = vv.data[i];
        out.data[p + i] = vh.data[i];
        out.data[2 * p + i] = (vv.data[i] + vh.data[i]) / 2.0f;
    }
    return out;
}

inline Raster s1_three_channel(const Raster& s1_two_band) {
    if (s1_two_band.bands != 2) throw DimensionError("s1_three_channel: expected 2 bands (VV, VH)");
    return s1_three_channel(s1_two_band.band(0), s1_two_band.band(1));
}

/// Picks bands 4, 3, 2 (1-indexed, Sentinel-2 product order) as R, G, B.
inline Raster select_rgb(const Raster& s2) {
    if (s2.bands != 13) {
        throw DimensionError("select_rgb: expected 13-band S2 raster, got " + std::to_string(s2.bands));
    }
    Raster out(3, s2.height, s2.width, s2.modality);
    const std::size_t src[3] = {3, 2, 1};
    for (std::size_t b = 0; b < 3; ++b)
        std::copy_n(s2.data.begin() + static_cast<std::ptrdiff_t>(src[b] * s2.plane()), s2.plane(),
                    out.data.begin() + static_cast<std::ptrdiff_t>(b * s2.plane()));
    return out;
}

/// Raw-to-model preparation: S1 (2 bands, dB) -> 3 bands in [-1,1]; S2 (13 bands) -> RGB in [-1,1].
inline Raster prepare_s1(const Raster& raw) { return clip_rescale(s1_three_channel(raw), Modality::S1); }
inline Raster prepare_s2(const Raster& raw) { return clip_rescale(select_rgb(raw), Modality::S2); }

/// Rejects patches with non-finite values or no variation at all.
inline bool passes_artifact_screen(const Raster& r) {
    if (r.data.empty()) return false;
    for (float v : r.data)
        if (!std::isfinite(v)) return false;
    auto [lo, hi] = std::minmax_element(r.data.begin(), r.data.end());
    return *lo != *hi;
}

// ---- tiling and cropping ---------------------------------------------------

/// Window starts along one axis: multiples of stride, plus a clamped final
/// window so the far edge is covered.
inline std::vector<std::size_t> tile_starts(std::size_t extent, std::size_t patch, std::size_t stride) {
    if (extent < patch) {
        throw DimensionError("tile: scene extent " + std::to_string(extent) + " smaller than patch_size " +
                             std::to_string(patch));
    }
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + patch <= extent; s += stride) starts.push_back(s);
    if (starts.back() + patch < extent) starts.push_back(extent - patch);
    return starts;
}

inline Raster crop(const Raster& r, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
    if (top + h > r.height || left + w > r.width) {
        throw DimensionError("crop: window exceeds raster " + std::to_string(r.height) + "x" + std::to_string(r.width));
    }
    Raster out(r.bands, h, w, r.modality);
    for (std::size_t b = 0; b < r.bands; ++b)
        for (std::size_t y = 0; y < h; ++y)
            std::copy_n(r.data.begin() + static_cast<std::ptrdiff_t>((b * r.height + top + y) * r.width + left), w,
                        out.data.begin() + static_cast<std::ptrdiff_t>((b * h + y) * w));
    return out;
}

inline std::vector<Tile> tile(const Raster& scene, const TileSpec& spec) {
    spec.validate();
    const auto rows = tile_starts(scene.height, spec.patch_size, spec.stride());
    const auto cols = tile_starts(scene.width, spec.patch_size, spec.stride());
    std::vector<Tile> out;
    out.reserve(rows.size() * cols.size());
    for (std::size_t r : rows)
        for (std::size_t c : cols) out.push_back({r, c, crop(scene, r, c, spec.patch_size, spec.patch_size)});
    return out;
}

/// Inverse of tile(): averages overlapping contributions.
inline Raster reassemble(const std::vector<Tile>& tiles, std::size_t height, std::size_t width) {
    if (tiles.empty()) throw ContractError("reassemble: no tiles");
    const std::size_t bands = tiles.front().patch.bands;
    std::vector<double> acc(bands * height * width, 0.0);
    std::vector<std::uint32_t> hits(height * width, 0);
    for (const auto& t : tiles) {
        const Raster& p = t.patch;
        for (std::size_t y = 0; y < p.height; ++y)
            for (std::size_t x = 0; x < p.width; ++x) {
                ++hits[(t.row + y) * width + t.col + x];
                for (std::size_t b = 0; b < bands; ++b)
                    acc[(b * height + t.row + y) * width + t.col + x] += p.at(b, y, x);
            }
    }
    Raster out(bands, height, width, tiles.front().patch.modality);
    for (std::size_t b = 0; b < bands; ++b)
        for (std::size_t i = 0; i < height * width; ++i) {
            if (hits[i] == 0) throw ContractError("reassemble: pixel not covered by any tile");
            out.data[b * height * width + i] = static_cast<float>(acc[b * height * width + i] / hits[i]);
        }
    return out;
}

/// Centered square crop; offsets floor((H-size)/2), floor((W-size)/2).
inline Raster center_crop(const Raster& r, std::size_t size) {
    if (size > std::min(r.height, r.width)) {
        throw DimensionError("center_crop: size " + std::to_string(size) + " exceeds raster " +
                             std::to_string(r.height) + "x" + std::to_string(r.width));
    }
    return crop(r, (r.height - size) / 2, (r.width - size) / 2, size, size);
}

// ---- pairing ---------------------------------------------------------------

/// Seeded uniform permutation of [0, n) by Fisher-Yates.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(perm[i - 1], perm[pick(rng)]);
    }
    return perm;
}

/// Reassigns cloud-free images across triplets by a seeded permutation,
/// removing pixelwise correspondence with the cloudy inputs.
inline std::vector<PatchTriplet> shuffle_unpair(const std::vector<PatchTriplet>& triplets, std::uint64_t seed) {
    if (triplets.empty()) throw ContractError("shuffle_unpair: empty list");
    const auto perm = seeded_permutation(triplets.size(), seed);
    std::vector<PatchTriplet> out = triplets;
    for (std::size_t i = 0; i < triplets.size(); ++i) out[i].s2_cloudfree = triplets[perm[i]].s2_cloudfree;
    return out;
}

/// Index ranges [0, train_end) and [train_end, n): the last 5% (floored) validate.
inline std::size_t train_validation_boundary(std::size_t n, double validation_fraction = 0.05) {
    auto val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * validation_fraction));
    return n - std::min(val, n);
}

// ---- tensor bridge ---------------------------------------------------------

template <typename T = float>
Tensor<T> to_tensor(const Raster& r) {
    std::vector<T> v(r.data.begin(), r.data.end());
    return Tensor<T>(Shape{1, r.bands, r.height, r.width}, std::move(v));
}

template <typename T>
Raster to_raster(const Tensor<T>& t, Modality modality) {
    const Shape& s = t.shape();
    if (s.n != 1) throw DimensionError("to_raster: batch (axis 0) must be 1, got " + std::to_string(s.n));
    std::vector<float> v(t.data().begin(), t.data().end());
    return Raster(s.c, s.h, s.w, modality, std::move(v));
}

}  // namespace cloudfusion
