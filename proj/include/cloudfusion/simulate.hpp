#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cloudfusion/cloudmask.hpp"
#include "cloudfusion/error.hpp"
#include "cloudfusion/raster.hpp"

namespace cloudfusion {

struct PerlinConfig {
    std::uint64_t seed = 0;
    int octaves = 4;
    double persistence = 0.5;
    double lacunarity = 2.0;
    double base_period = 64.0;  // lattice cell size in pixels at octave 0

    void validate() const {
        if (octaves < 1) throw ParameterError("perlin: octaves must be >= 1");
        if (!(persistence > 0.0 && persistence <= 1.0)) throw ParameterError("perlin: persistence must lie in (0, 1]");
        if (!(lacunarity > 1.0)) throw ParameterError("perlin: lacunarity must be > 1");
        if (!(base_period >= 2.0)) throw ParameterError("perlin: base_period must be >= 2");
    }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t lattice_hash(std::int64_t ix, std::int64_t iy, int octave, std::uint64_t seed) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(ix));
    h = splitmix64(h ^ static_cast<std::uint64_t>(iy));
    return splitmix64(h ^ static_cast<std::uint64_t>(octave));
}

// unit gradients along the 8 compass directions
inline std::pair<double, double> compass_gradient(std::uint64_t h) {
    constexpr double d = 0.70710678118654752440;
    static constexpr std::pair<double, double> dirs[8] = {{1, 0}, {d, d}, {0, 1}, {-d, d},
                                                          {-1, 0}, {-d, -d}, {0, -1}, {d, -d}};
    return dirs[h & 7];
}

inline double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

inline double gradient_noise(double x, double y, int octave, std::uint64_t seed) {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
    const double dx = x - fx, dy = y - fy;
    auto corner = [&](std::int64_t cx, std::int64_t cy, double ox, double oy) {
        auto [gx, gy] = compass_gradient(lattice_hash(cx, cy, octave, seed));
        return gx * ox + gy * oy;
    };
    const double n00 = corner(ix, iy, dx, dy);
    const double n10 = corner(ix + 1, iy, dx - 1.0, dy);
    const double n01 = corner(ix, iy + 1, dx, dy - 1.0);
    const double n11 = corner(ix + 1, iy + 1, dx - 1.0, dy - 1.0);
    const double u = fade(dx), v = fade(dy);
    const double a = n00 + u * (n10 - n00);
    const double b = n01 + u * (n11 - n01);
    return a + v * (b - a);
}

}  // namespace detail

/// Octave sum of gradient noise before normalization, row-major height x width.
inline std::vector<double> perlin_raw(std::size_t width, std::size_t height, const PerlinConfig& cfg) {
    cfg.validate();
    std::vector<double> out(width * height, 0.0);
    for (int o = 0; o < cfg.octaves; ++o) {
        const double period = cfg.base_period / std::pow(cfg.lacunarity, o);
        const double amplitude = std::pow(cfg.persistence, o);
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x)
                out[y * width + x] += amplitude * detail::gradient_noise(static_cast<double>(x) / period,
                                                                         static_cast<double>(y) / period, o, cfg.seed);
    }
    return out;
}

/// Perlin map min-max normalized to [0, 1]. A flat field maps to all zeros.
inline CloudMask perlin(std::size_t width, std::size_t height, const PerlinConfig& cfg) {
    if (width < 1 || height < 1) throw ParameterError("perlin: dims must be >= 1");
    const auto raw = perlin_raw(width, height, cfg);
    auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double mn = *lo, range = *hi - *lo;
    Raster r(1, height, width, Modality::Mask);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        r.data[i] = range > 0.0 ? static_cast<float>(std::clamp((raw[i] - mn) / range, 0.0, 1.0)) : 0.0f;
    }
    return CloudMask(std::move(r));
}

struct BlendResult {
    Raster cloudy;
    CloudMask mask;
};

/// Alpha-blends every band evenly toward white (+1): (1 - a) x + a.
inline BlendResult blend_perlin(const Raster& cloudfree, const CloudMask& alpha) {
    if (cloudfree.height != alpha.height() || cloudfree.width != alpha.width()) {
        throw DimensionError("blend_perlin: raster " + std::to_string(cloudfree.height) + "x" +
                             std::to_string(cloudfree.width) + " vs mask " + std::to_string(alpha.height()) + "x" +
                             std::to_string(alpha.width()));
    }
    constexpr float kCloud = 1.0f;
    Raster out = cloudfree;
    const std::size_t p = cloudfree.plane();
    for (std::size_t b = 0; b < cloudfree.bands; ++b)
        for (std::size_t i = 0; i < p; ++i) {
            const float a = alpha.values()[i];
            out.data[b * p + i] = (1.0f - a) * cloudfree.data[b * p + i] + a * kCloud;
        }
    return {std::move(out), alpha};
}

/// Pastes a real cloudy observation over its cloud-free counterpart, weighted by m.
inline Raster blend_copy_paste(const Raster& cloudfree, const Raster& real_cloudy, const CloudMask& m) {
    if (cloudfree.bands != real_cloudy.bands) {
        throw DimensionError("blend_copy_paste: band count " + std::to_string(cloudfree.bands) + " vs " +
                             std::to_string(real_cloudy.bands));
    }
    require_same_hw(cloudfree, real_cloudy, "blend_copy_paste");
    if (cloudfree.height != m.height() || cloudfree.width != m.width()) {
        throw DimensionError("blend_copy_paste: mask dims differ from rasters");
    }
    Raster out = cloudfree;
    const std::size_t p = cloudfree.plane();
    for (std::size_t b = 0; b < cloudfree.bands; ++b)
        for (std::size_t i = 0; i < p; ++i) {
            const float a = m.values()[i];
            out.data[b * p + i] = std::lerp(cloudfree.data[b * p + i], real_cloudy.data[b * p + i], a);
        }
    return out;
}

// ---- synthetic scenes --------------------------------------------------------

enum class CloudScheme { Copy, Perlin };

inline const char* scheme_name(CloudScheme s) { return s == CloudScheme::Copy ? "copy" : "perlin"; }

/// Desk-scale stand-in for co-registered SEN12MS-CR style triplets. Land cover
/// is two Perlin fields shared by the SAR and optical rasters; clouds come from
/// a third field whose seed stream (`cloud_seed`) is independent of the scene.
struct SceneConfig {
    std::size_t size = 32;
    std::uint64_t seed = 0;
    std::uint64_t cloud_seed = 1;
    CloudScheme scheme = CloudScheme::Copy;
};

inline PatchTriplet synthetic_triplet(std::size_t index, const SceneConfig& cfg) {
    const std::size_t n = cfg.size;
    const double period = std::max(4.0, static_cast<double>(n) / 2.0);
    const std::uint64_t scene_key = detail::splitmix64(cfg.seed * 1000003ULL + index);
    const std::uint64_t cloud_key = detail::splitmix64(cfg.cloud_seed * 7919ULL + index + 0x5bd1e995ULL);

    const CloudMask land = perlin(n, n, {scene_key ^ 0x1, 3, 0.5, 2.0, period});
    const CloudMask moist = perlin(n, n, {scene_key ^ 0x2, 3, 0.5, 2.0, period});
    std::mt19937_64 rng(scene_key);
    std::normal_distribution<float> speckle(0.0f, 0.05f);

    Raster clear(3, n, n, Modality::S2);
    Raster s1(3, n, n, Modality::S1);
    const std::size_t p = n * n;
    for (std::size_t i = 0; i < p; ++i) {
        const float l = land.values()[i], m = moist.values()[i];
        clear.data[i] = std::clamp(-0.7f + 0.9f * l + 0.2f * (1.0f - m), -1.0f, 1.0f);
        clear.data[p + i] = std::clamp(-0.6f + 0.6f * l + 0.5f * m, -1.0f, 1.0f);
        clear.data[2 * p + i] = std::clamp(-0.7f + 0.5f * l + 0.3f * m, -1.0f, 1.0f);
        const float vv = std::clamp(-0.8f + 1.2f * l + speckle(rng), -1.0f, 1.0f);
        const float vh = std::clamp(-0.9f + 0.8f * m + 0.4f * l + speckle(rng), -1.0f, 1.0f);
        s1.data[i] = vv;
        s1.data[p + i] = vh;
        s1.data[2 * p + i] = (vv + vh) / 2.0f;
    }

    std::mt19937_64 cloud_rng(cloud_key);
    const double coverage = std::uniform_real_distribution<double>(0.0, 1.0)(cloud_rng);
    const CloudMask field = perlin(n, n, {cloud_key, 4, 0.5, 2.0, period});

    Raster cloudy;
    CloudMask mask;
    if (cfg.scheme == CloudScheme::Copy) {
        std::vector<float> sorted(field.values().begin(), field.values().end());
        std::sort(sorted.begin(), sorted.end());
        const auto q = static_cast<std::size_t>(std::clamp((1.0 - coverage) * static_cast<double>(p), 0.0,
                                                           static_cast<double>(p - 1)));
        const float threshold = sorted[q];
        Raster prob(1, n, n, Modality::Mask);
        for (std::size_t i = 0; i < p; ++i) {
            prob.data[i] = std::clamp(0.5f + 3.0f * (field.values()[i] - threshold), 0.0f, 1.0f);
        }
        mask = refine_mask(CloudMask(std::move(prob)));
        const CloudMask texture = perlin(n, n, {cloud_key ^ 0x3, 3, 0.5, 2.0, period / 2.0});
        Raster real_cloudy(3, n, n, Modality::S2);
        for (std::size_t i = 0; i < p; ++i) {
            const float t = texture.values()[i];
            real_cloudy.data[i] = std::clamp(0.45f + 0.45f * t, -1.0f, 1.0f);
            real_cloudy.data[p + i] = std::clamp(0.5f + 0.45f * t, -1.0f, 1.0f);
            real_cloudy.data[2 * p + i] = std::clamp(0.55f + 0.4f * t, -1.0f, 1.0f);
        }
        cloudy = blend_copy_paste(clear, real_cloudy, mask);
    } else {
        Raster alpha(1, n, n, Modality::Mask);
        for (std::size_t i = 0; i < p; ++i) {
            alpha.data[i] = static_cast<float>(std::clamp(2.0 * coverage * field.values()[i], 0.0, 1.0));
        }
        auto blended = blend_perlin(clear, CloudMask(std::move(alpha)));
        cloudy = std::move(blended.cloudy);
        mask = std::move(blended.mask);
    }
    PatchTriplet t(std::move(s1), std::move(cloudy), std::move(clear), "synth-" + std::to_string(index), Split::Train);
    t.mask = mask.raster();
    return t;
}

inline std::vector<PatchTriplet> synthetic_triplets(std::size_t count, const SceneConfig& cfg,
                                                    std::size_t first_index = 0) {
    std::vector<PatchTriplet> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(synthetic_triplet(first_index + i, cfg));
    return out;
}

/// Masks whose coverage fraction is drawn uniformly from [0, 1]; each pixel is
/// cloudy (1) with that probability.
inline std::vector<CloudMask> uniform_coverage_masks(std::size_t count, std::size_t height, std::size_t width,
                                                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<CloudMask> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double coverage = unit(rng);
        Raster r(1, height, width, Modality::Mask);
        for (float& v : r.data) v = unit(rng) < coverage ? 1.0f : 0.0f;
        out.emplace_back(std::move(r));
    }
    return out;
}

}  // namespace cloudfusion
