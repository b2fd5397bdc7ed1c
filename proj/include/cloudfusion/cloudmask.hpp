#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cloudfusion/error.hpp"
#include "cloudfusion/parallel.hpp"
#include "cloudfusion/raster.hpp"

namespace cloudfusion {

/// Single-band map of per-pixel cloud probability in [0, 1].
class CloudMask {
public:
    CloudMask() = default;
    CloudMask(std::size_t height, std::size_t width, float fill = 0.0f)
        : raster_(1, height, width, Modality::Mask, fill) {
        check_value(fill);
    }
    explicit CloudMask(Raster r) : raster_(std::move(r)) {
        if (raster_.bands != 1) {
            throw DimensionError("cloud mask: expected 1 band, got " + std::to_string(raster_.bands));
        }
        raster_.modality = Modality::Mask;
        for (float v : raster_.data) check_value(v);
    }

    std::size_t height() const { return raster_.height; }
    std::size_t width() const { return raster_.width; }
    std::size_t size() const { return raster_.data.size(); }
    std::span<const float> values() const& { return raster_.data; }
    std::vector<float> values() && { return std::move(raster_.data); }
    float at(std::size_t y, std::size_t x) const { return raster_.at(0, y, x); }
    const Raster& raster() const& { return raster_; }
    Raster raster() && { return std::move(raster_); }

    bool operator==(const CloudMask&) const = default;

private:
    static void check_value(float v) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw ParameterError("cloud mask: value " + std::to_string(v) + " outside [0, 1]");
        }
    }
    Raster raster_;
};

/// Pluggable per-pixel cloud scorer; receives every band of one pixel.
struct Detector {
    std::function<double(std::span<const float>)> score;
    std::size_t required_bands = 0;  // 0 accepts any band count
    std::string name = "custom";
};

/// Brightness stand-in for a learned detector on 13-band S2 reflectances (DN,
/// 0..10000): mean of blue, green, red and cirrus (B10) scaled by 1/0.35.
inline Detector baseline_detector() {
    return Detector{[](std::span<const float> px) {
                        const double blue = px[1], green = px[2], red = px[3], cirrus = px[10];
                        const double mean = (blue + green + red + cirrus) / 4.0 / 10000.0;
                        return std::clamp(mean / 0.35, 0.0, 1.0);
                    },
                    13, "baseline"};
}

inline Detector constant_detector(double value) {
    return Detector{[value](std::span<const float>) { return value; }, 0, "constant"};
}

inline CloudMask cloud_probability(const Raster& s2, const Detector& detector = baseline_detector()) {
    if (detector.required_bands != 0 && s2.bands != detector.required_bands) {
        throw DimensionError("cloud_probability: detector '" + detector.name + "' needs " +
                             std::to_string(detector.required_bands) + " bands, got " + std::to_string(s2.bands));
    }
    Raster out(1, s2.height, s2.width, Modality::Mask);
    std::vector<float> px(s2.bands);
    const std::size_t p = s2.plane();
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t b = 0; b < s2.bands; ++b) px[b] = s2.data[b * p + i];
        double s = detector.score(px);
        if (!std::isfinite(s)) throw NonFiniteError("cloud_probability: detector returned a non-finite score");
        out.data[i] = static_cast<float>(std::clamp(s, 0.0, 1.0));
    }
    return CloudMask(std::move(out));
}

// ---- refinement ------------------------------------------------------------

inline constexpr double kMaskThreshold = 0.5;
inline constexpr double kMaskSigma = 2.0;
inline constexpr std::size_t kMaskRadius = 6;  // 3 sigma

/// Normalized 1-D Gaussian taps on [-radius, radius].
inline std::vector<double> gaussian_kernel(double sigma, std::size_t radius) {
    std::vector<double> k(2 * radius + 1);
    double total = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        double d = static_cast<double>(i) - static_cast<double>(radius);
        k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
        total += k[i];
    }
    for (double& v : k) v /= total;
    return k;
}

/// Half-sample symmetric reflection (d c b a | a b c d | d c b a).
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
    const auto period = static_cast<std::ptrdiff_t>(2 * n);
    std::ptrdiff_t m = i % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m < static_cast<std::ptrdiff_t>(n) ? m : period - 1 - m);
}

/// Zeroes values below 0.5 (keeping the rest unchanged), then blurs with a
/// sigma = 2 Gaussian under reflect padding.
inline CloudMask refine_mask(const CloudMask& prob) {
    const std::size_t h = prob.height(), w = prob.width();
    const auto kernel = gaussian_kernel(kMaskSigma, kMaskRadius);
    const auto r = static_cast<std::ptrdiff_t>(kMaskRadius);

    std::vector<double> kept(h * w);
    for (std::size_t i = 0; i < kept.size(); ++i) {
        double v = prob.values()[i];
        kept[i] = v < kMaskThreshold ? 0.0 : v;
    }
    std::vector<double> horiz(h * w);
    parallel_for(h, [&](std::size_t y) {
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t k = -r; k <= r; ++k)
                acc += kernel[static_cast<std::size_t>(k + r)] *
                       kept[y * w + reflect_index(static_cast<std::ptrdiff_t>(x) + k, w)];
            horiz[y * w + x] = acc;
        }
    });
    Raster out(1, h, w, Modality::Mask);
    parallel_for(h, [&](std::size_t y) {
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t k = -r; k <= r; ++k)
                acc += kernel[static_cast<std::size_t>(k + r)] *
                       horiz[reflect_index(static_cast<std::ptrdiff_t>(y) + k, h) * w + x];
            out.data[y * w + x] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
        }
    });
    return CloudMask(std::move(out));
}

// ---- coverage statistics -----------------------------------------------------

inline double coverage_percent(const CloudMask& m) {
    if (m.size() == 0) return 0.0;
    double total = 0.0;
    for (float v : m.values()) total += v;
    return 100.0 * total / static_cast<double>(m.size());
}

struct CoverageStats {
    double mean_percent = 0.0;
    double std_percent = 0.0;
    std::array<std::size_t, 20> histogram{};  // 5%-wide bins over [0, 100], last bin closed
    std::size_t count = 0;
};

inline std::size_t coverage_bin(double percent) {
    auto bin = static_cast<std::ptrdiff_t>(std::floor(percent / 5.0));
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(bin, 0, 19));
}

inline CoverageStats coverage_stats_from_percents(const std::vector<double>& percents) {
    if (percents.empty()) throw ContractError("coverage_stats: empty mask list");
    CoverageStats s;
    s.count = percents.size();
    double total = 0.0;
    for (double p : percents) total += p;
    s.mean_percent = total / static_cast<double>(percents.size());
    double var = 0.0;
    for (double p : percents) var += (p - s.mean_percent) * (p - s.mean_percent);
    s.std_percent = std::sqrt(var / static_cast<double>(percents.size()));
    for (double p : percents) ++s.histogram[coverage_bin(p)];
    return s;
}

inline CoverageStats coverage_stats(const std::vector<CloudMask>& masks) {
    std::vector<double> percents;
    percents.reserve(masks.size());
    for (const auto& m : masks) percents.push_back(coverage_percent(m));
    return coverage_stats_from_percents(percents);
}

/// Text histogram followed by the `mean=<x.xx>% std=<y.yy>%` summary line.
inline std::string format_coverage(const CoverageStats& s) {
    std::string out;
    const std::size_t peak = std::max<std::size_t>(1, *std::max_element(s.histogram.begin(), s.histogram.end()));
    char line[128];
    for (std::size_t b = 0; b < s.histogram.size(); ++b) {
        std::size_t bar = s.histogram[b] * 40 / peak;
        std::snprintf(line, sizeof line, "%3zu-%3zu%% %6zu ", b * 5, b * 5 + 5, s.histogram[b]);
        out += line;
        out += std::string(bar, '#');
        out += '\n';
    }
    std::snprintf(line, sizeof line, "mean=%.2f%% std=%.2f%%\n", s.mean_percent, s.std_percent);
    out += line;
    return out;
}

}  // namespace cloudfusion
