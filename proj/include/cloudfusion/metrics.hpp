#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cloudfusion/error.hpp"
#include "cloudfusion/parallel.hpp"
#include "cloudfusion/raster.hpp"

namespace cloudfusion {

// ---- pixel and image metrics ---------------------------------------------------
// Inputs are expected in [0, 1]; use to_unit() on model outputs in [-1, 1].

inline Raster to_unit(const Raster& r) {
    Raster out = r;
    for (float& v : out.data) v = (v + 1.0f) / 2.0f;
    return out;
}

namespace detail {
inline void require_same_dims(const Raster& x, const Raster& y, const char* op) {
    if (x.bands != y.bands || x.height != y.height || x.width != y.width) {
        throw DimensionError(std::string(op) + ": dims " + std::to_string(x.bands) + "x" + std::to_string(x.height) +
                             "x" + std::to_string(x.width) + " vs " + std::to_string(y.bands) + "x" +
                             std::to_string(y.height) + "x" + std::to_string(y.width));
    }
    if (x.data.empty()) throw DimensionError(std::string(op) + ": empty raster");
}
}  // namespace detail

inline double mae(const Raster& x, const Raster& y) {
    detail::require_same_dims(x, y, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) s += std::abs(static_cast<double>(x.data[i]) - y.data[i]);
    return s / static_cast<double>(x.data.size());
}

inline double rmse(const Raster& x, const Raster& y) {
    detail::require_same_dims(x, y, "rmse");
    double s = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double d = static_cast<double>(x.data[i]) - y.data[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(x.data.size()));
}

/// 20 log10(1 / rmse); +inf when rmse is 0.
inline double psnr_from_rmse(double r) {
    if (r == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(1.0 / r);
}

inline double psnr(const Raster& x, const Raster& y) { return psnr_from_rmse(rmse(x, y)); }

inline constexpr double kSsimEps1 = 0.01 * 0.01;
inline constexpr double kSsimEps2 = 0.03 * 0.03;

struct SsimOptions {
    // Literal formula: (mu_x + mu_y + e1)(sigma_x + sigma_y + e2) in the denominator,
    // with standard deviations, instead of squared means and variances.
    bool as_printed = false;
};

/// SSIM with statistics over the whole image (all bands), not windowed.
inline double ssim(const Raster& x, const Raster& y, SsimOptions opt = {}) {
    detail::require_same_dims(x, y, "ssim");
    const double n = static_cast<double>(x.data.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        mx += x.data[i];
        my += y.data[i];
    }
    mx /= n;
    my /= n;
    double vx = 0.0, vy = 0.0, cxy = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double dx = x.data[i] - mx, dy = y.data[i] - my;
        vx += dx * dx;
        vy += dy * dy;
        cxy += dx * dy;
    }
    vx /= n;
    vy /= n;
    cxy /= n;
    const double num = (2.0 * mx * my + kSsimEps1) * (2.0 * cxy + kSsimEps2);
    if (opt.as_printed) {
        return num / ((mx + my + kSsimEps1) * (std::sqrt(vx) + std::sqrt(vy) + kSsimEps2));
    }
    return num / ((mx * mx + my * my + kSsimEps1) * (vx + vy + kSsimEps2));
}

/// Spectral angle between the flattened images, in degrees.
inline double sam(const Raster& x, const Raster& y) {
    detail::require_same_dims(x, y, "sam");
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double a = x.data[i], b = y.data[i];
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    if (xx == 0.0 || yy == 0.0) throw ParameterError("sam: zero-norm input");
    const double c = std::clamp(xy / std::sqrt(xx * yy), -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

// ---- embeddings and improved precision/recall ------------------------------------

/// n row vectors of dimension d, row-major.
struct EmbeddingSet {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<float> values;

    const float* row(std::size_t i) const { return values.data() + i * d; }
};

using Embedder = std::function<std::vector<float>(const Raster&)>;

inline constexpr std::size_t kEmbedGrid = 16;

/// Area-average each band over a 16x16 grid of bins [floor(i*H/16), floor((i+1)*H/16)).
inline std::vector<float> pool_embedding(const Raster& r) {
    if (r.height < kEmbedGrid || r.width < kEmbedGrid) {
        throw DimensionError("embed: raster smaller than 16x16");
    }
    std::vector<float> out;
    out.reserve(r.bands * kEmbedGrid * kEmbedGrid);
    for (std::size_t b = 0; b < r.bands; ++b) {
        for (std::size_t gy = 0; gy < kEmbedGrid; ++gy) {
            const std::size_t y0 = gy * r.height / kEmbedGrid, y1 = (gy + 1) * r.height / kEmbedGrid;
            for (std::size_t gx = 0; gx < kEmbedGrid; ++gx) {
                const std::size_t x0 = gx * r.width / kEmbedGrid, x1 = (gx + 1) * r.width / kEmbedGrid;
                double s = 0.0;
                for (std::size_t y = y0; y < y1; ++y)
                    for (std::size_t x = x0; x < x1; ++x) s += r.at(b, y, x);
                out.push_back(static_cast<float>(s / static_cast<double>((y1 - y0) * (x1 - x0))));
            }
        }
    }
    return out;
}

inline EmbeddingSet embed(const std::vector<Raster>& images, const Embedder& embedder = pool_embedding) {
    EmbeddingSet set;
    set.n = images.size();
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto v = embedder(images[i]);
        if (i == 0) set.d = v.size();
        if (v.size() != set.d) throw DimensionError("embed: embedder returned vectors of different lengths");
        for (float f : v) {
            if (!std::isfinite(f)) throw NonFiniteError("embed: non-finite embedding value");
        }
        set.values.insert(set.values.end(), v.begin(), v.end());
    }
    return set;
}

/// Euclidean distance, accumulated in double in index order.
inline double embedding_distance(const float* a, const float* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double diff = static_cast<double>(a[j]) - static_cast<double>(b[j]);
        s += diff * diff;
    }
    return std::sqrt(s);
}

/// Distance from each point to its k-th nearest other point.
inline std::vector<double> knn_radius(const EmbeddingSet& set, std::size_t k) {
    if (k < 1) throw ParameterError("knn_radius: k must be >= 1");
    if (set.n <= k) {
        throw ParameterError("knn_radius: need more than k=" + std::to_string(k) + " points, got " +
                             std::to_string(set.n));
    }
    std::vector<double> radii(set.n);
    parallel_for(set.n, [&](std::size_t i) {
        std::vector<double> dist;
        dist.reserve(set.n - 1);
        for (std::size_t j = 0; j < set.n; ++j) {
            if (j != i) dist.push_back(embedding_distance(set.row(i), set.row(j), set.d));
        }
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
        radii[i] = dist[k - 1];
    });
    return radii;
}

/// 1 if phi lies within (<=) the k-NN ball of some point of the set.
inline bool in_manifold(const float* phi, const EmbeddingSet& set, const std::vector<double>& radii) {
    for (std::size_t j = 0; j < set.n; ++j) {
        if (embedding_distance(phi, set.row(j), set.d) <= radii[j]) return true;
    }
    return false;
}

struct PrConfig {
    std::size_t k = 10;
};

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
};

inline double manifold_fraction(const EmbeddingSet& queries, const EmbeddingSet& support, std::size_t k) {
    const auto radii = knn_radius(support, k);
    std::vector<char> hit(queries.n, 0);
    parallel_for(queries.n, [&](std::size_t i) { hit[i] = in_manifold(queries.row(i), support, radii) ? 1 : 0; });
    std::size_t count = 0;
    for (char h : hit) count += static_cast<std::size_t>(h);
    return static_cast<double>(count) / static_cast<double>(queries.n);
}

/// precision: generated points inside the real manifold; recall: the converse.
inline PrecisionRecall precision_recall(const EmbeddingSet& real, const EmbeddingSet& gen, PrConfig cfg = {}) {
    if (real.d != gen.d) throw DimensionError("precision_recall: embedding dimensions differ");
    if (real.n <= cfg.k || gen.n <= cfg.k) {
        throw ParameterError("precision_recall: both sets need more than k=" + std::to_string(cfg.k) + " points");
    }
    return {manifold_fraction(gen, real, cfg.k), manifold_fraction(real, gen, cfg.k)};
}

/// Harmonic mean; 0 when both inputs are 0.
inline double f1(double precision, double recall) {
    if (precision + recall <= 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

// ---- reports --------------------------------------------------------------------

struct MetricReport {
    std::optional<double> mae, rmse, psnr, ssim, sam, precision, recall, f1;
};

inline std::string format_metric(double v, int decimals = 6) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

namespace detail {
inline std::vector<std::pair<std::string, std::optional<double>>> report_fields(const MetricReport& r) {
    return {{"MAE", r.mae},   {"RMSE", r.rmse},           {"PSNR", r.psnr},     {"SSIM", r.ssim},
            {"SAM", r.sam},   {"precision", r.precision}, {"recall", r.recall}, {"F1", r.f1}};
}
}  // namespace detail

/// Header line and value line; absent metrics are empty fields.
inline std::string format_report_csv(const MetricReport& r) {
    std::string head, row;
    for (const auto& [name, value] : detail::report_fields(r)) {
        if (!head.empty()) {
            head += ',';
            row += ',';
        }
        head += name;
        if (value) row += format_metric(*value);
    }
    return head + "\n" + row + "\n";
}

inline std::string format_report_text(const MetricReport& r) {
    std::string out;
    char line[96];
    for (const auto& [name, value] : detail::report_fields(r)) {
        std::snprintf(line, sizeof line, "%-10s %14s\n", name.c_str(), value ? format_metric(*value).c_str() : "-");
        out += line;
    }
    return out;
}

/// Mean pixel/image metrics over aligned pairs (inputs already in [0, 1]).
inline MetricReport pixel_report(const std::vector<Raster>& preds, const std::vector<Raster>& targets) {
    if (preds.size() != targets.size() || preds.empty()) {
        throw ContractError("pixel_report: need equally many, non-empty predictions and targets");
    }
    double a = 0, b = 0, p = 0, s = 0, g = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        a += mae(preds[i], targets[i]);
        b += rmse(preds[i], targets[i]);
        p += psnr(preds[i], targets[i]);
        s += ssim(preds[i], targets[i]);
        g += sam(preds[i], targets[i]);
    }
    const double n = static_cast<double>(preds.size());
    MetricReport r;
    r.mae = a / n;
    r.rmse = b / n;
    r.psnr = p / n;
    r.ssim = s / n;
    r.sam = g / n;
    return r;
}

inline void add_precision_recall(MetricReport& r, const EmbeddingSet& real, const EmbeddingSet& gen, PrConfig cfg) {
    auto pr = precision_recall(real, gen, cfg);
    r.precision = pr.precision;
    r.recall = pr.recall;
    r.f1 = f1(pr.precision, pr.recall);
}

}  // namespace cloudfusion
