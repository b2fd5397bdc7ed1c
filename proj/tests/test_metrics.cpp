#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cloudfusion/metrics.hpp"
#include "metric_oracles.hpp"
#include "test_util.hpp"

using namespace cloudfusion;
using testutil::random_embeddings;
using testutil::random_raster;

namespace {

Raster unit_raster(std::uint64_t seed, std::size_t b = 3, std::size_t h = 8, std::size_t w = 8) {
    return random_raster(b, h, w, seed, 0.0, 1.0);
}

EmbeddingSet from_rows(std::vector<std::vector<float>> rows) {
    EmbeddingSet s;
    s.n = rows.size();
    s.d = rows.front().size();
    for (const auto& r : rows) s.values.insert(s.values.end(), r.begin(), r.end());
    return s;
}

TEST(PixelMetrics, HandCases) {
    auto x = unit_raster(1);
    EXPECT_EQ(mae(x, x), 0.0);
    EXPECT_EQ(rmse(x, x), 0.0);
    Raster a(1, 1, 2, Modality::Other, std::vector<float>{0.0f, 0.0f});
    Raster b(1, 1, 2, Modality::Other, std::vector<float>{0.5f, 0.5f});
    EXPECT_EQ(mae(a, b), 0.5);
    EXPECT_EQ(rmse(a, b), 0.5);
    Raster c(1, 1, 2, Modality::Other, std::vector<float>{0.0f, 0.25f});
    Raster d(1, 1, 2, Modality::Other, std::vector<float>{0.0f, 0.5f});
    EXPECT_EQ(mae(c, d), 0.125);
    EXPECT_EQ(rmse(c, d), std::sqrt(0.03125));
    EXPECT_THROW(mae(a, Raster(1, 2, 1)), DimensionError);
}

TEST(PixelMetrics, TwoPixelExample) {
    Raster a(1, 1, 2, Modality::Other, std::vector<float>{0.0f, 0.0f});
    Raster b(1, 1, 2, Modality::Other, std::vector<float>{0.0f, 0.2f});
    EXPECT_NEAR(mae(a, b), 0.1, 1e-8);
    EXPECT_NEAR(rmse(a, b), 0.14142, 1e-5);
}

TEST(Psnr, KnownValues) {
    EXPECT_EQ(psnr_from_rmse(0.1), 20.0);
    EXPECT_EQ(psnr_from_rmse(1.0), 0.0);
    auto x = unit_raster(2);
    EXPECT_TRUE(std::isinf(psnr(x, x)));
    EXPECT_EQ(format_metric(psnr(x, x)), "inf");
}

TEST(Psnr, ConsistentWithRmse) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto x = unit_raster(s), y = unit_raster(s + 100);
        EXPECT_NEAR(psnr(x, y), 20.0 * std::log10(1.0 / rmse(x, y)), 1e-9);
    }
}

TEST(Ssim, IdentityAndSymmetry) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        auto x = unit_raster(s), y = unit_raster(s + 50);
        EXPECT_NEAR(ssim(x, x), 1.0, 1e-9);
        EXPECT_EQ(ssim(x, y), ssim(y, x));
        EXPECT_LE(ssim(x, y), 1.0);
        EXPECT_GE(ssim(x, y), -1.0);
    }
}

TEST(Ssim, MatchesSecondImplementation) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto x = unit_raster(s, 3, 17, 9), y = unit_raster(s + 500, 3, 17, 9);
        EXPECT_NEAR(ssim(x, y), testutil::ssim_oracle(x, y), 1e-9);
    }
}

TEST(Ssim, AsPrintedVariantDiffers) {
    auto x = unit_raster(3), y = unit_raster(4);
    const double printed = ssim(x, y, SsimOptions{true});
    EXPECT_TRUE(std::isfinite(printed));
    EXPECT_NE(printed, ssim(x, y));
}

TEST(Sam, Properties) {
    auto x = unit_raster(5);
    EXPECT_NEAR(sam(x, x), 0.0, 1e-6);
    Raster x2 = x;
    for (float& v : x2.data) v *= 2.0f;
    EXPECT_LT(std::abs(sam(x, x2)), 1e-6);
    Raster x7 = x;
    for (float& v : x7.data) v *= 7.5f;
    EXPECT_LT(std::abs(sam(x, x7)), 1e-6);
    Raster neg = x;
    for (float& v : neg.data) v = -v;
    EXPECT_NEAR(sam(x, neg), 180.0, 1e-6);
    Raster a(1, 1, 2, Modality::Other, std::vector<float>{1.0f, 0.0f});
    Raster b(1, 1, 2, Modality::Other, std::vector<float>{0.0f, 3.0f});
    EXPECT_NEAR(sam(a, b), 90.0, 1e-12);
    EXPECT_THROW(sam(a, Raster(1, 1, 2)), ParameterError);
    auto y = unit_raster(6);
    EXPECT_GE(sam(x, y), 0.0);
    EXPECT_LE(sam(x, y), 180.0);
}

TEST(Embed, PoolingMatchesExplicitSubsample) {
    // 32x32 -> each bin is an exact 2x2 block
    auto r = random_raster(3, 32, 32, 9);
    auto v = pool_embedding(r);
    ASSERT_EQ(v.size(), 768u);
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t gy = 0; gy < 16; ++gy)
            for (std::size_t gx = 0; gx < 16; ++gx) {
                double s = 0;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) s += r.at(b, 2 * gy + dy, 2 * gx + dx);
                EXPECT_FLOAT_EQ(v[(b * 16 + gy) * 16 + gx], static_cast<float>(s / 4.0));
            }
    auto same = random_raster(3, 16, 16, 10);
    auto id = pool_embedding(same);
    EXPECT_TRUE(std::equal(id.begin(), id.end(), same.data.begin()));
    EXPECT_THROW(pool_embedding(Raster(3, 8, 8)), DimensionError);
}

TEST(Embed, OrderPreservingAndDeterministic) {
    std::vector<Raster> imgs = {random_raster(3, 16, 16, 1), random_raster(3, 16, 16, 2), random_raster(3, 16, 16, 1)};
    auto e = embed(imgs);
    auto rev = embed({imgs[2], imgs[1], imgs[0]});
    EXPECT_EQ(e.n, 3u);
    EXPECT_EQ(e.d, 768u);
    for (std::size_t j = 0; j < e.d; ++j) {
        EXPECT_EQ(e.row(0)[j], e.row(2)[j]);
        EXPECT_EQ(e.row(1)[j], rev.row(1)[j]);
        EXPECT_EQ(e.row(0)[j], rev.row(2)[j]);
    }
}

TEST(KnnRadius, HandExamples) {
    auto s = from_rows({{0.0f}, {1.0f}, {3.0f}});
    EXPECT_EQ(knn_radius(s, 1), (std::vector<double>{1.0, 1.0, 2.0}));
    auto dup = from_rows({{2.0f}, {2.0f}, {5.0f}});
    auto r = knn_radius(dup, 1);
    EXPECT_EQ(r[0], 0.0);
    EXPECT_EQ(r[1], 0.0);
    EXPECT_THROW(knn_radius(s, 3), ParameterError);
    EXPECT_THROW(knn_radius(s, 0), ParameterError);
}

TEST(KnnRadius, MatchesFullSortOracle) {
    auto s = random_embeddings(64, 8, 3);
    for (std::size_t k : {1u, 3u, 10u}) EXPECT_EQ(knn_radius(s, k), testutil::brute_knn_radius(s, k));
}

TEST(InManifold, Definition) {
    auto s = from_rows({{0.0f, 0.0f}, {3.0f, 0.0f}, {0.0f, 4.0f}});
    auto radii = knn_radius(s, 1);  // {3, 3, 4}
    const float self[2] = {3.0f, 0.0f}, boundary[2] = {0.0f, 8.0f}, far[2] = {20.0f, 20.0f};
    EXPECT_TRUE(in_manifold(self, s, radii));
    EXPECT_TRUE(in_manifold(boundary, s, radii));
    EXPECT_FALSE(in_manifold(far, s, radii));
}

TEST(PrecisionRecallTest, SelfAndSeparated) {
    auto real = random_embeddings(30, 4, 1);
    auto pr = precision_recall(real, real, PrConfig{3});
    EXPECT_EQ(pr.precision, 1.0);
    EXPECT_EQ(pr.recall, 1.0);
    auto far = random_embeddings(30, 4, 2, 1000.0);
    auto sep = precision_recall(real, far, PrConfig{3});
    EXPECT_EQ(sep.precision, 0.0);
    EXPECT_EQ(sep.recall, 0.0);
    EXPECT_THROW(precision_recall(random_embeddings(3, 4, 1), real, PrConfig{3}), ParameterError);
    EXPECT_THROW(precision_recall(random_embeddings(30, 5, 1), real, PrConfig{3}), DimensionError);
}

TEST(PrecisionRecallTest, MatchesBruteForceOracle) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto real = random_embeddings(64, 8, seed);
        auto gen = random_embeddings(64, 8, seed + 100, 0.3);
        for (std::size_t k : {1u, 3u, 10u}) {
            auto got = precision_recall(real, gen, PrConfig{k});
            auto want = testutil::brute_precision_recall(real, gen, k);
            EXPECT_EQ(got.precision, want.precision);
            EXPECT_EQ(got.recall, want.recall);
        }
    }
}

TEST(PrecisionRecallTest, PermutationInvariant) {
    auto real = random_embeddings(40, 6, 7);
    auto gen = random_embeddings(40, 6, 8, 0.2);
    auto base = precision_recall(real, gen, PrConfig{3});
    auto shuffle = [](const EmbeddingSet& s, std::uint64_t seed) {
        std::vector<std::size_t> order(s.n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), std::mt19937_64(seed));
        EmbeddingSet out = s;
        for (std::size_t i = 0; i < s.n; ++i)
            std::copy(s.row(order[i]), s.row(order[i]) + s.d, out.values.begin() + static_cast<std::ptrdiff_t>(i * s.d));
        return out;
    };
    auto p = precision_recall(shuffle(real, 1), shuffle(gen, 2), PrConfig{3});
    EXPECT_EQ(p.precision, base.precision);
    EXPECT_EQ(p.recall, base.recall);
}

TEST(PrecisionRecallTest, AddingInsidePointKeepsNumerator) {
    auto real = random_embeddings(40, 6, 9);
    auto gen = random_embeddings(40, 6, 10, 0.5);
    const double before = precision_recall(real, gen, PrConfig{3}).precision * 40.0;
    EmbeddingSet more = gen;
    more.values.insert(more.values.end(), real.row(0), real.row(0) + real.d);
    more.n += 1;
    const double after = precision_recall(real, more, PrConfig{3}).precision * 41.0;
    EXPECT_GE(std::llround(after), std::llround(before) + 1);
}

TEST(F1, TableValues) {
    EXPECT_NEAR(f1(0.560, 0.491), 0.523, 0.0005);
    EXPECT_NEAR(f1(0.564, 0.551), 0.557, 0.0005);
    EXPECT_NEAR(f1(0.155, 0.781), 0.258, 0.001);
    EXPECT_EQ(f1(0.0, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(f1(0.5, 0.5), 0.5);
}

TEST(Reports, CsvAndTextLayout) {
    MetricReport r;
    r.mae = 0.25;
    r.psnr = std::numeric_limits<double>::infinity();
    const std::string csv = format_report_csv(r);
    EXPECT_EQ(csv, "MAE,RMSE,PSNR,SSIM,SAM,precision,recall,F1\n0.250000,,inf,,,,,\n");
    const std::string text = format_report_text(r);
    EXPECT_NE(text.find("MAE"), std::string::npos);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 8);
}

TEST(Reports, PixelReportAveragesPairs) {
    std::vector<Raster> p = {unit_raster(1), unit_raster(2)}, t = {unit_raster(3), unit_raster(4)};
    auto r = pixel_report(p, t);
    EXPECT_NEAR(*r.mae, (mae(p[0], t[0]) + mae(p[1], t[1])) / 2, 1e-15);
    EXPECT_FALSE(r.f1.has_value());
    EXPECT_THROW(pixel_report(p, {t[0]}), ContractError);
}

TEST(Reports, UnitConversion) {
    Raster r(1, 1, 3, Modality::Other, std::vector<float>{-1.0f, 0.0f, 1.0f});
    EXPECT_EQ(to_unit(r).data, (std::vector<float>{0.0f, 0.5f, 1.0f}));
}

}  // namespace
