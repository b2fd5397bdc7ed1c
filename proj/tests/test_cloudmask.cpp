#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cloudfusion/cloudmask.hpp"
#include "cloudfusion/simulate.hpp"
#include "mask_oracles.hpp"
#include "test_util.hpp"

using namespace cloudfusion;

namespace {

CloudMask random_mask(std::size_t h, std::size_t w, std::uint64_t seed) {
    return CloudMask(testutil::random_raster(1, h, w, seed, 0.0, 1.0));
}

TEST(CloudProbability, DarkPatchGivesZeros) {
    Raster s2(13, 4, 4, Modality::S2, 0.0f);
    for (float v : cloud_probability(s2).values()) EXPECT_EQ(v, 0.0f);
}

TEST(CloudProbability, SaturatedPatchGivesOnes) {
    Raster s2(13, 4, 4, Modality::S2, 10000.0f);
    for (float v : cloud_probability(s2).values()) EXPECT_EQ(v, 1.0f);
}

TEST(CloudProbability, PluggedDetectorPassesThrough) {
    Raster s2(5, 3, 3, Modality::S2, 0.2f);
    for (float v : cloud_probability(s2, constant_detector(0.7)).values()) EXPECT_EQ(v, 0.7f);
}

TEST(CloudProbability, BaselineNeedsThirteenBands) {
    EXPECT_THROW(cloud_probability(Raster(3, 2, 2, Modality::S2)), DimensionError);
}

TEST(CloudProbability, BaselineFormula) {
    Raster s2(13, 1, 1, Modality::S2, 0.0f);
    s2.data[1] = 1000;   // blue
    s2.data[2] = 2000;   // green
    s2.data[3] = 3000;   // red
    s2.data[10] = 1000;  // cirrus
    EXPECT_NEAR(cloud_probability(s2).values()[0], (7000.0 / 4.0 / 10000.0) / 0.35, 1e-6);
}

TEST(RefineMask, BelowThresholdGivesZeros) {
    for (float v : refine_mask(CloudMask(20, 20, 0.4f)).values()) EXPECT_EQ(v, 0.0f);
}

TEST(RefineMask, ConstantOneStaysOne) {
    for (float v : refine_mask(CloudMask(20, 17, 1.0f)).values()) EXPECT_EQ(v, 1.0f);
}

TEST(RefineMask, ZerosStayZeros) {
    for (float v : refine_mask(CloudMask(9, 9, 0.0f)).values()) EXPECT_EQ(v, 0.0f);
}

TEST(RefineMask, SinglePixelBumpCenterIsKernelCenter) {
    Raster r(1, 21, 21, Modality::Mask, 0.0f);
    r.at(0, 10, 10) = 1.0f;
    CloudMask out = refine_mask(CloudMask(r));
    double total = 0.0;
    for (int dy = -6; dy <= 6; ++dy)
        for (int dx = -6; dx <= 6; ++dx) total += std::exp(-(dx * dx + dy * dy) / 8.0);
    EXPECT_NEAR(out.at(10, 10), 1.0 / total, 1e-7);
    auto oracle = testutil::dense_refine_oracle(CloudMask(r));
    for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_NEAR(out.values()[i], oracle[i], 1e-6);
}

TEST(RefineMask, EqualsDenseConvolutionOracle) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        CloudMask m = random_mask(23, 31, seed);
        CloudMask out = refine_mask(m);
        auto oracle = testutil::dense_refine_oracle(m);
        for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_NEAR(out.values()[i], oracle[i], 1e-6) << i;
    }
}

TEST(RefineMask, OutputRangeAndMonotone) {
    CloudMask base = random_mask(16, 16, 10);
    CloudMask ref = refine_mask(base);
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Raster raised = base.raster();
        const std::size_t i = std::uniform_int_distribution<std::size_t>(0, raised.data.size() - 1)(rng);
        raised.data[i] = std::min(1.0f, raised.data[i] + 0.3f);
        CloudMask out = refine_mask(CloudMask(raised));
        for (std::size_t k = 0; k < out.size(); ++k) {
            EXPECT_GE(out.values()[k], ref.values()[k]);
            EXPECT_GE(out.values()[k], 0.0f);
            EXPECT_LE(out.values()[k], 1.0f);
        }
    }
}

TEST(RefineMask, TranslationEquivariantAwayFromBorders) {
    Raster a(1, 40, 40, Modality::Mask, 0.0f), b(1, 40, 40, Modality::Mask, 0.0f);
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (std::size_t y = 12; y < 20; ++y)
        for (std::size_t x = 12; x < 20; ++x) {
            const float v = u(rng);
            a.at(0, y, x) = v;
            b.at(0, y + 3, x + 5) = v;
        }
    CloudMask ra = refine_mask(CloudMask(a)), rb = refine_mask(CloudMask(b));
    for (std::size_t y = 6; y < 26; ++y)
        for (std::size_t x = 6; x < 26; ++x) EXPECT_NEAR(ra.at(y, x), rb.at(y + 3, x + 5), 1e-7);
}

TEST(RefineMask, CoverageBoundedByStepCoverage) {
    // no mass within the kernel radius of the border, so the bound is tight
    Raster r(1, 40, 40, Modality::Mask, 0.0f);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (std::size_t y = 7; y < 33; ++y)
        for (std::size_t x = 7; x < 33; ++x) r.at(0, y, x) = u(rng);
    Raster step = r;
    for (float& v : step.data) v = v >= 0.5f ? 1.0f : 0.0f;
    EXPECT_LE(coverage_percent(refine_mask(CloudMask(r))), coverage_percent(CloudMask(step)) + 1e-4);
    for (float c : {0.0f, 0.7f, 1.0f}) {
        CloudMask m(12, 12, c);
        Raster s(1, 12, 12, Modality::Mask, c >= 0.5f ? 1.0f : 0.0f);
        const double refined = coverage_percent(refine_mask(m));
        EXPECT_LE(refined, coverage_percent(CloudMask(s)));
        EXPECT_NEAR(refined, c >= 0.5f ? 100.0 * c : 0.0, 1e-4);
    }
}

double pairwise_sum(const float* v, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    return pairwise_sum(v, n / 2) + pairwise_sum(v + n / 2, n - n / 2);
}

TEST(Coverage, Examples) {
    EXPECT_EQ(coverage_percent(CloudMask(8, 8, 1.0f)), 100.0);
    Raster half(1, 4, 4, Modality::Mask, 0.0f);
    for (std::size_t i = 0; i < 8; ++i) half.data[i] = 1.0f;
    EXPECT_EQ(coverage_percent(CloudMask(half)), 50.0);
}

TEST(Coverage, MatchesPairwiseSummation) {
    CloudMask m = random_mask(37, 41, 20);
    const double expected = 100.0 * pairwise_sum(m.values().data(), m.size()) / static_cast<double>(m.size());
    EXPECT_NEAR(coverage_percent(m), expected, 1e-9);
}

TEST(CoverageStatsTest, Examples) {
    auto s = coverage_stats({CloudMask(4, 4, 0.0f), CloudMask(4, 4, 1.0f)});
    EXPECT_EQ(s.mean_percent, 50.0);
    EXPECT_EQ(s.std_percent, 50.0);
    EXPECT_EQ(s.histogram[0], 1u);
    EXPECT_EQ(s.histogram[19], 1u);
    auto same = coverage_stats({CloudMask(4, 4, 0.3f), CloudMask(4, 4, 0.3f), CloudMask(4, 4, 0.3f)});
    EXPECT_EQ(same.std_percent, 0.0);
    EXPECT_THROW(coverage_stats({}), ContractError);
}

TEST(CoverageStatsTest, HistogramSumsToCount) {
    std::vector<CloudMask> masks;
    for (std::uint64_t i = 0; i < 57; ++i) masks.push_back(random_mask(3, 3, 100 + i));
    auto s = coverage_stats(masks);
    std::size_t total = 0;
    for (auto c : s.histogram) total += c;
    EXPECT_EQ(total, 57u);
    EXPECT_GE(s.mean_percent, 0.0);
    EXPECT_LE(s.mean_percent, 100.0);
}

TEST(CoverageStatsTest, UniformCoverageMoments) {
    auto s = coverage_stats(uniform_coverage_masks(1000, 32, 32, 0));
    EXPECT_GE(s.mean_percent, 45.0);
    EXPECT_LE(s.mean_percent, 55.0);
    EXPECT_GE(s.std_percent, 25.0);
    EXPECT_LE(s.std_percent, 32.0);
}

TEST(CoverageStatsTest, FormatLine) {
    auto s = coverage_stats({CloudMask(4, 4, 0.0f), CloudMask(4, 4, 1.0f)});
    const std::string text = format_coverage(s);
    EXPECT_NE(text.find("mean=50.00% std=50.00%"), std::string::npos);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 21);
}

TEST(CloudMaskType, RejectsOutOfRange) {
    EXPECT_THROW(CloudMask(2, 2, 1.5f), ParameterError);
    EXPECT_THROW(CloudMask(Raster(2, 2, 2)), DimensionError);
}

}  // namespace
