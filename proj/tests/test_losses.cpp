#include <gtest/gtest.h>

#include <cmath>

#include "cloudfusion/losses.hpp"
#include "test_util.hpp"

using namespace cloudfusion;
using testutil::random_tensor;

namespace {

using TD = Tensor<double>;

TD constant(std::size_t c, std::size_t h, std::size_t w, double v) { return TD(Shape{1, c, h, w}, v); }
TD img(std::uint64_t seed, std::size_t h = 5, std::size_t w = 4) { return random_tensor(Shape{1, 3, h, w}, seed, -1, 1, false); }
TD mask(std::uint64_t seed, std::size_t h = 5, std::size_t w = 4) { return random_tensor(Shape{1, 1, h, w}, seed, 0, 1, false); }

CycleBatch<double> perfect_batch(std::uint64_t seed) {
    CycleBatch<double> b;
    b.s1 = img(seed);
    b.s2 = img(seed + 1);
    b.m = mask(seed + 2);
    b.s1_hat = img(seed + 3);
    b.s2_hat = img(seed + 4);
    b.s1_breve = b.s1.clone();
    b.s2_breve = b.s2.clone();
    b.s1_dot = b.s1.clone();
    b.s2_dot = b.s2.clone();
    b.m_hat = b.m.clone();
    return b;
}

TEST(AdvLossG, Examples) {
    EXPECT_DOUBLE_EQ(adv_loss_g(constant(1, 3, 3, 1.0), constant(1, 3, 3, 1.0)).item(), 0.0);
    EXPECT_DOUBLE_EQ(adv_loss_g(constant(1, 3, 3, 0.0), constant(1, 3, 3, 0.0)).item(), 2.0);
    EXPECT_DOUBLE_EQ(adv_loss_g(constant(1, 3, 3, 0.5), constant(1, 2, 2, 0.25)).item(), 0.8125);
}

TEST(AdvLossD, Examples) {
    EXPECT_DOUBLE_EQ(adv_loss_d(constant(1, 3, 3, 1.0), constant(1, 3, 3, 0.0)).item(), 0.0);
    EXPECT_DOUBLE_EQ(adv_loss_d(constant(1, 3, 3, 0.0), constant(1, 3, 3, 1.0)).item(), 2.0);
    EXPECT_NEAR(adv_loss_d(constant(1, 3, 3, 0.8), constant(1, 3, 3, 0.3)).item(), 0.13, 1e-12);
}

TEST(CycLoss, PerfectReconstructionIsZero) { EXPECT_EQ(cyc_loss(perfect_batch(1)).item(), 0.0); }

TEST(CycLoss, ZeroMaskLeavesOnlyOpticalTerm) {
    auto b = perfect_batch(10);
    b.m = constant(1, 5, 4, 0.0);
    b.s1_breve = img(20);
    b.s2_breve = img(21);
    double expect = 0.0;
    for (std::size_t i = 0; i < b.s2.numel(); ++i) expect += std::abs(b.s2.data()[i] - b.s2_breve.data()[i]);
    EXPECT_NEAR(cyc_loss(b).item(), expect / static_cast<double>(b.s2.numel()), 1e-12);
}

TEST(CycLoss, HandArithmetic) {
    CycleBatch<double> b;
    b.m = constant(1, 1, 1, 0.5);
    b.s1 = constant(3, 1, 1, 0.4);
    b.s1_breve = constant(3, 1, 1, 0.0);
    b.s2 = constant(3, 1, 1, 0.2);
    b.s2_breve = constant(3, 1, 1, 0.0);
    EXPECT_NEAR(cyc_loss(b).item(), 0.3, 1e-12);
}

TEST(IdtLoss, Examples) {
    EXPECT_EQ(idt_loss(perfect_batch(2)).item(), 0.0);
    auto b = perfect_batch(3);
    b.m = constant(1, 5, 4, 0.0);
    b.s1_dot = img(30);
    b.s2_dot = img(31);
    EXPECT_EQ(idt_loss(b).item(), 0.0);

    CycleBatch<double> c;
    c.m = constant(1, 1, 1, 1.0);
    c.s1 = constant(3, 1, 1, 0.3);
    c.s1_dot = constant(3, 1, 1, 0.0);
    c.s2 = constant(3, 1, 1, -0.1);
    c.s2_dot = constant(3, 1, 1, 0.0);
    EXPECT_NEAR(idt_loss(c).item(), 0.4, 1e-12);
}

TEST(AuxLoss, Examples) {
    auto m = mask(4);
    EXPECT_EQ(aux_loss(m, m.clone()).item(), 0.0);
    EXPECT_EQ(aux_loss(constant(1, 4, 4, 1.0), mask(5, 4, 4)).item(), 0.0);
    EXPECT_DOUBLE_EQ(aux_loss(constant(1, 4, 4, 0.0), constant(1, 4, 4, 0.5)).item(), 0.5);
    EXPECT_THROW(aux_loss(constant(1, 4, 4, 0.0), constant(1, 4, 5, 0.5)), DimensionError);
}

TEST(TotalLoss, Examples) {
    LossWeights w;
    EXPECT_EQ(total_loss(LossComponents{}, w), 0.0);
    EXPECT_DOUBLE_EQ(total_loss(LossComponents{1, 1, 1, 1, {}, {}, {}}, w), 26.0);
    EXPECT_NEAR(total_loss(LossComponents{0.5, 0.1, 0.2, 0.05, {}, {}, {}}, w), 4.2, 1e-12);
    EXPECT_NEAR(total_loss(LossComponents{0, 0, 0, 0, 0.1, 0.2, 0.3}, w), 1.0 + 0.2 + 0.3, 1e-12);
}

TEST(TotalLoss, TensorFormMatchesScalarForm) {
    LossTerms<double> t;
    t.adv = TD::scalar(0.5);
    t.cyc = TD::scalar(0.1);
    t.idt = TD::scalar(0.2);
    t.aux = TD::scalar(0.05);
    LossWeights w;
    EXPECT_NEAR(t.total(w).item(), 4.2, 1e-12);
    t.pix = TD::scalar(0.1);
    EXPECT_NEAR(t.total(w).item(), total_loss(t.values(), w), 1e-12);
    EXPECT_FALSE(t.values().feat.has_value());
}

TEST(LossWeightsTest, NegativeRejected) {
    LossWeights w;
    w.lambda_aux = -1.0;
    EXPECT_THROW(w.validate(), ParameterError);
}

TEST(LossProperties, NonNegativeOnRandomBatches) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        CycleBatch<double> b;
        b.s1 = img(s * 10);
        b.s2 = img(s * 10 + 1);
        b.m = mask(s * 10 + 2);
        b.s1_breve = img(s * 10 + 3);
        b.s2_breve = img(s * 10 + 4);
        b.s1_dot = img(s * 10 + 5);
        b.s2_dot = img(s * 10 + 6);
        b.m_hat = mask(s * 10 + 7);
        EXPECT_GE(cyc_loss(b).item(), 0.0);
        EXPECT_GE(idt_loss(b).item(), 0.0);
        EXPECT_GE(aux_loss(b.m, b.m_hat).item(), 0.0);
        EXPECT_GE(adv_loss_g(img(s + 100), img(s + 200)).item(), 0.0);
        EXPECT_GE(adv_loss_d(img(s + 300), img(s + 400)).item(), 0.0);
    }
}

TEST(LossProperties, CycleLossLipschitzInReconstruction) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        auto b = perfect_batch(s * 7);
        b.s1_breve = img(s + 50);
        b.s2_breve = img(s + 60);
        const double base = cyc_loss(b).item();
        auto b2 = b;
        b2.s2_breve = img(s + 70);
        double dist = 0.0;
        const std::size_t p = 20;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < p; ++i)
                dist += (1.0 - b.m.data()[i]) * std::abs(b.s2_breve.data()[c * p + i] - b2.s2_breve.data()[c * p + i]);
        dist /= static_cast<double>(3 * p);
        EXPECT_LE(std::abs(cyc_loss(b2).item() - base), dist + 1e-12);
    }
}

TEST(LossProperties, MonotoneMaskGating) {
    auto b = perfect_batch(40);
    b.s1_breve = img(41);
    b.s2_breve = img(42);
    auto terms = [](const CycleBatch<double>& x) {
        return std::pair{detail::masked_l1(x.m, x.s1, x.s1_breve).item(),
                         detail::masked_l1(one_minus(x.m), x.s2, x.s2_breve).item()};
    };
    auto [s1_term, s2_term] = terms(b);
    for (std::uint64_t s = 0; s < 10; ++s) {
        auto raised = b;
        raised.m = b.m.clone();
        auto bump = mask(500 + s);
        for (std::size_t i = 0; i < raised.m.numel(); ++i)
            raised.m.data()[i] = std::min(1.0, raised.m.data()[i] + 0.5 * bump.data()[i]);
        auto [r1, r2] = terms(raised);
        EXPECT_GE(r1, s1_term - 1e-15);
        EXPECT_LE(r2, s2_term + 1e-15);
    }
}

// Gram of a single (C,H,W) map normalized by C*H*W, by explicit loops.
std::vector<double> gram_oracle(const TD& x) {
    const Shape& s = x.shape();
    std::vector<double> g(s.c * s.c, 0.0);
    for (std::size_t i = 0; i < s.c; ++i)
        for (std::size_t j = 0; j < s.c; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < s.plane(); ++k) acc += x.data()[i * s.plane() + k] * x.data()[j * s.plane() + k];
            g[i * s.c + j] = acc / static_cast<double>(s.c * s.plane());
        }
    return g;
}

TEST(PairedLosses, IdenticalImagesGiveZeros) {
    RandomConvExtractor<double> ex;
    auto x = img(1, 8, 8);
    auto p = paired_losses(x, x.clone(), ex, 3);
    EXPECT_EQ(p.pix.item(), 0.0);
    EXPECT_EQ(p.feat.item(), 0.0);
    EXPECT_EQ(p.style.item(), 0.0);
}

TEST(PairedLosses, ConstantShiftPixelTerm) {
    auto x = img(2);
    TD y = x.clone();
    for (double& v : y.data()) v += 0.2;
    IdentityExtractor<double> ex;
    EXPECT_NEAR(paired_losses(x, y, ex).pix.item(), 0.2, 1e-12);
}

TEST(PairedLosses, IdentityExtractorMatchesOracles) {
    IdentityExtractor<double> ex;
    auto a = img(3, 6, 7), b = img(4, 6, 7);
    auto p = paired_losses(a, b, ex, 1);
    EXPECT_DOUBLE_EQ(p.feat.item(), p.pix.item());
    auto ga = gram_oracle(a), gb = gram_oracle(b);
    double style = 0.0;
    for (std::size_t i = 0; i < 9; ++i) style += std::abs(ga[i] - gb[i]);
    EXPECT_NEAR(p.style.item(), style / 9.0, 1e-12);
}

TEST(PairedLosses, TapCountMismatch) {
    IdentityExtractor<double> ex;
    EXPECT_THROW(paired_losses(img(1), img(2), ex, 3), ContractError);
    RandomConvExtractor<double> deep;
    EXPECT_EQ(deep.tap_count(), 3u);
    EXPECT_EQ(deep.features(img(1, 8, 8)).size(), 3u);
    EXPECT_THROW(RandomConvExtractor<double>(1, {0, 2}), ParameterError);
}

TEST(PairedLosses, TargetReceivesNoGradient) {
    RandomConvExtractor<double> ex;
    auto a = random_tensor(Shape{1, 3, 8, 8}, 5);
    auto b = random_tensor(Shape{1, 3, 8, 8}, 6);
    auto p = paired_losses(a, b, ex);
    backward(add(add(p.pix, p.feat), p.style));
    double ga = 0.0, gb = 0.0;
    for (double g : a.grad()) ga += std::abs(g);
    for (double g : b.grad()) gb += std::abs(g);
    EXPECT_GT(ga, 0.0);
    EXPECT_EQ(gb, 0.0);
}

}  // namespace
