#include <gtest/gtest.h>

#include "grad_suite.hpp"

using namespace testutil;

namespace {

const std::vector<GradCase>& suite() {
    static const std::vector<GradCase> cases = gradient_suite();
    return cases;
}

class GradientCheck : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
    const GradCase& c = suite()[GetParam()];
    GradCheckResult r = grad_check(c.inputs, c.f, 1e-4, c.skip);
    EXPECT_GT(r.checked, 0u);
    EXPECT_LT(r.max_rel_error, 1e-5) << c.name << " worst " << r.worst;
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradientCheck, ::testing::Range<std::size_t>(0, suite().size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) { return suite()[info.param].name; });

TEST(GradientHarness, DetectsAWrongGradient) {
    // x * x with the product rule broken: d/dx reported as x instead of 2x
    auto x = random_tensor(Shape{1, 1, 2, 2}, 3, 0.5, 1.0);
    auto broken = [](const std::vector<Tensor<double>>& in) {
        const Tensor<double>& a = in[0];
        std::vector<double> out(a.numel());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * a.data()[i];
        auto y = Tensor<double>::make_result(a.shape(), out, {a}, [a](cloudfusion::detail::Node<double>& self) mutable {
            for (std::size_t i = 0; i < self.grad.size(); ++i) a.grad()[i] += self.grad[i] * a.data()[i];
        });
        return cloudfusion::sum(y);
    };
    EXPECT_GT(grad_check({x}, broken).max_rel_error, 0.1);
}

TEST(GradientHarness, ReluKinksAreSkipped) {
    auto x = Tensor<double>(Shape{1, 1, 1, 3}, {0.0, 0.5, -0.0005}, true);
    auto r = grad_check({x}, [](const std::vector<Tensor<double>>& in) { return cloudfusion::sum(cloudfusion::relu(in[0])); },
                        1e-4, skip_kinks(x));
    EXPECT_EQ(r.skipped, 2u);
    EXPECT_EQ(r.checked, 1u);
    EXPECT_LT(r.max_rel_error, 1e-5);
}

}  // namespace
