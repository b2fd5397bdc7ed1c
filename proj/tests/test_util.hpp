#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cloudfusion/ops.hpp"
#include "cloudfusion/raster.hpp"

namespace testutil {

using cloudfusion::Shape;
using cloudfusion::Tensor;

template <typename T = double>
Tensor<T> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<T> v(s.numel());
    for (auto& x : v) x = static_cast<T>(u(rng));
    return Tensor<T>(s, std::move(v), requires_grad);
}

/// Values whose magnitude lies in [lo, hi] with random sign: keeps |x| away from kinks.
template <typename T = double>
Tensor<T> random_away_from_zero(Shape s, std::uint64_t seed, double lo, double hi, bool requires_grad = true) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::bernoulli_distribution sign(0.5);
    std::vector<T> v(s.numel());
    for (auto& x : v) x = static_cast<T>(sign(rng) ? u(rng) : -u(rng));
    return Tensor<T>(s, std::move(v), requires_grad);
}

inline cloudfusion::Raster random_raster(std::size_t bands, std::size_t h, std::size_t w, std::uint64_t seed,
                                         double lo = -1.0, double hi = 1.0,
                                         cloudfusion::Modality mod = cloudfusion::Modality::Other) {
    cloudfusion::Raster r(bands, h, w, mod);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& x : r.data) x = static_cast<float>(u(rng));
    return r;
}

/// sum(y * R) for a fixed random R, so every output element carries a distinct weight.
inline Tensor<double> weighted_sum(const Tensor<double>& y, std::uint64_t seed = 99) {
    return cloudfusion::sum(cloudfusion::mul(y, random_tensor(y.shape(), seed, -1.0, 1.0, false)));
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
    std::string worst;
};

// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
inline constexpr double kGradRelFloor = 1e-3;

/// Central finite differences against reverse-mode gradients for every element
/// of every input. `skip(input, index)` excludes kink points.
inline GradCheckResult grad_check(std::vector<Tensor<double>> inputs,
                                  const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                                  double h = 1e-4,
                                  const std::function<bool(std::size_t, std::size_t)>& skip = nullptr) {
    for (auto& t : inputs) t.zero_grad();
    Tensor<double> loss = f(inputs);
    cloudfusion::backward(loss);
    GradCheckResult res;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (!inputs[k].requires_grad()) continue;
        std::vector<double> analytic(inputs[k].grad().begin(), inputs[k].grad().end());
        auto data = inputs[k].data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (skip && skip(k, i)) {
                ++res.skipped;
                continue;
            }
            const double x0 = data[i];
            double fp, fm;
            {
                cloudfusion::NoGradGuard ng;
                data[i] = x0 + h;
                fp = f(inputs).item();
                data[i] = x0 - h;
                fm = f(inputs).item();
                data[i] = x0;
            }
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradRelFloor});
            ++res.checked;
            if (rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst = "input " + std::to_string(k) + " element " + std::to_string(i) + ": analytic " +
                            std::to_string(a) + " numeric " + std::to_string(numeric);
            }
        }
    }
    return res;
}

}  // namespace testutil
