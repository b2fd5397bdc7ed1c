#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cloudfusion/error.hpp"
#include "cloudfusion/tensor.hpp"

namespace cloudfusion {

struct OptimizerConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ParameterError("optimizer: learning_rate must be > 0");
        if (!(beta1 > 0.0 && beta1 < beta2 && beta2 < 1.0)) {
            throw ParameterError("optimizer: need 0 < beta1 < beta2 < 1");
        }
        if (!(epsilon > 0.0)) throw ParameterError("optimizer: epsilon must be > 0");
    }
};

/// n_iter epochs at the base rate, then n_decay epochs of linear decay.
struct TrainSchedule {
    int n_iter = 50;
    int n_decay = 25;

    int total_epochs() const { return n_iter + n_decay; }
    void validate() const {
        if (n_iter < 1 || n_decay < 1) throw ParameterError("schedule: n_iter and n_decay must be positive");
    }
};

/// Multiplicative learning-rate factor for 0-based epoch `n_current`.
inline double lr_multiplier(int n_current, const TrainSchedule& sched) {
    if (n_current < 0) throw ParameterError("lr_multiplier: epoch must be >= 0");
    double decayed = static_cast<double>(std::max(0, 1 + n_current - sched.n_iter)) /
                     static_cast<double>(sched.n_decay + 1);
    return std::max(0.0, 1.0 - decayed);
}

template <typename T>
struct AdamState {
    std::vector<T> m;
    std::vector<T> v;
};

/// One bias-corrected Adam update of `param` from its accumulated gradient.
/// `t` is the 1-based step count; `lr` overrides cfg.learning_rate (schedules).
template <typename T>
void adam_step(Tensor<T>& param, AdamState<T>& state, const OptimizerConfig& cfg, long t, double lr,
               const std::string& name = "parameter") {
    if (t < 1) throw ParameterError("adam_step: step must be >= 1");
    if (!param.has_grad()) return;
    auto g = param.grad();
    for (T v : g) {
        if (!std::isfinite(static_cast<double>(v))) {
            throw NonFiniteError("adam_step: non-finite gradient in '" + name + "'");
        }
    }
    if (state.m.size() != g.size()) {
        state.m.assign(g.size(), T(0));
        state.v.assign(g.size(), T(0));
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    auto p = param.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
        state.m[i] = b1 * state.m[i] + (T(1) - b1) * g[i];
        state.v[i] = b2 * state.v[i] + (T(1) - b2) * g[i] * g[i];
        const double mhat = static_cast<double>(state.m[i]) / bc1;
        const double vhat = static_cast<double>(state.v[i]) / bc2;
        p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
}

/// Adam over a fixed parameter list.
template <typename T>
class Adam {
public:
    Adam(ParamList<T> params, OptimizerConfig cfg) : params_(std::move(params)), cfg_(cfg) {
        cfg_.validate();
        states_.resize(params_.size());
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    /// Applies one update with learning rate cfg.learning_rate * multiplier.
    void step(double multiplier = 1.0) {
        ++t_;
        const double lr = cfg_.learning_rate * multiplier;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (params_[i].kind == ParamKind::Buffer) continue;
            adam_step(params_[i].tensor, states_[i], cfg_, t_, lr, params_[i].name);
        }
    }

    long steps() const { return t_; }
    const OptimizerConfig& config() const { return cfg_; }

private:
    ParamList<T> params_;
    OptimizerConfig cfg_;
    std::vector<AdamState<T>> states_;
    long t_ = 0;
};

}  // namespace cloudfusion
