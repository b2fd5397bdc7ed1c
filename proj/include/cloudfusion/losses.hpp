#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cloudfusion/checkpoint.hpp"
#include "cloudfusion/error.hpp"
#include "cloudfusion/ops.hpp"
#include "cloudfusion/tensor.hpp"

namespace cloudfusion {

struct LossWeights {
    double lambda_adv = 5.0;
    double lambda_cyc = 10.0;
    double lambda_idt = 1.0;
    double lambda_aux = 10.0;
    double lambda_pix = 10.0;
    double lambda_feat = 1.0;
    double lambda_style = 1.0;

    void validate() const {
        for (double v : {lambda_adv, lambda_cyc, lambda_idt, lambda_aux, lambda_pix, lambda_feat, lambda_style}) {
            if (!(v >= 0.0)) throw ParameterError("loss weights must be >= 0");
        }
    }
};

/// Sources, translations, cycle reconstructions (breve) and identity outputs (dot)
/// of one training sample. Images are (1,3,H,W); masks (1,1,H,W).
template <typename T>
struct CycleBatch {
    Tensor<T> s1, s2, m;
    Tensor<T> s1_hat, s2_hat;
    Tensor<T> s1_breve, s2_breve;
    Tensor<T> s1_dot, s2_dot;
    Tensor<T> m_hat;
};

namespace detail {

/// mean(|w * (a - b)|) with a single-channel weight broadcast over a's channels.
template <typename T>
Tensor<T> masked_l1(const Tensor<T>& w, const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a.shape(), b.shape(), "masked_l1");
    const Shape& s = a.shape();
    if (w.shape().c != 1 || w.shape().h != s.h || w.shape().w != s.w || w.shape().n != s.n) {
        throw DimensionError("masked_l1: mask " + w.shape().str() + " does not match image " + s.str());
    }
    return mean(abs(mul(broadcast_channels(w, s.c), sub(a, b))));
}

}  // namespace detail

/// mean((D1 - 1)^2) + mean((D2 - 1)^2)
template <typename T>
Tensor<T> adv_loss_g(const Tensor<T>& d_s1_on_s1hat, const Tensor<T>& d_s2_on_s2hat) {
    return add(mean(square(add_scalar(d_s1_on_s1hat, T(-1)))), mean(square(add_scalar(d_s2_on_s2hat, T(-1)))));
}

/// mean((real - 1)^2) + mean(fake^2)
template <typename T>
Tensor<T> adv_loss_d(const Tensor<T>& scores_real, const Tensor<T>& scores_fake) {
    return add(mean(square(add_scalar(scores_real, T(-1)))), mean(square(scores_fake)));
}

template <typename T>
Tensor<T> cyc_loss(const CycleBatch<T>& b) {
    return add(detail::masked_l1(b.m, b.s1, b.s1_breve), detail::masked_l1(one_minus(b.m), b.s2, b.s2_breve));
}

/// Both terms are weighted by m, exactly as the objective is written.
template <typename T>
Tensor<T> idt_loss(const CycleBatch<T>& b) {
    return add(detail::masked_l1(b.m, b.s1, b.s1_dot), detail::masked_l1(b.m, b.s2, b.s2_dot));
}

/// mean((1 - m) * |m - m_hat|)
template <typename T>
Tensor<T> aux_loss(const Tensor<T>& m, const Tensor<T>& m_hat) {
    detail::require_same_shape(m.shape(), m_hat.shape(), "aux_loss");
    return detail::masked_l1(one_minus(m), m, m_hat);
}

/// Scalar values of one step's loss terms. Paired terms are absent (not zero)
/// when the sample had no paired target.
struct LossComponents {
    double adv = 0.0;
    double cyc = 0.0;
    double idt = 0.0;
    double aux = 0.0;
    std::optional<double> pix;
    std::optional<double> feat;
    std::optional<double> style;
};

inline double total_loss(const LossComponents& c, const LossWeights& w) {
    double t = w.lambda_adv * c.adv + w.lambda_cyc * c.cyc + w.lambda_idt * c.idt + w.lambda_aux * c.aux;
    if (c.pix) t += w.lambda_pix * *c.pix;
    if (c.feat) t += w.lambda_feat * *c.feat;
    if (c.style) t += w.lambda_style * *c.style;
    return t;
}

/// Differentiable counterpart of LossComponents.
template <typename T>
struct LossTerms {
    Tensor<T> adv, cyc, idt, aux;
    Tensor<T> pix, feat, style;  // undefined when absent

    Tensor<T> total(const LossWeights& w) const {
        Tensor<T> t = add(add(mul_scalar(adv, T(w.lambda_adv)), mul_scalar(cyc, T(w.lambda_cyc))),
                          add(mul_scalar(idt, T(w.lambda_idt)), mul_scalar(aux, T(w.lambda_aux))));
        if (pix.defined()) t = add(t, mul_scalar(pix, T(w.lambda_pix)));
        if (feat.defined()) t = add(t, mul_scalar(feat, T(w.lambda_feat)));
        if (style.defined()) t = add(t, mul_scalar(style, T(w.lambda_style)));
        return t;
    }

    LossComponents values() const {
        LossComponents c;
        c.adv = static_cast<double>(adv.item());
        c.cyc = static_cast<double>(cyc.item());
        c.idt = static_cast<double>(idt.item());
        c.aux = static_cast<double>(aux.item());
        if (pix.defined()) c.pix = static_cast<double>(pix.item());
        if (feat.defined()) c.feat = static_cast<double>(feat.item());
        if (style.defined()) c.style = static_cast<double>(style.item());
        return c;
    }
};

// ---- perceptual features -------------------------------------------------------

/// Maps an image batch to a list of feature maps (the taps).
template <typename T>
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::vector<Tensor<T>> features(const Tensor<T>& x) const = 0;
    virtual std::size_t tap_count() const = 0;
};

template <typename T>
class IdentityExtractor : public FeatureExtractor<T> {
public:
    std::vector<Tensor<T>> features(const Tensor<T>& x) const override { return {x}; }
    std::size_t tap_count() const override { return 1; }
};

/// Fixed random-weight stack of 3x3 conv + ReLU layers with taps after chosen
/// layers. Weights are frozen; loadable from a CFW1 file with names
/// `features.<i>.weight` / `features.<i>.bias`.
template <typename T>
class RandomConvExtractor : public FeatureExtractor<T> {
public:
    explicit RandomConvExtractor(std::uint64_t seed = 1234, std::vector<std::size_t> taps = {3, 5, 8},
                                 std::vector<std::size_t> widths = {16, 16, 32, 32, 32, 64, 64, 64})
        : taps_(std::move(taps)) {
        std::mt19937_64 rng(seed);
        std::size_t in = 3;
        for (std::size_t w : widths) {
            // He-style scale keeps activations from vanishing through the random stack
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(9 * in)));
            Tensor<T> weight(Shape{w, in, 3, 3}, T(0), false);
            for (T& v : weight.data()) v = static_cast<T>(dist(rng));
            weights_.push_back(weight);
            biases_.emplace_back(Shape{1, w, 1, 1}, T(0), false);
            in = w;
        }
        for (std::size_t t : taps_) {
            if (t < 1 || t > weights_.size()) throw ParameterError("feature extractor: tap out of range");
        }
    }

    std::vector<Tensor<T>> features(const Tensor<T>& x) const override {
        std::vector<Tensor<T>> out;
        Tensor<T> h = x;
        for (std::size_t i = 0; i < weights_.size() && out.size() < taps_.size(); ++i) {
            h = relu(conv2d(h, weights_[i], biases_[i], 1, 1));
            for (std::size_t t : taps_)
                if (t == i + 1) out.push_back(h);
        }
        return out;
    }
    std::size_t tap_count() const override { return taps_.size(); }

    void load(const std::string& path) {
        ParamList<T> params;
        for (std::size_t i = 0; i < weights_.size(); ++i) {
            params.push_back({"features." + std::to_string(i) + ".weight", weights_[i], ParamKind::Weight});
            params.push_back({"features." + std::to_string(i) + ".bias", biases_[i], ParamKind::Bias});
        }
        load_named_arrays(params, read_checkpoint(path));
    }

private:
    std::vector<std::size_t> taps_;
    std::vector<Tensor<T>> weights_;
    std::vector<Tensor<T>> biases_;
};

template <typename T>
struct PairedLossTerms {
    Tensor<T> pix, feat, style;
};

/// Pixel L1, feature L1 averaged over taps, and Gram-matrix L1 averaged over taps.
template <typename T>
PairedLossTerms<T> paired_losses(const Tensor<T>& s2_hat, const Tensor<T>& s2_target,
                                 const FeatureExtractor<T>& extractor, std::size_t expected_taps = 0) {
    detail::require_same_shape(s2_hat.shape(), s2_target.shape(), "paired_losses");
    if (expected_taps != 0 && extractor.tap_count() != expected_taps) {
        throw ContractError("paired_losses: extractor exposes " + std::to_string(extractor.tap_count()) +
                            " taps, expected " + std::to_string(expected_taps));
    }
    auto fa = extractor.features(s2_hat);
    Tensor<T> target = s2_target.detach();
    auto fb = extractor.features(target);
    if (fa.empty() || fa.size() != fb.size() || fa.size() != extractor.tap_count()) {
        throw ContractError("paired_losses: extractor returned " + std::to_string(fa.size()) + " taps, declared " +
                            std::to_string(extractor.tap_count()));
    }
    PairedLossTerms<T> out;
    out.pix = mean(abs(sub(s2_hat, target)));
    Tensor<T> feat, style;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        Tensor<T> f = mean(abs(sub(fa[i], fb[i])));
        Tensor<T> s = mean(abs(sub(gram(fa[i]), gram(fb[i]))));
        feat = feat.defined() ? add(feat, f) : f;
        style = style.defined() ? add(style, s) : s;
    }
    const T inv = T(1) / static_cast<T>(fa.size());
    out.feat = mul_scalar(feat, inv);
    out.style = mul_scalar(style, inv);
    return out;
}

}  // namespace cloudfusion
