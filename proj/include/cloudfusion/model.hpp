#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cloudfusion/cloudmask.hpp"
#include "cloudfusion/error.hpp"
#include "cloudfusion/ops.hpp"
#include "cloudfusion/raster.hpp"
#include "cloudfusion/tensor.hpp"

namespace cloudfusion {

/// Network widths and depths. Defaults give the full-size layout; toy()
/// shrinks widths and depths for desk-scale runs on tiny patches.
struct ModelConfig {
    std::size_t ngf = 64;       // generator base width
    std::size_t ndf = 64;       // discriminator base width
    std::size_t n_blocks = 9;   // residual blocks per generator bottleneck
    std::size_t d_layers = 3;   // stride-2 discriminator blocks
    double dropout = 0.5;
    bool dropout_at_inference = false;
    int sn_power_iters = 1;

    static ModelConfig toy() {
        ModelConfig c;
        c.ngf = 8;
        c.ndf = 8;
        c.n_blocks = 2;
        c.d_layers = 1;
        return c;
    }
};

// ---- building blocks ---------------------------------------------------------

template <typename T>
struct ConvLayer {
    Tensor<T> weight;
    Tensor<T> bias;
    std::size_t stride = 1;
    std::size_t pad = 0;
    bool transposed = false;
    std::size_t out_pad = 0;

    static ConvLayer conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad) {
        return {Tensor<T>(Shape{out, in, k, k}, T(0), true), Tensor<T>(Shape{1, out, 1, 1}, T(0), true), stride, pad,
                false, 0};
    }
    static ConvLayer up(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad,
                        std::size_t out_pad) {
        return {Tensor<T>(Shape{in, out, k, k}, T(0), true), Tensor<T>(Shape{1, out, 1, 1}, T(0), true), stride, pad,
                true, out_pad};
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return apply(x, weight); }
    Tensor<T> apply(const Tensor<T>& x, const Tensor<T>& w) const {
        return transposed ? transposed_conv2d(x, w, bias, stride, pad, out_pad) : conv2d(x, w, bias, stride, pad);
    }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".weight", weight, ParamKind::Weight});
        out.push_back({prefix + ".bias", bias, ParamKind::Bias});
    }
};

template <typename T>
struct InstanceNorm {
    Tensor<T> gamma;
    Tensor<T> beta;

    explicit InstanceNorm(std::size_t channels = 0)
        : gamma(Shape{1, channels, 1, 1}, T(1), true), beta(Shape{1, channels, 1, 1}, T(0), true) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return instance_norm(x, gamma, beta, T(1e-5)); }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        out.push_back({prefix + ".gamma", gamma, ParamKind::NormScale});
        out.push_back({prefix + ".beta", beta, ParamKind::NormShift});
    }
};

/// conv - norm - ReLU - [dropout] - conv - norm, plus identity skip.
template <typename T>
struct ResidualBlock {
    ConvLayer<T> conv1, conv2;
    InstanceNorm<T> norm1, norm2;
    bool use_dropout = false;

    ResidualBlock(std::size_t channels, bool dropout)
        : conv1(ConvLayer<T>::conv(channels, channels, 3, 1, 1)),
          conv2(ConvLayer<T>::conv(channels, channels, 3, 1, 1)),
          norm1(channels),
          norm2(channels),
          use_dropout(dropout) {}

    template <typename Rng>
    Tensor<T> operator()(const Tensor<T>& x, double p, bool dropout_active, Rng& rng) const {
        Tensor<T> h = relu(norm1(conv1(x)));
        if (use_dropout) h = dropout(h, p, dropout_active, rng);
        return add(x, norm2(conv2(h)));
    }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        conv1.collect(out, prefix + ".conv1");
        norm1.collect(out, prefix + ".norm1");
        conv2.collect(out, prefix + ".conv2");
        norm2.collect(out, prefix + ".norm2");
    }
};

template <typename T>
struct ConvNormRelu {
    ConvLayer<T> conv;
    InstanceNorm<T> norm;

    Tensor<T> operator()(const Tensor<T>& x) const { return relu(norm(conv(x))); }
    void collect(ParamList<T>& out, const std::string& prefix) const {
        conv.collect(out, prefix);
        norm.collect(out, prefix + ".norm");
    }
};

inline void require_generator_dims(const Shape& s, const char* who) {
    if (s.h < 4 || s.w < 4 || s.h % 4 != 0 || s.w % 4 != 0) {
        throw DimensionError(std::string(who) + ": height/width (axes 2,3) must be multiples of 4, got " +
                             std::to_string(s.h) + "x" + std::to_string(s.w));
    }
}

// ---- generators --------------------------------------------------------------

template <typename T>
struct GeneratorOutput {
    Tensor<T> s2_hat;  // tanh(atanh(s2_cloudy) + s2_res), in (-1, 1)
    Tensor<T> m_hat;   // regressed cloud map, in (0, 1)
    Tensor<T> s2_res;  // learned residual
};

/// SAR + cloudy optical + cloud map -> cloud-free optical, with a long skip of
/// the cloudy input and a cloud-map regression head on the residual.
template <typename T>
class GeneratorS1S2 {
public:
    explicit GeneratorS1S2(const ModelConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg), rng_(seed) {
        const std::size_t g = cfg.ngf;
        encoder_.push_back({ConvLayer<T>::conv(7, g, 3, 1, 1), InstanceNorm<T>(g)});
        encoder_.push_back({ConvLayer<T>::conv(g, 2 * g, 3, 2, 1), InstanceNorm<T>(2 * g)});
        encoder_.push_back({ConvLayer<T>::conv(2 * g, 4 * g, 3, 2, 1), InstanceNorm<T>(4 * g)});
        for (std::size_t i = 0; i < cfg.n_blocks; ++i) bottleneck_.emplace_back(4 * g, true);
        decoder_.push_back({ConvLayer<T>::up(4 * g, 4 * g, 3, 2, 1, 1), InstanceNorm<T>(4 * g)});
        decoder_.push_back({ConvLayer<T>::up(4 * g, 2 * g, 3, 2, 1, 1), InstanceNorm<T>(2 * g)});
        image_head_ = ConvLayer<T>::conv(2 * g, 3, 3, 1, 1);
        mask_head_ = ConvLayer<T>::conv(3, 1, 3, 1, 1);
    }

    GeneratorOutput<T> forward(const Tensor<T>& s1, const Tensor<T>& s2_cloudy, const Tensor<T>& m, bool train) {
        const Shape& a = s1.shape();
        if (a.c != 3 || s2_cloudy.shape().c != 3 || m.shape().c != 1) {
            throw DimensionError("generator_s1s2: expected channels (axis 1) S1=3, S2=3, m=1; got " +
                                 std::to_string(a.c) + ", " + std::to_string(s2_cloudy.shape().c) + ", " +
                                 std::to_string(m.shape().c));
        }
        require_generator_dims(a, "generator_s1s2");
        Tensor<T> h = concat_channels<T>({s1, s2_cloudy, m});
        for (const auto& layer : encoder_) h = layer(h);
        const bool drop = train || cfg_.dropout_at_inference;
        for (const auto& block : bottleneck_) h = block(h, cfg_.dropout, drop, rng_);
        for (const auto& layer : decoder_) h = layer(h);
        GeneratorOutput<T> out;
        out.s2_res = image_head_(h);
        out.s2_hat = tanh(add(atanh_clamped(s2_cloudy), out.s2_res));
        out.m_hat = sigmoid(mask_head_(out.s2_res));
        return out;
    }

    ParamList<T> parameters(const std::string& prefix = "g_s1s2") const {
        ParamList<T> out;
        for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i].collect(out, prefix + ".encoder." + std::to_string(i));
        for (std::size_t i = 0; i < bottleneck_.size(); ++i)
            bottleneck_[i].collect(out, prefix + ".bottleneck." + std::to_string(i));
        for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i].collect(out, prefix + ".decoder." + std::to_string(i));
        image_head_.collect(out, prefix + ".image_head");
        mask_head_.collect(out, prefix + ".mask_head");
        return out;
    }

    ConvLayer<T>& image_head() { return image_head_; }
    ConvLayer<T>& mask_head() { return mask_head_; }
    std::vector<ResidualBlock<T>>& bottleneck() { return bottleneck_; }

private:
    ModelConfig cfg_;
    std::mt19937_64 rng_;
    std::vector<ConvNormRelu<T>> encoder_;
    std::vector<ResidualBlock<T>> bottleneck_;
    std::vector<ConvNormRelu<T>> decoder_;
    ConvLayer<T> image_head_;
    ConvLayer<T> mask_head_;
};

/// Optical -> SAR: encoder, residual bottleneck, decoder, tanh output.
template <typename T>
class GeneratorS2S1 {
public:
    explicit GeneratorS2S1(const ModelConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg), rng_(seed) {
        const std::size_t g = cfg.ngf;
        encoder_.push_back({ConvLayer<T>::conv(3, g, 7, 1, 3), InstanceNorm<T>(g)});
        encoder_.push_back({ConvLayer<T>::conv(g, 2 * g, 3, 2, 1), InstanceNorm<T>(2 * g)});
        encoder_.push_back({ConvLayer<T>::conv(2 * g, 4 * g, 3, 2, 1), InstanceNorm<T>(4 * g)});
        for (std::size_t i = 0; i < cfg.n_blocks; ++i) bottleneck_.emplace_back(4 * g, false);
        decoder_.push_back({ConvLayer<T>::up(4 * g, 2 * g, 3, 2, 1, 1), InstanceNorm<T>(2 * g)});
        decoder_.push_back({ConvLayer<T>::up(2 * g, g, 3, 2, 1, 1), InstanceNorm<T>(g)});
        output_ = ConvLayer<T>::conv(g, 3, 7, 1, 3);
    }

    Tensor<T> forward(const Tensor<T>& s2, bool train) {
        if (s2.shape().c != 3) {
            throw DimensionError("generator_s2s1: expected 3 input channels (axis 1), got " +
                                 std::to_string(s2.shape().c));
        }
        require_generator_dims(s2.shape(), "generator_s2s1");
        return tanh(output_(trunk(s2, train)));
    }

    /// Bottleneck activations only (encoder + residual blocks), for inspection.
    Tensor<T> bottleneck_output(const Tensor<T>& s2, bool train) {
        Tensor<T> h = s2;
        for (const auto& layer : encoder_) h = layer(h);
        for (const auto& block : bottleneck_) h = block(h, 0.0, train, rng_);
        return h;
    }
    Tensor<T> encoder_output(const Tensor<T>& s2) {
        Tensor<T> h = s2;
        for (const auto& layer : encoder_) h = layer(h);
        return h;
    }

    ParamList<T> parameters(const std::string& prefix = "g_s2s1") const {
        ParamList<T> out;
        for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i].collect(out, prefix + ".encoder." + std::to_string(i));
        for (std::size_t i = 0; i < bottleneck_.size(); ++i)
            bottleneck_[i].collect(out, prefix + ".bottleneck." + std::to_string(i));
        for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i].collect(out, prefix + ".decoder." + std::to_string(i));
        output_.collect(out, prefix + ".output");
        return out;
    }

    std::vector<ResidualBlock<T>>& bottleneck() { return bottleneck_; }

private:
    Tensor<T> trunk(const Tensor<T>& s2, bool train) {
        Tensor<T> h = s2;
        for (const auto& layer : encoder_) h = layer(h);
        for (const auto& block : bottleneck_) h = block(h, 0.0, train, rng_);
        for (const auto& layer : decoder_) h = layer(h);
        return h;
    }

    ModelConfig cfg_;
    std::mt19937_64 rng_;
    std::vector<ConvNormRelu<T>> encoder_;
    std::vector<ResidualBlock<T>> bottleneck_;
    std::vector<ConvNormRelu<T>> decoder_;
    ConvLayer<T> output_;
};

// ---- discriminator -------------------------------------------------------------

/// PatchGAN with spectrally normalized 4x4 convolutions: d_layers stride-2
/// blocks, one stride-1 block, and a 1-channel output conv. Leaky ReLU 0.2.
template <typename T>
class Discriminator {
public:
    Discriminator(const ModelConfig& cfg, bool conditioned) : cfg_(cfg), conditioned_(conditioned) {
        const std::size_t in = conditioned ? 4 : 3;
        std::size_t width = cfg.ndf;
        add_layer(ConvLayer<T>::conv(in, width, 4, 2, 1));
        for (std::size_t i = 1; i < cfg.d_layers; ++i) {
            std::size_t next = cfg.ndf * std::min<std::size_t>(std::size_t(1) << i, 8);
            add_layer(ConvLayer<T>::conv(width, next, 4, 2, 1));
            width = next;
        }
        std::size_t next = cfg.ndf * std::min<std::size_t>(std::size_t(1) << cfg.d_layers, 8);
        add_layer(ConvLayer<T>::conv(width, next, 4, 1, 1));
        add_layer(ConvLayer<T>::conv(next, 1, 4, 1, 1));
    }

    bool conditioned() const { return conditioned_; }

    /// Patch score map. `cond` (the cloud map) is required iff the discriminator is conditioned.
    Tensor<T> forward(const Tensor<T>& img, const std::optional<Tensor<T>>& cond, int power_iters = -1) {
        if (conditioned_ != cond.has_value()) {
            throw ContractError(conditioned_ ? "discriminator: conditioned D requires a cloud map"
                                             : "discriminator: unconditioned D takes no cloud map");
        }
        if (img.shape().c != 3) {
            throw DimensionError("discriminator: image needs 3 channels (axis 1), got " +
                                 std::to_string(img.shape().c));
        }
        return score(cond ? concat_channels<T>({img, *cond}) : img, power_iters);
    }

    /// Scores an already-joined input (image channels followed by the condition).
    Tensor<T> score(const Tensor<T>& joined, int power_iters = -1) {
        const int iters = power_iters < 0 ? cfg_.sn_power_iters : power_iters;
        Tensor<T> h = joined;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            h = layers_[i].apply(h, normalized(i, iters));
            if (i + 1 < layers_.size()) h = leaky_relu(h, T(0.2));
        }
        return h;
    }

    /// Spectrally normalized weights after `power_iters` further iterations.
    std::vector<Tensor<T>> effective_weights(int power_iters) {
        std::vector<Tensor<T>> out;
        for (std::size_t i = 0; i < layers_.size(); ++i) out.push_back(normalized(i, power_iters).detach());
        return out;
    }

    ParamList<T> parameters(const std::string& prefix) const {
        ParamList<T> out;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            layers_[i].collect(out, prefix + ".layers." + std::to_string(i));
            out.push_back({prefix + ".layers." + std::to_string(i) + ".sn_u", u_[i], ParamKind::Buffer});
        }
        return out;
    }

    std::vector<ConvLayer<T>>& layers() { return layers_; }
    bool last_zero_norm() const { return zero_norm_; }

private:
    void add_layer(ConvLayer<T> layer) {
        u_.emplace_back(Shape{1, layer.weight.shape().n, 1, 1}, T(0), false);
        layers_.push_back(std::move(layer));
    }

    Tensor<T> normalized(std::size_t i, int iters) {
        std::vector<T> u(u_[i].data().begin(), u_[i].data().end());
        auto sn = spectral_normalize(layers_[i].weight, std::move(u), iters);
        zero_norm_ = sn.zero_norm;
        if (!sn.zero_norm) std::copy(sn.u.begin(), sn.u.end(), u_[i].data().begin());
        return sn.weight;
    }

    ModelConfig cfg_;
    bool conditioned_;
    std::vector<ConvLayer<T>> layers_;
    std::vector<Tensor<T>> u_;
    bool zero_norm_ = false;
};

// ---- initialization ------------------------------------------------------------

/// Weights ~ N(0, 0.02^2), biases 0, norm scales 1, norm shifts 0; spectral-norm
/// vectors get a random unit direction. Deterministic per seed and list order.
template <typename T>
void init_weights(ParamList<T>& params, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> weight_dist(0.0, 0.02);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (auto& p : params) {
        auto d = p.tensor.data();
        switch (p.kind) {
            case ParamKind::Weight:
                for (T& v : d) v = static_cast<T>(weight_dist(rng));
                break;
            case ParamKind::Bias:
            case ParamKind::NormShift:
                std::fill(d.begin(), d.end(), T(0));
                break;
            case ParamKind::NormScale:
                std::fill(d.begin(), d.end(), T(1));
                break;
            case ParamKind::Buffer: {
                double norm = 0.0;
                std::vector<double> tmp(d.size());
                for (double& v : tmp) {
                    v = unit(rng);
                    norm += v * v;
                }
                norm = std::sqrt(norm);
                for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(tmp[i] / norm);
                break;
            }
        }
        p.tensor.zero_grad();
    }
}

/// The four networks of the cycle-consistent ensemble.
template <typename T>
struct CloudRemovalModel {
    ModelConfig config;
    GeneratorS1S2<T> g_s1s2;
    GeneratorS2S1<T> g_s2s1;
    Discriminator<T> d_s1;
    Discriminator<T> d_s2;

    explicit CloudRemovalModel(const ModelConfig& cfg, std::uint64_t seed = 0)
        : config(cfg), g_s1s2(cfg, seed ^ 0xA1), g_s2s1(cfg, seed ^ 0xB2), d_s1(cfg, false), d_s2(cfg, true) {
        auto all = parameters();
        init_weights(all, seed);
    }

    ParamList<T> generator_parameters() const {
        auto a = g_s1s2.parameters("g_s1s2");
        auto b = g_s2s1.parameters("g_s2s1");
        a.insert(a.end(), b.begin(), b.end());
        return a;
    }
    ParamList<T> discriminator_parameters() const {
        auto a = d_s1.parameters("d_s1");
        auto b = d_s2.parameters("d_s2");
        a.insert(a.end(), b.begin(), b.end());
        return a;
    }
    ParamList<T> parameters() const {
        auto a = generator_parameters();
        auto b = discriminator_parameters();
        a.insert(a.end(), b.begin(), b.end());
        return a;
    }
};

/// Raster-level inference through G_S1->S2 (eval mode, no graph).
template <typename T = float>
Raster remove_clouds(GeneratorS1S2<T>& g, const Raster& s1, const Raster& s2_cloudy, const CloudMask& m,
                     CloudMask* m_hat = nullptr) {
    NoGradGuard guard;
    auto out = g.forward(to_tensor<T>(s1), to_tensor<T>(s2_cloudy), to_tensor<T>(m.raster()), false);
    if (m_hat) *m_hat = CloudMask(to_raster(out.m_hat, Modality::Mask));
    return to_raster(out.s2_hat, Modality::S2);
}

}  // namespace cloudfusion
