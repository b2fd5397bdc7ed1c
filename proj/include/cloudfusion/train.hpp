#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cloudfusion/checkpoint.hpp"
#include "cloudfusion/cloudmask.hpp"
#include "cloudfusion/error.hpp"
#include "cloudfusion/losses.hpp"
#include "cloudfusion/model.hpp"
#include "cloudfusion/optim.hpp"
#include "cloudfusion/raster.hpp"

namespace cloudfusion {

/// History buffer of generator outputs shown to a discriminator.
template <typename T>
class ImagePool {
public:
    explicit ImagePool(std::size_t capacity = 50, std::uint64_t seed = 0) : capacity_(capacity), rng_(seed) {}

    /// Below capacity: store and return img. At capacity: with probability 0.5
    /// return a uniformly chosen stored image and put img in its slot, else return img.
    Tensor<T> query(const Tensor<T>& img) {
        if (capacity_ == 0) return img;
        if (buffer_.size() < capacity_) {
            buffer_.push_back(img);
            return img;
        }
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng_) > 0.5) {
            const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, capacity_ - 1)(rng_);
            Tensor<T> old = buffer_[idx];
            buffer_[idx] = img;
            return old;
        }
        return img;
    }

    std::size_t size() const { return buffer_.size(); }
    std::size_t capacity() const { return capacity_; }
    const std::vector<Tensor<T>>& contents() const { return buffer_; }

private:
    std::size_t capacity_;
    std::mt19937_64 rng_;
    std::vector<Tensor<T>> buffer_;
};

struct TrainConfig {
    TrainSchedule schedule;
    OptimizerConfig optimizer;
    LossWeights weights;
    ModelConfig model;
    double paired_fraction = 0.0;
    bool ablate_mask = false;
    std::uint64_t seed = 0;
    std::size_t crop = 200;
    std::size_t batch_size = 1;
    std::size_t pool_size = 50;
    long max_steps = 0;             // 0: run the whole schedule
    std::string out_dir;            // empty: no checkpoints or CSV
    double validation_fraction = 0.05;

    void validate() const {
        schedule.validate();
        optimizer.validate();
        weights.validate();
        if (!(paired_fraction >= 0.0 && paired_fraction <= 1.0)) {
            throw ParameterError("train: paired_fraction must lie in [0, 1]");
        }
        if (batch_size != 1) throw ParameterError("train: only batch_size = 1 is supported");
        if (crop < 16 || crop % 4 != 0) throw ParameterError("train: crop must be >= 16 and a multiple of 4");
        if (max_steps < 0) throw ParameterError("train: max_steps must be >= 0");
        if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
            throw ParameterError("train: validation_fraction must lie in [0, 1)");
        }
    }
};

/// Indices of the paired subset: count = round(p*N) samples at round(i*N/count).
inline std::vector<std::size_t> paired_indices(std::size_t n, double fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ParameterError("paired_indices: fraction outside [0, 1]");
    const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count; ++i) {
        auto idx = static_cast<std::size_t>(
            std::llround(static_cast<double>(i) * static_cast<double>(n) / static_cast<double>(count)));
        out.push_back(std::min(idx, n - 1));
    }
    return out;
}

/// One training sample as tensors. `target` is set only for paired samples.
template <typename T>
struct TrainSample {
    Tensor<T> s1;
    Tensor<T> s2_cloudy;
    Tensor<T> m;
    Tensor<T> s2_cloudfree;  // real example for D_S2; unrelated to s2_cloudy when unpaired
    Tensor<T> target;
};

struct LossRecord {
    long iter = 0;
    int epoch = 0;
    double lr_multiplier = 1.0;
    LossComponents components;
    double total = 0.0;
    double d_s1 = 0.0;
    double d_s2 = 0.0;
};

inline std::string csv_header() { return "iter,L_adv,L_cyc,L_idt,L_aux,L_pix,L_feat,L_style,L_total"; }

inline std::string csv_row(const LossRecord& r) {
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return std::string(buf);
    };
    auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
    const auto& c = r.components;
    return std::to_string(r.iter) + "," + num(c.adv) + "," + num(c.cyc) + "," + num(c.idt) + "," + num(c.aux) + "," +
           opt(c.pix) + "," + opt(c.feat) + "," + opt(c.style) + "," + num(r.total);
}

/// Brightness scorer for 3-band images already normalized to [-1, 1].
inline Detector normalized_rgb_detector() {
    return Detector{[](std::span<const float> px) {
                        const double b = ((px[0] + px[1] + px[2]) / 3.0 + 1.0) / 2.0;
                        return std::clamp((b - 0.45) / 0.3, 0.0, 1.0);
                    },
                    3, "normalized-rgb"};
}

/// Cloud map of a triplet's cloudy image: the cached mask if present, else
/// detector + refinement (13-band rasters use the baseline detector).
inline CloudMask triplet_mask(const PatchTriplet& t) {
    if (t.mask) return CloudMask(*t.mask);
    const Detector det = t.s2_cloudy.bands == 13 ? baseline_detector() : normalized_rgb_detector();
    return refine_mask(cloud_probability(t.s2_cloudy, det));
}

template <typename T>
void save_model(const CloudRemovalModel<T>& model, const std::string& path) {
    write_checkpoint(path, to_named_arrays(model.parameters()));
}

template <typename T>
void load_model(CloudRemovalModel<T>& model, const std::string& path) {
    auto params = model.parameters();
    load_named_arrays(params, read_checkpoint(path));
}

/// Owns the networks, optimizers and image pools of one training run.
template <typename T = float>
class Trainer {
public:
    explicit Trainer(TrainConfig cfg, std::shared_ptr<const FeatureExtractor<T>> extractor = nullptr)
        : cfg_((cfg.validate(), std::move(cfg))),
          model_(cfg_.model, cfg_.seed),
          g_opt_(model_.generator_parameters(), cfg_.optimizer),
          d_opt_(model_.discriminator_parameters(), cfg_.optimizer),
          pool_s1_(cfg_.pool_size, cfg_.seed ^ 0x5151),
          pool_s2_(cfg_.pool_size, cfg_.seed ^ 0x5252),
          extractor_(extractor ? std::move(extractor) : std::make_shared<RandomConvExtractor<T>>()) {}

    CloudRemovalModel<T>& model() { return model_; }
    const TrainConfig& config() const { return cfg_; }
    const std::vector<LossRecord>& history() const { return history_; }
    const std::vector<double>& lr_trace() const { return lr_trace_; }
    const ImagePool<T>& pool_s1() const { return pool_s1_; }
    const ImagePool<T>& pool_s2() const { return pool_s2_; }

    /// Builds the CycleBatch of one sample (training-mode forward passes).
    CycleBatch<T> forward_cycle(const TrainSample<T>& s) {
        auto& g12 = model_.g_s1s2;
        auto& g21 = model_.g_s2s1;
        CycleBatch<T> b;
        b.s1 = s.s1;
        b.s2 = s.s2_cloudy;
        b.m = s.m;
        auto out = g12.forward(s.s1, s.s2_cloudy, s.m, true);
        b.s2_hat = out.s2_hat;
        b.m_hat = out.m_hat;
        b.s1_hat = g21.forward(s.s2_cloudy, true);
        b.s1_breve = g21.forward(b.s2_hat, true);
        b.s2_breve = g12.forward(b.s1_hat, s.s2_cloudy, s.m, true).s2_hat;
        b.s1_dot = g21.forward(s.s1, true);
        b.s2_dot = g12.forward(s.s2_cloudy, s.s2_cloudy, s.m, true).s2_hat;
        return b;
    }

    /// One generator update followed by one update of each discriminator.
    LossRecord train_step(const TrainSample<T>& s, double lr_mult = 1.0) {
        CycleBatch<T> b = forward_cycle(s);
        LossTerms<T> terms;
        terms.adv = adv_loss_g(model_.d_s1.forward(b.s1_hat, std::nullopt), model_.d_s2.forward(b.s2_hat, b.m));
        terms.cyc = cyc_loss(b);
        terms.idt = idt_loss(b);
        terms.aux = aux_loss(b.m, b.m_hat);
        if (s.target.defined()) {
            auto p = paired_losses(b.s2_hat, s.target, *extractor_);
            terms.pix = p.pix;
            terms.feat = p.feat;
            terms.style = p.style;
        }
        LossRecord rec;
        rec.components = terms.values();
        check_finite(rec.components);
        if (cfg_.ablate_mask && rec.components.aux != 0.0) {
            throw ContractError("train: aux loss must vanish when the cloud map is fixed to 1");
        }
        Tensor<T> total = terms.total(cfg_.weights);
        rec.total = static_cast<double>(total.item());
        if (!std::isfinite(rec.total)) throw NonFiniteError("train: non-finite L_total");

        g_opt_.zero_grad();
        backward(total);
        g_opt_.step(lr_mult);

        // discriminators see pooled, detached fakes
        Tensor<T> fake_s1 = pool_s1_.query(b.s1_hat.detach());
        Tensor<T> fake_s2 = pool_s2_.query(concat_channels<T>({b.s2_hat.detach(), b.m}));
        d_opt_.zero_grad();
        Tensor<T> loss_d1 = adv_loss_d(model_.d_s1.forward(s.s1, std::nullopt), model_.d_s1.score(fake_s1));
        Tensor<T> loss_d2 =
            adv_loss_d(model_.d_s2.forward(s.s2_cloudfree, s.m), model_.d_s2.score(fake_s2));
        rec.d_s1 = static_cast<double>(loss_d1.item());
        rec.d_s2 = static_cast<double>(loss_d2.item());
        if (!std::isfinite(rec.d_s1)) throw NonFiniteError("train: non-finite L_D_S1");
        if (!std::isfinite(rec.d_s2)) throw NonFiniteError("train: non-finite L_D_S2");
        backward(add(loss_d1, loss_d2));
        d_opt_.step(lr_mult);
        g_opt_.zero_grad();
        d_opt_.zero_grad();

        rec.lr_multiplier = lr_mult;
        rec.iter = ++steps_;
        return rec;
    }

    /// Converts triplets to samples: center crop, cloud maps (cached on the
    /// triplets), paired subset, and unpaired cloud-free references.
    std::vector<TrainSample<T>> prepare(std::vector<PatchTriplet>& data) const {
        for (auto& t : data) {
            if (!t.mask) t.mask = triplet_mask(t).raster();
        }
        const auto paired = paired_indices(data.size(), cfg_.paired_fraction);
        std::vector<bool> is_paired(data.size(), false);
        for (std::size_t i : paired) is_paired[i] = true;

        std::vector<PatchTriplet> unpaired;
        std::vector<std::size_t> unpaired_at;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (!is_paired[i]) {
                unpaired.push_back(data[i]);
                unpaired_at.push_back(i);
            }
        }
        if (!unpaired.empty()) unpaired = shuffle_unpair(unpaired, cfg_.seed ^ 0xC0FFEE);

        std::vector<TrainSample<T>> out(data.size());
        auto fit_crop = [&](const Raster& r) {
            return std::min(r.height, r.width) > cfg_.crop ? center_crop(r, cfg_.crop) : r;
        };
        for (std::size_t i = 0; i < data.size(); ++i) {
            const PatchTriplet& t = data[i];
            auto& s = out[i];
            s.s1 = to_tensor<T>(fit_crop(t.s1));
            s.s2_cloudy = to_tensor<T>(fit_crop(t.s2_cloudy));
            if (cfg_.ablate_mask) {
                s.m = Tensor<T>(Shape{1, 1, s.s1.shape().h, s.s1.shape().w}, T(1));
            } else {
                s.m = to_tensor<T>(fit_crop(*t.mask));
            }
            if (is_paired[i]) {
                s.s2_cloudfree = to_tensor<T>(fit_crop(t.s2_cloudfree));
                s.target = s.s2_cloudfree;
            }
        }
        for (std::size_t k = 0; k < unpaired_at.size(); ++k) {
            out[unpaired_at[k]].s2_cloudfree = to_tensor<T>(fit_crop(unpaired[k].s2_cloudfree));
        }
        return out;
    }

    /// Runs the schedule (or max_steps) over the training split. Writes
    /// epoch_<n>.cfw1 and losses.csv under out_dir when it is set.
    void fit(std::vector<PatchTriplet> dataset) {
        if (dataset.empty()) throw ContractError("fit: empty dataset");
        const std::size_t n_train = std::max<std::size_t>(
            1, train_validation_boundary(dataset.size(), cfg_.validation_fraction));
        dataset.erase(dataset.begin() + static_cast<std::ptrdiff_t>(n_train), dataset.end());
        samples_ = prepare(dataset);
        paired_ = paired_indices(samples_.size(), cfg_.paired_fraction);

        std::ofstream csv;
        if (!cfg_.out_dir.empty()) {
            std::filesystem::create_directories(cfg_.out_dir);
            csv.open(std::filesystem::path(cfg_.out_dir) / "losses.csv");
            if (!csv) throw IoError("fit: cannot write " + cfg_.out_dir + "/losses.csv");
            csv << csv_header() << '\n';
        }
        const int epochs = cfg_.schedule.total_epochs();
        bool done = false;
        for (int epoch = 0; epoch < epochs && !done; ++epoch) {
            const double mult = lr_multiplier(epoch, cfg_.schedule);
            lr_trace_.push_back(mult);
            const auto order = seeded_permutation(samples_.size(), cfg_.seed * 1000003ULL + static_cast<std::uint64_t>(epoch));
            for (std::size_t idx : order) {
                LossRecord rec = train_step(samples_[idx], mult);
                rec.epoch = epoch;
                history_.push_back(rec);
                if (csv.is_open()) csv << csv_row(rec) << '\n';
                if (cfg_.max_steps > 0 && steps_ >= cfg_.max_steps) {
                    done = true;
                    break;
                }
            }
            if (!cfg_.out_dir.empty()) {
                save_model(model_, (std::filesystem::path(cfg_.out_dir) / ("epoch_" + std::to_string(epoch + 1) + ".cfw1")).string());
            }
        }
    }

    const std::vector<TrainSample<T>>& samples() const { return samples_; }
    const std::vector<std::size_t>& paired() const { return paired_; }
    long steps() const { return steps_; }

private:
    static void check_finite(const LossComponents& c) {
        auto check = [](double v, const char* name) {
            if (!std::isfinite(v)) throw NonFiniteError(std::string("train: non-finite ") + name);
        };
        check(c.adv, "L_adv");
        check(c.cyc, "L_cyc");
        check(c.idt, "L_idt");
        check(c.aux, "L_aux");
        if (c.pix) check(*c.pix, "L_pix");
        if (c.feat) check(*c.feat, "L_feat");
        if (c.style) check(*c.style, "L_style");
    }

    TrainConfig cfg_;
    CloudRemovalModel<T> model_;
    Adam<T> g_opt_;
    Adam<T> d_opt_;
    ImagePool<T> pool_s1_;
    ImagePool<T> pool_s2_;
    std::shared_ptr<const FeatureExtractor<T>> extractor_;
    std::vector<TrainSample<T>> samples_;
    std::vector<std::size_t> paired_;
    std::vector<LossRecord> history_;
    std::vector<double> lr_trace_;
    long steps_ = 0;
};

}  // namespace cloudfusion
