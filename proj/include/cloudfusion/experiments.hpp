#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cloudfusion/metrics.hpp"
#include "cloudfusion/raster_io.hpp"
#include "cloudfusion/simulate.hpp"
#include "cloudfusion/train.hpp"
#include "cloudfusion/version.hpp"

namespace cloudfusion {

struct ExperimentSpec {
    std::string name = "paired_fraction";  // paired_fraction | ablation | synthetic_vs_real
    std::size_t dataset_size = 64;
    std::size_t test_size = 32;
    std::size_t patch_size = 32;
    TrainSchedule schedule{8, 4};
    ModelConfig model = ModelConfig::toy();
    std::uint64_t seed = 0;
    std::uint64_t cloud_seed = 1;
    std::uint64_t real_cloud_seed = 1001;  // seed-disjoint clouds standing in for real data
    long max_steps = 0;
    std::size_t k = 10;
    std::vector<double> fractions{0.0, 0.1, 0.2, 0.5, 1.0};
    std::string out_root = "runs";
    bool write_outputs = true;

    void validate() const {
        if (name != "paired_fraction" && name != "ablation" && name != "synthetic_vs_real") {
            throw ParameterError("experiment: unknown name '" + name +
                                 "' (known: paired_fraction, ablation, synthetic_vs_real)");
        }
        if (dataset_size == 0) throw ParameterError("experiment: dataset_size must be > 0");
        if (test_size <= k) throw ParameterError("experiment: test_size must exceed k");
        if (patch_size < 16 || patch_size % 4 != 0) {
            throw ParameterError("experiment: patch_size must be >= 16 and a multiple of 4");
        }
        for (double f : fractions) {
            if (f != 0.0 && f != 0.1 && f != 0.2 && f != 0.5 && f != 1.0) {
                throw ParameterError("experiment: fractions must be drawn from {0, 0.1, 0.2, 0.5, 1}");
            }
        }
        schedule.validate();
    }

    std::string canonical() const {
        std::ostringstream os;
        os << "name=" << name << ";dataset_size=" << dataset_size << ";test_size=" << test_size
           << ";patch_size=" << patch_size << ";n_iter=" << schedule.n_iter << ";n_decay=" << schedule.n_decay
           << ";ngf=" << model.ngf << ";ndf=" << model.ndf << ";n_blocks=" << model.n_blocks
           << ";d_layers=" << model.d_layers << ";seed=" << seed << ";cloud_seed=" << cloud_seed
           << ";real_cloud_seed=" << real_cloud_seed << ";max_steps=" << max_steps << ";k=" << k << ";fractions=";
        for (double f : fractions) os << f << ",";
        return os.str();
    }
};

/// FNV-1a 64-bit.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Rows of named values; absent cells print as "-" (text) or empty (CSV).
struct ExperimentTable {
    std::string corner;
    std::vector<std::string> columns;
    std::vector<std::pair<std::string, std::vector<std::optional<double>>>> rows;

    void add_row(std::string label, std::vector<std::optional<double>> values) {
        if (values.size() != columns.size()) throw ContractError("table: row width does not match columns");
        rows.emplace_back(std::move(label), std::move(values));
    }

    std::string csv() const {
        std::string out = corner;
        for (const auto& c : columns) out += "," + c;
        out += "\n";
        for (const auto& [label, values] : rows) {
            out += label;
            for (const auto& v : values) out += "," + (v ? format_metric(*v, 6) : std::string());
            out += "\n";
        }
        return out;
    }

    std::string text() const {
        std::size_t first = corner.size();
        for (const auto& r : rows) first = std::max(first, r.first.size());
        std::vector<std::size_t> widths;
        for (const auto& c : columns) widths.push_back(std::max<std::size_t>(c.size(), 9));
        auto pad = [](const std::string& s, std::size_t w, bool left) {
            std::string fill(w > s.size() ? w - s.size() : 0, ' ');
            return left ? s + fill : fill + s;
        };
        std::string out = pad(corner, first, true);
        for (std::size_t i = 0; i < columns.size(); ++i) out += "  " + pad(columns[i], widths[i], false);
        out += "\n";
        for (const auto& [label, values] : rows) {
            out += pad(label, first, true);
            for (std::size_t i = 0; i < values.size(); ++i) {
                out += "  " + pad(values[i] ? format_metric(*values[i], 3) : "-", widths[i], false);
            }
            out += "\n";
        }
        return out;
    }
};

struct ExperimentResult {
    ExperimentTable table;
    std::string run_dir;  // empty when outputs are disabled
    std::vector<std::string> notes;
};

namespace detail {

inline std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

inline Raster grayscale(const Raster& rgb) {
    Raster g(1, rgb.height, rgb.width, rgb.modality);
    const std::size_t p = rgb.plane();
    for (std::size_t i = 0; i < p; ++i) {
        g.data[i] = (rgb.data[i] + rgb.data[p + i] + rgb.data[2 * p + i]) / 3.0f;
    }
    return g;
}

struct Arm {
    std::string label;
    double paired_fraction = 0.0;
    bool ablate = false;
    CloudScheme scheme = CloudScheme::Copy;
};

class Runner {
public:
    explicit Runner(const ExperimentSpec& spec) : spec_(spec) {
        spec_.validate();
        if (spec_.write_outputs) {
            dir_ = std::filesystem::path(spec_.out_root) / spec_.name / timestamp();
            std::filesystem::create_directories(dir_);
        }
    }

    std::vector<PatchTriplet> data(CloudScheme scheme, std::size_t count, std::size_t first,
                                   std::uint64_t cloud_seed) const {
        SceneConfig sc;
        sc.size = spec_.patch_size;
        sc.seed = spec_.seed;
        sc.cloud_seed = cloud_seed;
        sc.scheme = scheme;
        return synthetic_triplets(count, sc, first);
    }
    std::vector<PatchTriplet> train_data(CloudScheme scheme) const {
        return data(scheme, spec_.dataset_size, 0, spec_.cloud_seed);
    }
    std::vector<PatchTriplet> test_data(CloudScheme scheme, std::uint64_t cloud_seed) const {
        return data(scheme, spec_.test_size, spec_.dataset_size, cloud_seed);
    }

    /// Trains one arm and returns cloud-removed test predictions in [-1, 1].
    std::vector<Raster> train_and_predict(const Arm& arm, const std::vector<std::vector<PatchTriplet>*>& tests) {
        TrainConfig cfg;
        cfg.schedule = spec_.schedule;
        cfg.model = spec_.model;
        cfg.seed = spec_.seed;
        cfg.paired_fraction = arm.paired_fraction;
        cfg.ablate_mask = arm.ablate;
        cfg.max_steps = spec_.max_steps;
        cfg.validation_fraction = 0.0;
        cfg.crop = spec_.patch_size;
        if (!dir_.empty()) cfg.out_dir = (dir_ / sanitize(arm.label)).string();
        Trainer<float> trainer(cfg);
        trainer.fit(train_data(arm.scheme));
        if (arm.ablate) {
            for (const auto& rec : trainer.history()) {
                if (rec.components.aux != 0.0) throw ContractError("ablation: aux loss was non-zero");
            }
            notes_.push_back(arm.label + ": aux_loss == 0 at all " + std::to_string(trainer.history().size()) +
                             " steps");
        }
        std::vector<Raster> preds;
        for (auto* test : tests) {
            for (std::size_t i = 0; i < test->size(); ++i) {
                const PatchTriplet& t = (*test)[i];
                CloudMask m = arm.ablate ? CloudMask(t.s1.height, t.s1.width, 1.0f) : triplet_mask(t);
                preds.push_back(remove_clouds(trainer.model().g_s1s2, t.s1, t.s2_cloudy, m));
                if (!dir_.empty() && i == 0 && test == tests.front()) {
                    write_preview(preds.back(), (dir_ / (sanitize(arm.label) + "_preview.ppm")).string());
                }
            }
        }
        return preds;
    }

    PrecisionRecall pr(const std::vector<Raster>& targets01, const std::vector<Raster>& preds01) const {
        return precision_recall(embed(targets01), embed(preds01), PrConfig{spec_.k});
    }

    ExperimentResult finish(ExperimentTable table) {
        ExperimentResult res;
        res.table = std::move(table);
        res.notes = notes_;
        if (!dir_.empty()) {
            res.run_dir = dir_.string();
            write_text(dir_ / "table.csv", res.table.csv());
            write_text(dir_ / "table.txt", res.table.text());
            std::ostringstream m;
            char hash[32];
            std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(spec_.canonical())));
            m << "experiment=" << spec_.name << "\nversion=" << kVersion << "\nconfig_hash=" << hash
              << "\nconfig=" << spec_.canonical() << "\nseed=" << spec_.seed << "\ncloud_seed=" << spec_.cloud_seed
              << "\nreal_cloud_seed=" << spec_.real_cloud_seed << "\n";
            for (const auto& n : notes_) m << "note=" << n << "\n";
            write_text(dir_ / "manifest.txt", m.str());
        }
        return res;
    }

private:
    static std::string sanitize(const std::string& s) {
        std::string out;
        for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
        return out;
    }
    static void write_text(const std::filesystem::path& p, const std::string& s) {
        std::ofstream f(p);
        if (!f) throw IoError("experiment: cannot write " + p.string());
        f << s;
    }

    ExperimentSpec spec_;
    std::filesystem::path dir_;
    std::vector<std::string> notes_;
};

inline std::vector<Raster> unit_all(const std::vector<Raster>& rs) {
    std::vector<Raster> out;
    for (const auto& r : rs) out.push_back(to_unit(r));
    return out;
}

inline std::vector<Raster> cloudfree_unit(const std::vector<PatchTriplet>& ts) {
    std::vector<Raster> out;
    for (const auto& t : ts) out.push_back(to_unit(t.s2_cloudfree));
    return out;
}

inline std::string fraction_label(double f) {
    const int pct = static_cast<int>(std::lround(f * 100.0));
    std::string s = std::to_string(pct);
    if (pct == 0 || pct == 100) s += " (ours-" + std::to_string(pct) + ")";
    return s;
}

}  // namespace detail

/// One model per paired fraction on identical data and seeds; precision/recall/F1
/// of cloud-removed test predictions against cloud-free targets.
inline ExperimentResult run_paired_fraction(ExperimentSpec spec) {
    spec.name = "paired_fraction";
    detail::Runner run(spec);
    auto test = run.test_data(CloudScheme::Copy, spec.cloud_seed);
    const auto targets = detail::cloudfree_unit(test);
    ExperimentTable table{"paired %", {"precision", "recall", "F1"}, {}};
    for (double f : spec.fractions) {
        auto preds = run.train_and_predict({detail::fraction_label(f), f, false, CloudScheme::Copy}, {&test});
        auto pr = run.pr(targets, detail::unit_all(preds));
        table.add_row(detail::fraction_label(f), {pr.precision, pr.recall, f1(pr.precision, pr.recall)});
    }
    return run.finish(std::move(table));
}

/// Raw-input baselines, then full vs m==1 models at 0 and 100 percent pairing.
inline ExperimentResult run_ablation(ExperimentSpec spec) {
    spec.name = "ablation";
    detail::Runner run(spec);
    auto test = run.test_data(CloudScheme::Copy, spec.cloud_seed);
    const auto targets = detail::cloudfree_unit(test);
    ExperimentTable table{"model", {"MAE", "RMSE", "PSNR", "SSIM", "SAM", "precision", "recall", "F1"}, {}};

    auto add = [&](const std::string& label, const std::vector<Raster>& preds01, const std::vector<Raster>& tgt01) {
        MetricReport r = pixel_report(preds01, tgt01);
        add_precision_recall(r, embed(tgt01), embed(preds01), PrConfig{spec.k});
        table.add_row(label, {r.mae, r.rmse, r.psnr, r.ssim, r.sam, r.precision, r.recall, r.f1});
    };

    std::vector<Raster> gray_targets, vv, vh, cloudy;
    for (const auto& t : test) {
        gray_targets.push_back(detail::grayscale(to_unit(t.s2_cloudfree)));
        vv.push_back(to_unit(t.s1.band(0)));
        vh.push_back(to_unit(t.s1.band(1)));
        cloudy.push_back(to_unit(t.s2_cloudy));
    }
    add("S1 VV", vv, gray_targets);
    add("S1 VH", vh, gray_targets);
    add("S2 cloudy", cloudy, targets);

    const std::vector<detail::Arm> arms{{"ours-0", 0.0, false, CloudScheme::Copy},
                                        {"ours-0 (m=1)", 0.0, true, CloudScheme::Copy},
                                        {"ours-100", 1.0, false, CloudScheme::Copy},
                                        {"ours-100 (m=1)", 1.0, true, CloudScheme::Copy}};
    for (const auto& arm : arms) add(arm.label, detail::unit_all(run.train_and_predict(arm, {&test})), targets);
    return run.finish(std::move(table));
}

/// Models trained on Perlin or copy-paste clouds, tested on their own synthetic
/// domain (pixel-aligned) and on the seed-disjoint stand-in for real clouds.
inline ExperimentResult run_synthetic_vs_real(ExperimentSpec spec) {
    spec.name = "synthetic_vs_real";
    detail::Runner run(spec);
    auto real = run.test_data(CloudScheme::Copy, spec.real_cloud_seed);
    const auto real_targets = detail::cloudfree_unit(real);
    ExperimentTable table{"metric", {"ours-0 Perlin", "ours-0 copy", "ours-100 Perlin", "ours-100 copy"}, {}};
    const std::vector<std::string> names{"MAE (synth)",       "RMSE (synth)",   "PSNR (synth)",
                                         "SSIM (synth)",      "SAM (synth)",    "precision (synth)",
                                         "recall (synth)",    "F1 (synth)",     "precision (real)",
                                         "recall (real)",     "F1 (real)"};
    std::vector<std::vector<std::optional<double>>> cells(names.size());
    for (double f : {0.0, 1.0}) {
        for (CloudScheme scheme : {CloudScheme::Perlin, CloudScheme::Copy}) {
            auto synth = run.test_data(scheme, spec.cloud_seed);
            const std::string label =
                std::string(f == 0.0 ? "ours-0 " : "ours-100 ") + (scheme == CloudScheme::Perlin ? "Perlin" : "copy");
            auto preds = detail::unit_all(run.train_and_predict({label, f, false, scheme}, {&synth, &real}));
            std::vector<Raster> synth_preds(preds.begin(), preds.begin() + static_cast<std::ptrdiff_t>(synth.size()));
            std::vector<Raster> real_preds(preds.begin() + static_cast<std::ptrdiff_t>(synth.size()), preds.end());
            const auto synth_targets = detail::cloudfree_unit(synth);
            MetricReport r = pixel_report(synth_preds, synth_targets);
            add_precision_recall(r, embed(synth_targets), embed(synth_preds), PrConfig{spec.k});
            auto pr_real = run.pr(real_targets, real_preds);
            const std::vector<std::optional<double>> col{r.mae,      r.rmse,   r.psnr, r.ssim,
                                                         r.sam,      r.precision, r.recall, r.f1,
                                                         pr_real.precision, pr_real.recall,
                                                         f1(pr_real.precision, pr_real.recall)};
            for (std::size_t i = 0; i < names.size(); ++i) cells[i].push_back(col[i]);
        }
    }
    for (std::size_t i = 0; i < names.size(); ++i) table.add_row(names[i], cells[i]);
    return run.finish(std::move(table));
}

inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.name == "paired_fraction") return run_paired_fraction(spec);
    if (spec.name == "ablation") return run_ablation(spec);
    return run_synthetic_vs_real(spec);
}

}  // namespace cloudfusion
