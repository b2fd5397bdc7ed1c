#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cloudfusion/cloudmask.hpp"
#include "cloudfusion/config.hpp"
#include "cloudfusion/experiments.hpp"
#include "cloudfusion/metrics.hpp"
#include "cloudfusion/raster_io.hpp"
#include "cloudfusion/simulate.hpp"
#include "cloudfusion/train.hpp"
#include "cloudfusion/version.hpp"

namespace cloudfusion {

namespace fs = std::filesystem;

/// A recognized subcommand and its settings. For `train` and `predict` the
/// settings are the merged training configuration (file, then command line).
struct CommandLine {
    std::string command;
    Config options;
};

class UsageError : public std::runtime_error {
public:
    UsageError(const std::string& what, std::string usage_text) : std::runtime_error(what), usage(std::move(usage_text)) {}
    std::string usage;
};

struct HelpRequest {
    std::string text;
};

namespace cli {

struct OptionSpec {
    std::string name;  // long flag without dashes
    std::string help;
    bool flag = false;
    bool required = false;
    std::string fallback;  // stored when the option is absent (empty: not stored)
};

struct CommandSpec {
    std::string name;
    std::string help;
    std::vector<OptionSpec> options;
};

inline const std::vector<CommandSpec>& commands() {
    static const std::vector<CommandSpec> specs{
        {"mask",
         "Cloud probability maps (detector, threshold 0.5, Gaussian blur) for SR12 optical rasters",
         {{"input", "SR12 file or directory of SR12 files", false, true, ""},
          {"out", "output directory", false, true, ""},
          {"preview", "also write PGM previews", true, false, ""}}},
        {"simulate",
         "Synthesize a cloudy image from a cloud-free one (Perlin noise or copy-paste)",
         {{"mode", "perlin or copy", false, true, ""},
          {"cloudfree", "cloud-free SR12 raster", false, true, ""},
          {"cloudy", "real cloudy SR12 raster (copy mode)", false, false, ""},
          {"mask", "cloud map SR12 raster (copy mode; computed from --cloudy when absent)", false, false, ""},
          {"out", "output directory", false, true, ""},
          {"seed", "noise seed", false, false, "0"},
          {"octaves", "Perlin octaves", false, false, "4"},
          {"persistence", "Perlin amplitude decay per octave", false, false, "0.5"},
          {"base-period", "Perlin lattice cell size in pixels", false, false, "64"},
          {"preview", "also write PPM/PGM previews", true, false, ""}}},
        {"tile",
         "Cut a scene into overlapping square patches",
         {{"input", "SR12 scene", false, true, ""},
          {"out", "output directory", false, true, ""},
          {"size", "patch size in pixels", false, false, "256"},
          {"overlap", "fractional overlap in [0, 1)", false, false, "0.5"}}},
        {"train",
         "Train the cloud-removal networks",
         {{"config", "key=value configuration file", false, false, ""},
          {"data", "dataset directory (s1/, s2_cloudy/, s2_cloudfree/, optional mask/)", false, false, ""},
          {"out", "output directory for checkpoints and losses.csv", false, false, ""},
          {"seed", "random seed", false, false, ""},
          {"max-steps", "stop after this many steps (0: full schedule)", false, false, ""},
          {"paired-fraction", "fraction of samples with paired targets", false, false, ""},
          {"ablate", "fix the cloud map to 1 (ablation)", true, false, ""}}},
        {"predict",
         "Remove clouds from a dataset with a trained checkpoint",
         {{"checkpoint", "CFW1 checkpoint", false, true, ""},
          {"data", "dataset directory", false, true, ""},
          {"out", "output directory", false, true, ""},
          {"config", "training configuration used for the checkpoint", false, false, ""},
          {"preview", "also write PPM previews", true, false, ""}}},
        {"eval",
         "Metrics of predictions against targets (files paired in sorted name order)",
         {{"pred", "directory of predicted SR12 rasters in [-1, 1]", false, true, ""},
          {"target", "directory of target SR12 rasters in [-1, 1]", false, true, ""},
          {"embeddings", "CFE1 file: targets then predictions, sorted name order", false, false, ""},
          {"k", "neighbour count for precision/recall", false, false, "10"}}},
        {"stats",
         "Cloud-coverage histogram and mean/std over a directory of masks",
         {{"masks", "directory of SR12 cloud maps", false, true, ""}}},
        {"preview",
         "Write an 8-bit PGM/PPM preview of a 1- or 3-band raster",
         {{"input", "SR12 raster", false, true, ""},
          {"out", "output .pgm/.ppm path", false, true, ""},
          {"lo", "value mapped to 0", false, false, "-1"},
          {"hi", "value mapped to 255", false, false, "1"}}},
        {"synth",
         "Generate a synthetic triplet dataset",
         {{"out", "dataset directory", false, true, ""},
          {"count", "number of triplets", false, false, "16"},
          {"size", "patch size", false, false, "32"},
          {"seed", "scene seed", false, false, "0"},
          {"cloud-seed", "cloud seed", false, false, "1"},
          {"scheme", "copy or perlin", false, false, "copy"},
          {"preview", "also write PPM previews of the cloudy images", true, false, ""}}},
        {"experiment",
         "Run a desk-scale experiment: paired_fraction, ablation or synthetic_vs_real",
         {{"name", "experiment name", false, true, ""},
          {"out", "root output directory", false, false, "runs"},
          {"seed", "seed", false, false, "0"},
          {"dataset-size", "training triplets", false, false, "64"},
          {"test-size", "test triplets", false, false, "32"},
          {"patch-size", "patch size", false, false, "32"},
          {"n-iter", "epochs at the base learning rate", false, false, "8"},
          {"n-decay", "epochs of linear decay", false, false, "4"},
          {"max-steps", "step cap per model (0: none)", false, false, "0"},
          {"k", "neighbour count for precision/recall", false, false, "10"}}},
    };
    return specs;
}

inline std::string key_of(const std::string& flag) {
    std::string k = flag;
    std::replace(k.begin(), k.end(), '-', '_');
    return k;
}

}  // namespace cli

/// Parses argv (argv[0] is the program name). Throws UsageError on bad usage
/// and HelpRequest for --help.
inline CommandLine parse_args(const std::vector<std::string>& argv) {
    CLI::App app{"cloudfusion " + std::string(kVersion) + ": SAR-optical cloud removal toolkit", "cloudfusion"};
    app.require_subcommand(1);
    std::map<std::string, std::string> strings;
    std::map<std::string, bool> flags;
    std::vector<std::string> sets;
    for (const auto& cmd : cli::commands()) {
        CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
        for (const auto& opt : cmd.options) {
            const std::string id = cmd.name + "/" + opt.name;
            if (opt.flag) {
                sub->add_flag("--" + opt.name, flags[id], opt.help);
            } else {
                sub->add_option("--" + opt.name, strings[id], opt.help)->required(opt.required);
            }
        }
        if (cmd.name == "train") sub->add_option("--set", sets, "override a config key (key=value), repeatable");
    }

    std::vector<const char*> raw;
    for (const auto& a : argv) raw.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(raw.size()), raw.data());
    } catch (const CLI::CallForHelp&) {
        throw HelpRequest{app.help()};
    } catch (const CLI::CallForAllHelp&) {
        throw HelpRequest{app.help("", CLI::AppFormatMode::All)};
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what(), app.help());
    }

    CommandLine out;
    const CLI::App* sub = app.get_subcommands().front();
    out.command = sub->get_name();
    const auto& spec = *std::find_if(cli::commands().begin(), cli::commands().end(),
                                     [&](const cli::CommandSpec& c) { return c.name == out.command; });

    if (out.command == "train" || out.command == "predict") {
        const std::string cfg_path = strings[out.command + "/config"];
        try {
            auto keys = train_config_keys();
            if (out.command == "predict") keys.insert(keys.end(), {"checkpoint", "data", "out", "preview"});
            out.options = cfg_path.empty() ? Config(keys) : Config::load(cfg_path, keys);
            auto given = [&](const std::string& name) { return sub->count("--" + name) > 0; };
            if (out.command == "train") {
                if (given("data")) out.options.set("data_dir", strings["train/data"]);
                if (given("out")) out.options.set("out_dir", strings["train/out"]);
                if (given("seed")) out.options.set("seed", strings["train/seed"]);
                if (given("max-steps")) out.options.set("max_steps", strings["train/max-steps"]);
                if (given("paired-fraction")) out.options.set("paired_fraction", strings["train/paired-fraction"]);
                if (flags["train/ablate"]) out.options.set("ablate_mask", "true");
                for (const auto& kv : sets) {
                    const auto eq = kv.find('=');
                    if (eq == std::string::npos) throw ParameterError("--set expects key=value, got '" + kv + "'");
                    out.options.set(kv.substr(0, eq), kv.substr(eq + 1));
                }
            }
            train_config_from(out.options);  // every value must parse before work starts
        } catch (const ParameterError& e) {
            throw UsageError(e.what(), sub->help());
        }
        if (out.command == "predict") {
            for (const char* k : {"checkpoint", "data", "out"}) out.options.set(k, strings[std::string("predict/") + k]);
            if (flags["predict/preview"]) out.options.set("preview", "true");
        }
        return out;
    }

    for (const auto& opt : spec.options) {
        const std::string id = out.command + "/" + opt.name;
        if (opt.flag) {
            out.options.set(cli::key_of(opt.name), flags[id] ? "true" : "false");
        } else if (sub->count("--" + opt.name) > 0) {
            out.options.set(cli::key_of(opt.name), strings[id]);
        } else if (!opt.fallback.empty()) {
            out.options.set(cli::key_of(opt.name), opt.fallback);
        }
    }
    return out;
}

// ---- dataset directories --------------------------------------------------------

inline std::vector<fs::path> sr12_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("no such directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".sr12") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

/// Reads <dir>/{s1,s2_cloudy,s2_cloudfree}/<id>.sr12 (plus mask/<id>.sr12 when
/// present). Raw 2-band S1 (dB) and 13-band S2 (DN) are normalized on load.
inline std::vector<PatchTriplet> load_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
    std::vector<PatchTriplet> out;
    for (const auto& s1_path : sr12_files(dir / "s1")) {
        const auto name = s1_path.filename();
        auto need = [&](const char* sub) {
            const fs::path p = dir / sub / name;
            if (!fs::exists(p)) throw IoError("missing " + p.string());
            return p;
        };
        Raster s1 = read_raster(s1_path.string(), Modality::S1);
        Raster cloudy = read_raster(need("s2_cloudy").string(), Modality::S2);
        Raster clear = read_raster(need("s2_cloudfree").string(), Modality::S2);
        std::optional<Raster> mask;
        if (fs::exists(dir / "mask" / name)) {
            mask = CloudMask(read_raster((dir / "mask" / name).string(), Modality::Mask)).raster();
        } else if (cloudy.bands == 13) {
            mask = refine_mask(cloud_probability(cloudy)).raster();
        }
        if (s1.bands == 2) s1 = prepare_s1(s1);
        if (cloudy.bands == 13) cloudy = prepare_s2(cloudy);
        if (clear.bands == 13) clear = prepare_s2(clear);
        PatchTriplet t(std::move(s1), std::move(cloudy), std::move(clear), name.stem().string(), Split::Train);
        t.mask = std::move(mask);
        out.push_back(std::move(t));
    }
    if (out.empty()) throw IoError("dataset directory has no triplets: " + (dir / "s1").string());
    return out;
}

inline void write_dataset(const fs::path& dir, const std::vector<PatchTriplet>& data, std::vector<std::string>* written) {
    for (const char* sub : {"s1", "s2_cloudy", "s2_cloudfree", "mask"}) fs::create_directories(dir / sub);
    for (std::size_t i = 0; i < data.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%06zu.sr12", i);
        const auto& t = data[i];
        write_raster(t.s1, (dir / "s1" / name).string());
        write_raster(t.s2_cloudy, (dir / "s2_cloudy" / name).string());
        write_raster(t.s2_cloudfree, (dir / "s2_cloudfree" / name).string());
        if (t.mask) write_raster(*t.mask, (dir / "mask" / name).string());
    }
    if (written) written->push_back(dir.string());
}

// ---- commands ----------------------------------------------------------------------

namespace cli {

inline Detector detector_for(const Raster& r) {
    if (r.bands == 13) return baseline_detector();
    if (r.bands == 3) return normalized_rgb_detector();
    throw DimensionError("mask: expected a 13-band raw or 3-band normalized optical raster, got " +
                         std::to_string(r.bands) + " bands");
}

inline int cmd_mask(const Config& o, std::ostream& out) {
    const fs::path input = o.get_string("input", "");
    const fs::path dir = o.get_string("out", "");
    std::vector<fs::path> files;
    if (fs::is_directory(input)) {
        files = sr12_files(input);
    } else if (fs::exists(input)) {
        files.push_back(input);
    } else {
        throw IoError("no such file or directory: " + input.string());
    }
    fs::create_directories(dir);
    for (const auto& f : files) {
        const Raster r = read_raster(f.string(), Modality::S2);
        const CloudMask m = refine_mask(cloud_probability(r, detector_for(r)));
        const fs::path dst = dir / f.filename();
        write_raster(m.raster(), dst.string());
        out << dst.string() << "\n";
        if (o.get_bool("preview", false)) {
            const fs::path pv = fs::path(dst).replace_extension(".pgm");
            write_preview(m.raster(), pv.string(), 0.0, 1.0);
            out << pv.string() << "\n";
        }
    }
    return 0;
}

inline Raster normalized_optical(const Raster& r) { return r.bands == 13 ? prepare_s2(r) : r; }

inline int cmd_simulate(const Config& o, std::ostream& out) {
    const std::string mode = o.get_string("mode", "");
    const auto seed = static_cast<std::uint64_t>(o.get_int("seed", 0));
    out << "mode=" << mode << " seed=" << seed << "\n";
    const fs::path dir = o.get_string("out", "");
    const Raster clear = normalized_optical(read_raster(o.get_string("cloudfree", ""), Modality::S2));
    Raster cloudy;
    CloudMask mask;
    if (mode == "perlin") {
        PerlinConfig pc;
        pc.seed = seed;
        pc.octaves = static_cast<int>(o.get_int("octaves", 4));
        pc.persistence = o.get_double("persistence", 0.5);
        pc.base_period = o.get_double("base_period", 64.0);
        pc.validate();
        auto blended = blend_perlin(clear, perlin(clear.width, clear.height, pc));
        cloudy = std::move(blended.cloudy);
        mask = std::move(blended.mask);
    } else if (mode == "copy") {
        if (!o.has("cloudy")) throw ParameterError("simulate: copy mode needs --cloudy");
        const Raster real_raw = read_raster(o.get_string("cloudy", ""), Modality::S2);
        mask = o.has("mask") ? CloudMask(read_raster(o.get_string("mask", ""), Modality::Mask))
                             : refine_mask(cloud_probability(real_raw, detector_for(real_raw)));
        cloudy = blend_copy_paste(clear, normalized_optical(real_raw), mask);
    } else {
        throw ParameterError("simulate: --mode must be perlin or copy, got '" + mode + "'");
    }
    fs::create_directories(dir);
    const fs::path cloudy_path = dir / "cloudy.sr12", mask_path = dir / "mask.sr12";
    write_raster(cloudy, cloudy_path.string());
    write_raster(mask.raster(), mask_path.string());
    out << cloudy_path.string() << "\n" << mask_path.string() << "\n";
    if (o.get_bool("preview", false)) {
        if (cloudy.bands == 1 || cloudy.bands == 3) {
            write_preview(cloudy, (dir / "cloudy.ppm").string());
            out << (dir / "cloudy.ppm").string() << "\n";
        }
        write_preview(mask.raster(), (dir / "mask.pgm").string(), 0.0, 1.0);
        out << (dir / "mask.pgm").string() << "\n";
    }
    return 0;
}

inline int cmd_tile(const Config& o, std::ostream& out) {
    const Raster scene = read_raster(o.get_string("input", ""));
    TileSpec spec{static_cast<std::size_t>(o.get_int("size", 256)), o.get_double("overlap", 0.5)};
    const fs::path dir = o.get_string("out", "");
    fs::create_directories(dir);
    for (const auto& t : tile(scene, spec)) {
        const fs::path p = dir / ("tile_" + std::to_string(t.row) + "_" + std::to_string(t.col) + ".sr12");
        write_raster(t.patch, p.string());
        out << p.string() << "\n";
    }
    return 0;
}

inline int cmd_train(const Config& o, std::ostream& out) {
    TrainConfig cfg = train_config_from(o);
    const std::string data_dir = o.get_string("data_dir", "");
    if (data_dir.empty()) throw ParameterError("train: no data directory (set data_dir or pass --data)");
    auto data = load_dataset(data_dir);
    out << "seed=" << cfg.seed << " triplets=" << data.size() << "\n";
    Trainer<float> trainer(cfg);
    trainer.fit(std::move(data));
    const auto& h = trainer.history();
    if (!h.empty()) out << "steps=" << h.size() << " last_total=" << format_metric(h.back().total) << "\n";
    if (!cfg.out_dir.empty()) {
        out << (fs::path(cfg.out_dir) / "losses.csv").string() << "\n";
        for (int e = 1; e <= cfg.schedule.total_epochs(); ++e) {
            const fs::path p = fs::path(cfg.out_dir) / ("epoch_" + std::to_string(e) + ".cfw1");
            if (fs::exists(p)) out << p.string() << "\n";
        }
    }
    return 0;
}

inline int cmd_predict(const Config& o, std::ostream& out) {
    TrainConfig cfg = train_config_from(o);
    CloudRemovalModel<float> model(cfg.model, cfg.seed);
    load_model(model, o.get_string("checkpoint", ""));
    const auto data = load_dataset(o.get_string("data", ""));
    const fs::path dir = o.get_string("out", "");
    fs::create_directories(dir);
    for (const auto& t : data) {
        const CloudMask m = cfg.ablate_mask ? CloudMask(t.s1.height, t.s1.width, 1.0f) : triplet_mask(t);
        const Raster pred = remove_clouds(model.g_s1s2, t.s1, t.s2_cloudy, m);
        const fs::path p = dir / (t.roi_id + ".sr12");
        write_raster(pred, p.string());
        out << p.string() << "\n";
        if (o.get_bool("preview", false)) write_preview(pred, fs::path(p).replace_extension(".ppm").string());
    }
    return 0;
}

inline int cmd_eval(const Config& o, std::ostream& out) {
    const auto pred_files = sr12_files(o.get_string("pred", ""));
    const auto target_files = sr12_files(o.get_string("target", ""));
    if (pred_files.size() != target_files.size() || pred_files.empty()) {
        throw ContractError("eval: " + std::to_string(pred_files.size()) + " predictions vs " +
                            std::to_string(target_files.size()) + " targets");
    }
    std::vector<Raster> preds, targets;
    for (std::size_t i = 0; i < pred_files.size(); ++i) {
        preds.push_back(to_unit(read_raster(pred_files[i].string())));
        targets.push_back(to_unit(read_raster(target_files[i].string())));
    }
    MetricReport report = pixel_report(preds, targets);
    const auto k = static_cast<std::size_t>(o.get_int("k", 10));
    const std::size_t n = preds.size();
    if (o.has("embeddings")) {
        const EmbeddingFile e = read_embeddings(o.get_string("embeddings", ""));
        if (e.n != 2 * n) {
            throw DimensionError("eval: embedding file has " + std::to_string(e.n) + " rows, expected " +
                                 std::to_string(2 * n) + " (targets then predictions)");
        }
        EmbeddingSet real{n, e.d, {e.values.begin(), e.values.begin() + static_cast<std::ptrdiff_t>(n * e.d)}};
        EmbeddingSet gen{n, e.d, {e.values.begin() + static_cast<std::ptrdiff_t>(n * e.d), e.values.end()}};
        add_precision_recall(report, real, gen, PrConfig{k});
    } else if (n > k) {
        add_precision_recall(report, embed(targets), embed(preds), PrConfig{k});
    }
    out << format_report_text(report) << format_report_csv(report);
    return 0;
}

inline int cmd_stats(const Config& o, std::ostream& out) {
    std::vector<CloudMask> masks;
    for (const auto& f : sr12_files(o.get_string("masks", ""))) {
        masks.emplace_back(read_raster(f.string(), Modality::Mask));
    }
    if (masks.empty()) throw IoError("stats: no .sr12 masks in " + o.get_string("masks", ""));
    out << format_coverage(coverage_stats(masks));
    return 0;
}

inline int cmd_preview(const Config& o, std::ostream& out) {
    const Raster r = read_raster(o.get_string("input", ""));
    const std::string path = o.get_string("out", "");
    write_preview(r, path, o.get_double("lo", -1.0), o.get_double("hi", 1.0));
    out << path << "\n";
    return 0;
}

inline int cmd_synth(const Config& o, std::ostream& out) {
    SceneConfig sc;
    sc.size = static_cast<std::size_t>(o.get_int("size", 32));
    sc.seed = static_cast<std::uint64_t>(o.get_int("seed", 0));
    sc.cloud_seed = static_cast<std::uint64_t>(o.get_int("cloud_seed", 1));
    const std::string scheme = o.get_string("scheme", "copy");
    if (scheme != "copy" && scheme != "perlin") throw ParameterError("synth: --scheme must be copy or perlin");
    sc.scheme = scheme == "copy" ? CloudScheme::Copy : CloudScheme::Perlin;
    const long long count = o.get_int("count", 16);
    if (count <= 0) throw ParameterError("synth: --count must be positive");
    if (sc.size < 16 || sc.size % 4 != 0) throw ParameterError("synth: --size must be >= 16 and a multiple of 4");
    out << "seed=" << sc.seed << " cloud_seed=" << sc.cloud_seed << " scheme=" << scheme << "\n";
    const auto data = synthetic_triplets(static_cast<std::size_t>(count), sc);
    std::vector<std::string> written;
    const fs::path dir = o.get_string("out", "");
    write_dataset(dir, data, &written);
    if (o.get_bool("preview", false)) {
        fs::create_directories(dir / "preview");
        for (std::size_t i = 0; i < data.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "%06zu.ppm", i);
            write_preview(data[i].s2_cloudy, (dir / "preview" / name).string());
        }
        written.push_back((dir / "preview").string());
    }
    for (const auto& w : written) out << w << "\n";
    return 0;
}

inline int cmd_experiment(const Config& o, std::ostream& out) {
    ExperimentSpec spec;
    spec.name = o.get_string("name", "");
    spec.out_root = o.get_string("out", "runs");
    spec.seed = static_cast<std::uint64_t>(o.get_int("seed", 0));
    spec.dataset_size = static_cast<std::size_t>(o.get_int("dataset_size", 64));
    spec.test_size = static_cast<std::size_t>(o.get_int("test_size", 32));
    spec.patch_size = static_cast<std::size_t>(o.get_int("patch_size", 32));
    spec.schedule.n_iter = static_cast<int>(o.get_int("n_iter", 8));
    spec.schedule.n_decay = static_cast<int>(o.get_int("n_decay", 4));
    spec.max_steps = o.get_int("max_steps", 0);
    spec.k = static_cast<std::size_t>(o.get_int("k", 10));
    spec.validate();
    out << "experiment=" << spec.name << " seed=" << spec.seed << "\n";
    const auto res = run_experiment(spec);
    out << res.table.text();
    for (const auto& n : res.notes) out << n << "\n";
    if (!res.run_dir.empty()) out << res.run_dir << "\n";
    return 0;
}

}  // namespace cli

/// Runs a parsed command. Returns the process exit code; runtime failures are
/// thrown to the caller.
inline int run_command(const CommandLine& cl, std::ostream& out) {
    const auto& c = cl.command;
    const auto& o = cl.options;
    if (c == "mask") return cli::cmd_mask(o, out);
    if (c == "simulate") return cli::cmd_simulate(o, out);
    if (c == "tile") return cli::cmd_tile(o, out);
    if (c == "train") return cli::cmd_train(o, out);
    if (c == "predict") return cli::cmd_predict(o, out);
    if (c == "eval") return cli::cmd_eval(o, out);
    if (c == "stats") return cli::cmd_stats(o, out);
    if (c == "preview") return cli::cmd_preview(o, out);
    if (c == "synth") return cli::cmd_synth(o, out);
    if (c == "experiment") return cli::cmd_experiment(o, out);
    throw ContractError("unknown command " + c);
}

/// Full entry point: 0 success, 1 runtime error (one line on err), 2 usage error.
inline int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CommandLine cl;
    try {
        cl = parse_args(argv);
    } catch (const HelpRequest& h) {
        out << h.text;
        return 0;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n" << e.usage;
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    try {
        return run_command(cl, out);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        err << "error: " << msg << "\n";
        return 1;
    }
}

}  // namespace cloudfusion
