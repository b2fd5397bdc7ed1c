#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cloudfusion/error.hpp"
#include "cloudfusion/train.hpp"

namespace cloudfusion {

/// Flat key=value settings. Lines are `key = value`; `#` starts a comment.
class Config {
public:
    Config() = default;
    explicit Config(std::vector<std::string> known) : known_(std::move(known)) {}

    static Config parse(const std::string& text, std::vector<std::string> known, const std::string& source = "config") {
        Config c(std::move(known));
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ParameterError(source + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
            }
            c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        return c;
    }

    static Config load(const std::string& path, std::vector<std::string> known) {
        std::ifstream f(path);
        if (!f) throw IoError("config: cannot open " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str(), std::move(known), path);
    }

    void set(const std::string& key, const std::string& value) {
        if (!known_.empty() && std::find(known_.begin(), known_.end(), key) == known_.end()) {
            std::string list;
            for (const auto& k : known_) list += (list.empty() ? "" : ", ") + k;
            throw ParameterError("config: unknown key '" + key + "' (known keys: " + list + ")");
        }
        values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const { return values_; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t used = 0;
            double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ParameterError("config: key '" + key + "' expects a number, got '" + it->second + "'");
        }
    }

    long long get_int(const std::string& key, long long fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        long long v = 0;
        const auto& s = it->second;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) {
            throw ParameterError("config: key '" + key + "' expects an integer, got '" + s + "'");
        }
        return v;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const auto& s = it->second;
        if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
        if (s == "0" || s == "false" || s == "no" || s == "off") return false;
        throw ParameterError("config: key '" + key + "' expects a boolean, got '" + s + "'");
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    }

    std::vector<std::string> known_;
    std::map<std::string, std::string> values_;
};

inline std::vector<std::string> train_config_keys() {
    return {"data_dir",   "out_dir",     "model",         "ngf",          "ndf",        "n_blocks",
            "d_layers",   "dropout",     "n_iter",        "n_decay",      "learning_rate", "beta1",
            "beta2",      "epsilon",     "lambda_adv",    "lambda_cyc",   "lambda_idt", "lambda_aux",
            "lambda_pix", "lambda_feat", "lambda_style",  "paired_fraction", "ablate_mask", "seed",
            "crop",       "batch_size",  "pool_size",     "max_steps",    "validation_fraction"};
}

/// Typed TrainConfig from settings; every value is parsed and validated here.
inline TrainConfig train_config_from(const Config& c) {
    TrainConfig t;
    const std::string preset = c.get_string("model", "full");
    if (preset == "toy") {
        t.model = ModelConfig::toy();
    } else if (preset != "full") {
        throw ParameterError("config: model must be 'full' or 'toy', got '" + preset + "'");
    }
    auto size = [&](const char* key, std::size_t fallback) {
        long long v = c.get_int(key, static_cast<long long>(fallback));
        if (v < 0) throw ParameterError(std::string("config: key '") + key + "' must be >= 0");
        return static_cast<std::size_t>(v);
    };
    t.model.ngf = size("ngf", t.model.ngf);
    t.model.ndf = size("ndf", t.model.ndf);
    t.model.n_blocks = size("n_blocks", t.model.n_blocks);
    t.model.d_layers = size("d_layers", t.model.d_layers);
    t.model.dropout = c.get_double("dropout", t.model.dropout);
    if (t.model.ngf == 0 || t.model.ndf == 0 || t.model.d_layers == 0) {
        throw ParameterError("config: ngf, ndf and d_layers must be positive");
    }
    t.schedule.n_iter = static_cast<int>(c.get_int("n_iter", t.schedule.n_iter));
    t.schedule.n_decay = static_cast<int>(c.get_int("n_decay", t.schedule.n_decay));
    t.optimizer.learning_rate = c.get_double("learning_rate", t.optimizer.learning_rate);
    t.optimizer.beta1 = c.get_double("beta1", t.optimizer.beta1);
    t.optimizer.beta2 = c.get_double("beta2", t.optimizer.beta2);
    t.optimizer.epsilon = c.get_double("epsilon", t.optimizer.epsilon);
    t.weights.lambda_adv = c.get_double("lambda_adv", t.weights.lambda_adv);
    t.weights.lambda_cyc = c.get_double("lambda_cyc", t.weights.lambda_cyc);
    t.weights.lambda_idt = c.get_double("lambda_idt", t.weights.lambda_idt);
    t.weights.lambda_aux = c.get_double("lambda_aux", t.weights.lambda_aux);
    t.weights.lambda_pix = c.get_double("lambda_pix", t.weights.lambda_pix);
    t.weights.lambda_feat = c.get_double("lambda_feat", t.weights.lambda_feat);
    t.weights.lambda_style = c.get_double("lambda_style", t.weights.lambda_style);
    t.paired_fraction = c.get_double("paired_fraction", t.paired_fraction);
    t.ablate_mask = c.get_bool("ablate_mask", t.ablate_mask);
    t.seed = static_cast<std::uint64_t>(size("seed", 0));
    t.crop = size("crop", t.crop);
    t.batch_size = size("batch_size", t.batch_size);
    t.pool_size = size("pool_size", t.pool_size);
    t.max_steps = c.get_int("max_steps", t.max_steps);
    t.validation_fraction = c.get_double("validation_fraction", t.validation_fraction);
    t.out_dir = c.get_string("out_dir", "");
    t.validate();
    return t;
}

}  // namespace cloudfusion
