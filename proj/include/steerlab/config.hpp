#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "steerlab/steer.hpp"

namespace steerlab::harness {

struct ExperimentConfig {
    std::uint64_t seed = 42;

    // toy model
    std::size_t d = 64;
    std::size_t n_layers = 6;
    std::size_t image_feature_dim = 16;
    std::size_t image_tokens = 2;

    // corpus
    std::size_t n_profiles = 40;
    std::size_t n_celebrity = 8;
    std::size_t questions_per_profile = 10;
    double forget_ratio = 0.05;

    // subspaces and steering
    double eta = 0.8;
    double tau = 0.85;
    steer::SteerMode mode = steer::SteerMode::acs;
    double lambda_fixed = 1.5;
    bool use_rrs = true;
    steer::SpanView view = steer::SpanView::hybrid;
    std::string steering_layers = "auto";  // "auto" or comma-separated indices
    std::string scoring_layer = "auto";    // "auto" or an index
    std::size_t prototype_k = 8;

    // planting
    std::size_t plant_steps = 700;
    double plant_lr = 0.05;

    // evaluation
    std::size_t max_len = 32;
    std::size_t workers = 1;
    std::string judge = "mock";  // "mock" or "subprocess:<command>"

    // paths
    std::string out_dir = "out";
    std::string corpus_path;     // default: <out_dir>/corpus.jsonl
    std::string model_path;      // default: <out_dir>/model.bin
    std::string artifacts_path;  // default: <out_dir>/artifacts.bin
    std::string report_path;     // default: <out_dir>/report.json
    std::string templates_path;  // optional; built-in defaults when empty
    std::string log_path;        // optional intervention log

    std::filesystem::path corpus() const {
        return corpus_path.empty() ? std::filesystem::path(out_dir) / "corpus.jsonl"
                                   : std::filesystem::path(corpus_path);
    }
    std::filesystem::path model() const {
        return model_path.empty() ? std::filesystem::path(out_dir) / "model.bin"
                                  : std::filesystem::path(model_path);
    }
    std::filesystem::path artifacts() const {
        return artifacts_path.empty()
                   ? std::filesystem::path(out_dir) / "artifacts.bin"
                   : std::filesystem::path(artifacts_path);
    }
    std::filesystem::path report() const {
        return report_path.empty() ? std::filesystem::path(out_dir) / "report.json"
                                   : std::filesystem::path(report_path);
    }

    void set(const std::string& key, const std::string& value);
    std::string canonical() const;
};

namespace detail {

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        return std::stoull(v);
    } catch (...) {
        throw ConfigError(key + ": expected integer, got '" + v + "'");
    }
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        return std::stod(v);
    } catch (...) {
        throw ConfigError(key + ": expected number, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected boolean, got '" + v + "'");
}

}  // namespace detail

inline void ExperimentConfig::set(const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "seed") seed = parse_u64(key, value);
    else if (key == "d") d = parse_u64(key, value);
    else if (key == "n_layers") n_layers = parse_u64(key, value);
    else if (key == "image_feature_dim") image_feature_dim = parse_u64(key, value);
    else if (key == "image_tokens") image_tokens = parse_u64(key, value);
    else if (key == "n_profiles") n_profiles = parse_u64(key, value);
    else if (key == "n_celebrity") n_celebrity = parse_u64(key, value);
    else if (key == "questions_per_profile") questions_per_profile = parse_u64(key, value);
    else if (key == "forget_ratio") forget_ratio = parse_double(key, value);
    else if (key == "eta") eta = parse_double(key, value);
    else if (key == "tau") tau = parse_double(key, value);
    else if (key == "mode") {
        if (value == "acs") mode = steer::SteerMode::acs;
        else if (value == "additive") mode = steer::SteerMode::additive;
        else if (value == "off") mode = steer::SteerMode::off;
        else throw ConfigError("mode: unknown value '" + value + "'");
    } else if (key == "lambda_fixed") lambda_fixed = parse_double(key, value);
    else if (key == "use_rrs") use_rrs = parse_bool(key, value);
    else if (key == "view") {
        if (value == "hybrid") view = steer::SpanView::hybrid;
        else if (value == "answer_only") view = steer::SpanView::answer_only;
        else if (value == "cot_only") view = steer::SpanView::cot_only;
        else throw ConfigError("view: unknown value '" + value + "'");
    } else if (key == "steering_layers") steering_layers = value;
    else if (key == "scoring_layer") scoring_layer = value;
    else if (key == "prototype_k") prototype_k = parse_u64(key, value);
    else if (key == "plant_steps") plant_steps = parse_u64(key, value);
    else if (key == "plant_lr") plant_lr = parse_double(key, value);
    else if (key == "max_len") max_len = parse_u64(key, value);
    else if (key == "workers") workers = parse_u64(key, value);
    else if (key == "judge") judge = value;
    else if (key == "out_dir") out_dir = value;
    else if (key == "corpus_path") corpus_path = value;
    else if (key == "model_path") model_path = value;
    else if (key == "artifacts_path") artifacts_path = value;
    else if (key == "report_path") report_path = value;
    else if (key == "templates_path") templates_path = value;
    else if (key == "log_path") log_path = value;
    else throw ConfigError("unknown config key: " + key);
}

/// Canonical key=value rendering; hashing this pins the provenance.
inline std::string ExperimentConfig::canonical() const {
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    std::map<std::string, std::string> kv = {
        {"seed", std::to_string(seed)},
        {"d", std::to_string(d)},
        {"n_layers", std::to_string(n_layers)},
        {"image_feature_dim", std::to_string(image_feature_dim)},
        {"image_tokens", std::to_string(image_tokens)},
        {"n_profiles", std::to_string(n_profiles)},
        {"n_celebrity", std::to_string(n_celebrity)},
        {"questions_per_profile", std::to_string(questions_per_profile)},
        {"forget_ratio", fmt(forget_ratio)},
        {"eta", fmt(eta)},
        {"tau", fmt(tau)},
        {"mode", steer::to_string(mode)},
        {"lambda_fixed", fmt(lambda_fixed)},
        {"use_rrs", use_rrs ? "true" : "false"},
        {"view", steer::to_string(view)},
        {"steering_layers", steering_layers},
        {"scoring_layer", scoring_layer},
        {"prototype_k", std::to_string(prototype_k)},
        {"plant_steps", std::to_string(plant_steps)},
        {"plant_lr", fmt(plant_lr)},
        {"max_len", std::to_string(max_len)},
        {"judge", judge},
    };
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

/// Flat key=value file; '#' starts a comment.
inline ExperimentConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path.string());
    ExperimentConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
            line.pop_back();
        std::size_t start = 0;
        while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start])))
            ++start;
        line = line.substr(start);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key=value");
        cfg.set(line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

/// STEERLAB_SEED overrides the file; an explicit --seed flag overrides both
/// (the CLI applies flags after this call).
inline void apply_seed_env(ExperimentConfig& cfg) {
    if (const char* env = std::getenv("STEERLAB_SEED")) {
        cfg.seed = detail::parse_u64("STEERLAB_SEED", env);
    }
}

}  // namespace steerlab::harness
