#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "steerlab/commands.hpp"

using namespace steerlab;
using namespace steerlab::harness;

namespace {

struct CommonFlags {
    std::string config_file;
    std::vector<std::string> overrides;  // key=value
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_file, "config file (key=value lines)");
    cmd->add_option("--set", flags.overrides, "override a config key (key=value)")
        ->take_all();
    cmd->add_option("--seed", flags.seed, "experiment seed");
}

ExperimentConfig resolve_config(const CommonFlags& flags) {
    ExperimentConfig cfg;
    if (!flags.config_file.empty()) cfg = load_config_file(flags.config_file);
    apply_seed_env(cfg);
    for (const std::string& kv : flags.overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (flags.seed) cfg.seed = *flags.seed;
    return cfg;
}

void print_split_table(const EvalReport& report) {
    std::printf("%-10s %-9s %8s %8s %8s %8s %8s %8s %6s\n", "arm", "split",
                "ans_acc", "mc_acc", "cloze", "rouge", "ril", "rcr", "gate");
    auto print_arm = [](const char* arm,
                        const std::map<std::string, SplitMetrics>& rows) {
        for (const auto& [split, m] : rows) {
            std::printf("%-10s %-9s %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %6.3f\n",
                        arm, split.c_str(), m.answer_accuracy, m.mc_accuracy,
                        m.cloze_accuracy, m.rouge_l, m.ril, m.rcr,
                        m.gate_open_fraction);
        }
    };
    print_arm("vanilla", report.vanilla);
    print_arm("steered", report.steered);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reasoning-preserving unlearning via adaptive activation steering"};
    app.require_subcommand(1);

    CommonFlags flags;

    auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic benchmark corpus");
    add_common(gen, flags);

    auto* plant = app.add_subcommand("plant", "train the toy model's readout on the corpus");
    add_common(plant, flags);

    auto* build = app.add_subcommand("build", "build unlearning/retain subspaces and prototypes");
    add_common(build, flags);

    auto* eval = app.add_subcommand("eval", "evaluate vanilla and steered models on all splits");
    add_common(eval, flags);

    auto* sweep = app.add_subcommand("sweep-tau", "evaluate across gate thresholds");
    add_common(sweep, flags);
    std::vector<double> taus;
    sweep->add_option("--taus", taus, "thresholds to sweep (default 0.6..1.0 grid)");

    auto* ablate = app.add_subcommand("ablate", "run the component ablation matrix");
    add_common(ablate, flags);

    auto* pca = app.add_subcommand("export-pca", "project activations to two components");
    add_common(pca, flags);
    std::optional<std::size_t> pca_layer;
    pca->add_option("--layer", pca_layer, "layer to export (default: scoring layer)");

    auto* tradeoff = app.add_subcommand("tradeoff", "emit forgetting-utility curve data");
    std::vector<std::string> report_paths;
    std::string tradeoff_out = "tradeoff.csv";
    tradeoff->add_option("reports", report_paths, "eval report JSON files")->required();
    tradeoff->add_option("--out", tradeoff_out, "output CSV path");

    auto* theory = app.add_subcommand("theory-check", "first-order loss analysis on the toy model");
    add_common(theory, flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            ExperimentConfig cfg = resolve_config(flags);
            auto records = cmd_gen_corpus(cfg);
            std::printf("wrote %zu records to %s\n", records.size(),
                        cfg.corpus().string().c_str());
        } else if (plant->parsed()) {
            ExperimentConfig cfg = resolve_config(flags);
            cmd_plant(cfg);
            std::printf("planted model written to %s\n", cfg.model().string().c_str());
        } else if (build->parsed()) {
            ExperimentConfig cfg = resolve_config(flags);
            ArtifactBundle bundle = cmd_build(cfg);
            std::printf("wrote %zu artifacts and %zu prototype sets to %s\n",
                        bundle.artifacts.size(), bundle.prototypes.size(),
                        cfg.artifacts().string().c_str());
        } else if (eval->parsed()) {
            ExperimentConfig cfg = resolve_config(flags);
            EvalReport report = cmd_eval(cfg);
            print_split_table(report);
            std::printf("report written to %s\n", cfg.report().string().c_str());
        } else if (sweep->parsed()) {
            ExperimentConfig cfg = resolve_config(flags);
            const auto& grid = taus.empty() ? default_tau_grid() : taus;
            cmd_sweep_tau(cfg, grid);
            std::printf("sweep written to %s/sweep_tau.csv\n", cfg.out_dir.c_str());
        } else if (ablate->parsed()) {
            ExperimentConfig cfg = resolve_config(flags);
            cmd_ablate(cfg);
            std::printf("ablation table written to %s/ablation.csv\n",
                        cfg.out_dir.c_str());
        } else if (pca->parsed()) {
            ExperimentConfig cfg = resolve_config(flags);
            const auto layers = resolve_steering_layers(cfg);
            const std::size_t layer =
                pca_layer ? *pca_layer : resolve_scoring_layer(cfg, layers);
            cmd_export_pca(cfg, layer);
            std::printf("activation map written to %s/pca.csv\n", cfg.out_dir.c_str());
        } else if (tradeoff->parsed()) {
            std::vector<std::pair<std::string, std::filesystem::path>> reports;
            for (const std::string& p : report_paths) {
                std::filesystem::path path(p);
                reports.push_back({path.stem().string(), path});
            }
            cmd_tradeoff(reports, tradeoff_out);
            std::printf("tradeoff curve written to %s\n", tradeoff_out.c_str());
        } else if (theory->parsed()) {
            ExperimentConfig cfg = resolve_config(flags);
            TheorySummary summary = cmd_theory_check(cfg);
            std::printf("layer %zu: forget %zu/%zu open, mean dL_ref %.6f, "
                        "alpha_F %.6f; retain %zu/%zu open, eps_R %.3e\n",
                        summary.check_layer, summary.report.forget_open,
                        summary.report.forget_total, summary.report.mean_forget_dl,
                        summary.report.alpha_forget, summary.report.retain_open,
                        summary.report.retain_total, summary.report.epsilon_retain);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
