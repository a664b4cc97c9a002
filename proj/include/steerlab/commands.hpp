#pragma once

#include "steerlab/report.hpp"

namespace steerlab::harness {

namespace detail {

inline std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
}

inline void write_text_atomic(const std::filesystem::path& path,
                              const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw IoError("cannot open for write: " + tmp.string());
        f << content;
        if (!f) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + path.string());
}

}  // namespace detail

inline void ensure_out_dir(const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
}

inline std::vector<BenchRecord> cmd_gen_corpus(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    CorpusOptions opt;
    opt.seed = cfg.seed;
    opt.n_profiles = cfg.n_profiles;
    opt.n_celebrity = cfg.n_celebrity;
    opt.questions_per_profile = cfg.questions_per_profile;
    opt.forget_ratio = cfg.forget_ratio;
    opt.image_feature_dim = cfg.image_feature_dim;
    std::vector<BenchRecord> records = generate_corpus(opt);
    save_dataset(cfg.corpus(), records);
    return records;
}

inline PromptTemplates templates_for(const ExperimentConfig& cfg) {
    return cfg.templates_path.empty() ? PromptTemplates::defaults()
                                      : PromptTemplates::load(cfg.templates_path);
}

/// Plant every association the model is supposed to know: forget, retain,
/// and celebrity records. The test split stays unplanted; it probes
/// paraphrase generalization.
inline ToyModel cmd_plant(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    std::vector<BenchRecord> records = load_dataset(cfg.corpus());
    PromptTemplates templates = templates_for(cfg);
    Vocab vocab = build_vocab(records, templates);

    toy::ModelDims dims;
    dims.vocab_size = vocab.size();
    dims.d = cfg.d;
    dims.n_layers = cfg.n_layers;
    dims.image_feature_dim = cfg.image_feature_dim;
    dims.image_tokens = cfg.image_tokens;
    ToyModel model = ToyModel::init(cfg.seed, dims);

    std::vector<toy::PlantItem> items;
    for (const BenchRecord& r : records) {
        if (r.split == Split::test) continue;
        items.push_back(plant_item(r, vocab, templates));
    }
    toy::PlantOptions opt;
    opt.steps = cfg.plant_steps;
    opt.lr = cfg.plant_lr;
    opt.max_len = cfg.max_len;
    opt.workers = cfg.workers;
    ToyModel planted = toy::plant_facts(model, items, opt);
    toy::save_model(cfg.model(), planted);
    return planted;
}

inline ArtifactBundle cmd_build(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    std::vector<BenchRecord> records = load_dataset(cfg.corpus());
    ToyModel model = toy::load_model(cfg.model());
    ArtifactBundle bundle = build_artifacts(model, records, cfg);
    io::save_artifacts(cfg.artifacts(), bundle.artifacts, bundle.prototypes);
    return bundle;
}

inline ArtifactBundle load_bundle(const ExperimentConfig& cfg) {
    auto [artifacts, prototypes] = io::load_artifacts(cfg.artifacts());
    return ArtifactBundle{std::move(artifacts), std::move(prototypes)};
}

inline EvalReport cmd_eval(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    std::vector<BenchRecord> records = load_dataset(cfg.corpus());
    ToyModel model = toy::load_model(cfg.model());
    ArtifactBundle bundle = load_bundle(cfg);

    std::vector<RecordRun> runs = run_records(model, records, bundle, cfg);
    auto judge = make_judge(cfg);
    EvalReport report;
    report.mode = steer::to_string(cfg.mode);
    report.tau = cfg.tau;
    report.config_hash = string_hash(cfg.canonical());
    report.corpus_hash = file_hash(cfg.corpus());
    report.model_hash = file_hash(cfg.model());
    report.artifacts_hash = file_hash(cfg.artifacts());
    report.vanilla = score_records(runs, cfg.tau, false, *judge);
    report.steered = score_records(runs, cfg.tau, true, *judge);
    save_report(cfg.report(), report);
    if (!cfg.log_path.empty())
        write_intervention_log(cfg.log_path, runs, cfg.tau);
    return report;
}

/// One row per (tau, split, metric); generations are shared across taus
/// because the gate score does not depend on the threshold.
inline std::string cmd_sweep_tau(const ExperimentConfig& cfg,
                                 const std::vector<double>& taus) {
    ensure_out_dir(cfg);
    std::vector<BenchRecord> records = load_dataset(cfg.corpus());
    ToyModel model = toy::load_model(cfg.model());
    ArtifactBundle bundle = load_bundle(cfg);
    std::vector<RecordRun> runs = run_records(model, records, bundle, cfg);
    auto judge = make_judge(cfg);

    std::string csv = "tau,split,metric,value\n";
    for (double tau : taus) {
        auto scored = score_records(runs, tau, true, *judge);
        for (const auto& [split, m] : scored) {
            const std::vector<std::pair<const char*, double>> rows = {
                {"answer_accuracy", m.answer_accuracy},
                {"mc_accuracy", m.mc_accuracy},
                {"cloze_accuracy", m.cloze_accuracy},
                {"rouge_l", m.rouge_l},
                {"ril", m.ril},
                {"rcr", m.rcr},
                {"gate_open_fraction", m.gate_open_fraction},
            };
            for (const auto& [name, value] : rows)
                csv += detail::csv_num(tau) + "," + split + "," + name + "," +
                       detail::csv_num(value) + "\n";
        }
    }
    detail::write_text_atomic(std::filesystem::path(cfg.out_dir) / "sweep_tau.csv",
                              csv);
    return csv;
}

inline const std::vector<double>& default_tau_grid() {
    static const std::vector<double> v = {0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 1.0};
    return v;
}

struct AblationVariant {
    std::string label;
    ExperimentConfig cfg;
};

inline std::vector<AblationVariant> ablation_matrix(const ExperimentConfig& base) {
    std::vector<AblationVariant> variants;
    variants.push_back({"full", base});
    {
        ExperimentConfig c = base;
        c.use_rrs = false;  // no gate, no orthogonal protection
        variants.push_back({"wo_rrs", c});
    }
    {
        ExperimentConfig c = base;
        c.view = SpanView::answer_only;  // drop the reasoning span
        variants.push_back({"wo_reasoning_span", c});
    }
    {
        ExperimentConfig c = base;
        c.view = SpanView::cot_only;  // drop the answer span
        variants.push_back({"wo_answer_span", c});
    }
    {
        ExperimentConfig c = base;
        c.mode = SteerMode::additive;
        c.lambda_fixed = 1.5;
        variants.push_back({"wo_acs", c});
    }
    return variants;
}

/// Runs the ablation matrix; span-view variants rebuild their own subspaces.
inline std::string cmd_ablate(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    std::vector<BenchRecord> records = load_dataset(cfg.corpus());
    ToyModel model = toy::load_model(cfg.model());
    auto judge = make_judge(cfg);

    std::map<std::string, ArtifactBundle> bundles_by_view;
    std::string csv = "label,split,metric,value\n";
    for (const AblationVariant& variant : ablation_matrix(cfg)) {
        const std::string view_key = steer::to_string(variant.cfg.view);
        if (!bundles_by_view.count(view_key))
            bundles_by_view.emplace(view_key,
                                    build_artifacts(model, records, variant.cfg));
        const ArtifactBundle& bundle = bundles_by_view.at(view_key);
        std::vector<RecordRun> runs = run_records(model, records, bundle, variant.cfg);
        auto scored = score_records(runs, variant.cfg.tau, true, *judge);
        for (const auto& [split, m] : scored) {
            const std::vector<std::pair<const char*, double>> rows = {
                {"answer_accuracy", m.answer_accuracy},
                {"mc_accuracy", m.mc_accuracy},
                {"cloze_accuracy", m.cloze_accuracy},
                {"rouge_l", m.rouge_l},
                {"ril", m.ril},
                {"rcr", m.rcr},
            };
            for (const auto& [name, value] : rows)
                csv += variant.label + "," + split + "," + name + "," +
                       detail::csv_num(value) + "\n";
        }
    }
    detail::write_text_atomic(std::filesystem::path(cfg.out_dir) / "ablation.csv",
                              csv);
    return csv;
}

/// Two-component activation map at one layer: the basis is fitted on the
/// union of vanilla states over the retain and forget splits, then all four
/// groups are projected with that shared basis.
inline std::string cmd_export_pca(const ExperimentConfig& cfg, std::size_t layer) {
    ensure_out_dir(cfg);
    std::vector<BenchRecord> records = load_dataset(cfg.corpus());
    ToyModel model = toy::load_model(cfg.model());
    ArtifactBundle bundle = load_bundle(cfg);
    PromptTemplates templates = templates_for(cfg);
    Vocab vocab = build_vocab(records, templates);

    SteeringPolicy policy = policy_from_config(cfg);
    SteeringPolicy forced = policy;
    forced.tau = 1.0;
    SteerRunner runner(model, bundle, forced);

    std::vector<std::pair<std::string, Vec>> points;  // (group, state)
    std::vector<Vec> fit_set;
    for (const BenchRecord& r : records) {
        if (r.split != Split::retain && r.split != Split::forget) continue;
        InputSequence prompt = eval_prompt(r, vocab, templates);
        const std::size_t prompt_len = model.full_tokens(prompt).size();
        ActivationTrace vanilla = forward_with_hooks(model, prompt);
        Vec v_state(model.dims.d);
        for (std::size_t j = 0; j < model.dims.d; ++j)
            v_state[j] = vanilla.layers[layer](prompt_len - 1, j);

        // steered state at the same position, honoring the gate at cfg.tau
        SessionResult probe;
        Vec s_state = v_state;
        if (cfg.mode != SteerMode::off) {
            Vec h_end(model.dims.d);
            for (std::size_t j = 0; j < model.dims.d; ++j)
                h_end[j] = vanilla.layers[policy.scoring_layer](prompt_len - 1, j);
            const bool open =
                !cfg.use_rrs ||
                steer::decide_gate(
                    steer::gate_score(h_end, bundle.require(SubspaceKind::retain,
                                                            policy.scoring_layer)
                                                 .projector()),
                    cfg.tau)
                    .open;
            if (open) {
                ActivationTrace steered =
                    runner.prompt_trace(r, vocab, templates, probe);
                for (std::size_t j = 0; j < model.dims.d; ++j)
                    s_state[j] = steered.layers[layer](prompt_len - 1, j);
            }
        }
        const std::string base = to_string(r.split);
        fit_set.push_back(v_state);
        points.push_back({base + "_vanilla", std::move(v_state)});
        points.push_back({base + "_steered", std::move(s_state)});
    }

    Pca2 pca = Pca2::fit(fit_set);
    std::string csv = "group,pc1,pc2\n";
    for (const auto& [group, state] : points) {
        auto [x, y] = pca.project(state);
        csv += group + "," + detail::csv_num(x) + "," + detail::csv_num(y) + "\n";
    }
    detail::write_text_atomic(std::filesystem::path(cfg.out_dir) / "pca.csv", csv);
    return csv;
}

/// Forgetting-utility curve data: one row per report.
inline std::string cmd_tradeoff(
    const std::vector<std::pair<std::string, std::filesystem::path>>& reports,
    const std::filesystem::path& out_path) {
    if (reports.empty()) throw InvalidArgument("tradeoff: no reports");
    std::string csv = "label,forget_acc,retain_acc\n";
    for (const auto& [label, path] : reports) {
        EvalReport r = load_report(path);
        const auto forget = r.steered.find("forget");
        const auto retain = r.steered.find("retain");
        if (forget == r.steered.end() || retain == r.steered.end())
            throw SchemaViolation("report missing forget/retain splits: " +
                                  path.string());
        csv += label + "," + detail::csv_num(forget->second.answer_accuracy) +
               "," + detail::csv_num(retain->second.answer_accuracy) + "\n";
    }
    detail::write_text_atomic(out_path, csv);
    return csv;
}

/// Teacher-forced contexts for the first-order check: prompt + reasoning +
/// the answer-field sentinel, predicting the first answer token.
inline std::vector<toy::TheoryItem> theory_items(
    const std::vector<BenchRecord>& records, Split split, const Vocab& vocab,
    const PromptTemplates& templates, const ToyModel& model) {
    std::vector<toy::TheoryItem> items;
    std::size_t index = 0;
    for (const BenchRecord& r : records) {
        if (r.split != split) {
            ++index;
            continue;
        }
        toy::TheoryItem item;
        item.id = r.id;
        item.context = eval_prompt(r, vocab, templates);
        item.prompt_len = model.full_tokens(item.context).size();
        item.context.tokens.push_back(kReasoningId);
        for (std::int32_t t : vocab.encode(r.reasoning))
            item.context.tokens.push_back(t);
        item.context.tokens.push_back(kAnswerId);
        const auto answer_ids = vocab.encode(r.answer);
        if (answer_ids.empty()) {
            ++index;
            continue;
        }
        item.y_true = answer_ids[0];
        const auto [prefix, refusal] = refusal_for(templates, index);
        const auto refusal_ids = vocab.encode(refusal);
        item.y_ref = refusal_ids[0];
        items.push_back(std::move(item));
        ++index;
    }
    return items;
}

struct TheorySummary {
    toy::TheoryCheckReport report;
    std::size_t check_layer = 0;
};

inline TheorySummary cmd_theory_check(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    std::vector<BenchRecord> records = load_dataset(cfg.corpus());
    ToyModel model = toy::load_model(cfg.model());
    ArtifactBundle bundle = load_bundle(cfg);
    PromptTemplates templates = templates_for(cfg);
    Vocab vocab = build_vocab(records, templates);

    SteeringPolicy policy = policy_from_config(cfg);
    const std::size_t check_layer = policy.scoring_layer;

    auto forget = theory_items(records, Split::forget, vocab, templates, model);
    auto retain = theory_items(records, Split::retain, vocab, templates, model);

    // modality-agnostic check: the qa subspace at the check layer drives it
    toy::TheoryArtifacts arts;
    arts.unlearn = &bundle.require(SubspaceKind::unlearn_qa, check_layer);
    arts.rrs_check = &bundle.require(SubspaceKind::retain, check_layer);
    arts.rrs_gate = &bundle.require(SubspaceKind::retain, policy.scoring_layer);

    TheorySummary summary;
    summary.check_layer = check_layer;
    summary.report = toy::run_theory_check(model, arts, policy, forget, retain,
                                           check_layer);

    nlohmann::json j = {
        {"check_layer", check_layer},
        {"forget_total", summary.report.forget_total},
        {"forget_open", summary.report.forget_open},
        {"retain_total", summary.report.retain_total},
        {"retain_open", summary.report.retain_open},
        {"mean_forget_dl", summary.report.mean_forget_dl},
        {"mean_retain_dl", summary.report.mean_retain_dl},
        {"alpha_forget", summary.report.alpha_forget},
        {"epsilon_retain", summary.report.epsilon_retain},
    };
    detail::write_text_atomic(std::filesystem::path(cfg.out_dir) / "theory.json",
                              j.dump(2) + "\n");
    return summary;
}

}  // namespace steerlab::harness
