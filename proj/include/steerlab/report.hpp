#pragma once

#include <fstream>
#include <iomanip>

#include "steerlab/experiment.hpp"

namespace steerlab::harness {

struct SplitMetrics {
    std::size_t count = 0;
    std::size_t mc_count = 0, cloze_count = 0, generation_count = 0, ril_count = 0;
    double answer_accuracy = 0.0;
    double mc_accuracy = 0.0;
    double cloze_accuracy = 0.0;
    double rouge_l = 0.0;
    double ril = 0.0;
    double rcr = 0.0;
    double gate_open_fraction = 0.0;
};

struct EvalReport {
    std::string config_hash;
    std::string corpus_hash;
    std::string model_hash;
    std::string artifacts_hash;
    std::string mode;
    double tau = 0.0;
    std::map<std::string, SplitMetrics> vanilla;
    std::map<std::string, SplitMetrics> steered;
};

namespace detail {

inline nlohmann::json metrics_to_json(const SplitMetrics& m) {
    return {{"count", m.count},
            {"mc_count", m.mc_count},
            {"cloze_count", m.cloze_count},
            {"generation_count", m.generation_count},
            {"ril_count", m.ril_count},
            {"answer_accuracy", m.answer_accuracy},
            {"mc_accuracy", m.mc_accuracy},
            {"cloze_accuracy", m.cloze_accuracy},
            {"rouge_l", m.rouge_l},
            {"ril", m.ril},
            {"rcr", m.rcr},
            {"gate_open_fraction", m.gate_open_fraction}};
}

inline SplitMetrics metrics_from_json(const nlohmann::json& j) {
    SplitMetrics m;
    m.count = j.value("count", std::size_t{0});
    m.mc_count = j.value("mc_count", std::size_t{0});
    m.cloze_count = j.value("cloze_count", std::size_t{0});
    m.generation_count = j.value("generation_count", std::size_t{0});
    m.ril_count = j.value("ril_count", std::size_t{0});
    m.answer_accuracy = j.value("answer_accuracy", 0.0);
    m.mc_accuracy = j.value("mc_accuracy", 0.0);
    m.cloze_accuracy = j.value("cloze_accuracy", 0.0);
    m.rouge_l = j.value("rouge_l", 0.0);
    m.ril = j.value("ril", 0.0);
    m.rcr = j.value("rcr", 0.0);
    m.gate_open_fraction = j.value("gate_open_fraction", 0.0);
    return m;
}

}  // namespace detail

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["config_hash"] = r.config_hash;
    j["corpus_hash"] = r.corpus_hash;
    j["model_hash"] = r.model_hash;
    j["artifacts_hash"] = r.artifacts_hash;
    j["mode"] = r.mode;
    j["tau"] = r.tau;
    for (const auto& [split, m] : r.vanilla)
        j["vanilla"][split] = detail::metrics_to_json(m);
    for (const auto& [split, m] : r.steered)
        j["steered"][split] = detail::metrics_to_json(m);
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.config_hash = j.value("config_hash", "");
    r.corpus_hash = j.value("corpus_hash", "");
    r.model_hash = j.value("model_hash", "");
    r.artifacts_hash = j.value("artifacts_hash", "");
    r.mode = j.value("mode", "");
    r.tau = j.value("tau", 0.0);
    if (j.contains("vanilla"))
        for (const auto& [split, m] : j["vanilla"].items())
            r.vanilla[split] = detail::metrics_from_json(m);
    if (j.contains("steered"))
        for (const auto& [split, m] : j["steered"].items())
            r.steered[split] = detail::metrics_from_json(m);
    return r;
}

inline void save_report(const std::filesystem::path& path, const EvalReport& r) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw IoError("cannot open for write: " + tmp.string());
        f << report_to_json(r).dump(2) << '\n';
        if (!f) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + path.string());
}

inline EvalReport load_report(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open report: " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
    return report_from_json(j);
}

inline std::string file_hash(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot hash: " + path.string());
    std::stringstream buf;
    buf << f.rdbuf();
    const std::string s = buf.str();
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(s.data(), s.size())));
    return std::string(hex);
}

inline std::string string_hash(const std::string& s) {
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(s.data(), s.size())));
    return std::string(hex);
}

// ---------------------------------------------------------------------------
// per-record evaluation runs
// ---------------------------------------------------------------------------

/// One record's generations: the vanilla output and the output with steering
/// forced on. The gate cut is applied at scoring time, which lets threshold
/// sweeps reuse the same generations for every tau.
struct RecordRun {
    const BenchRecord* record = nullptr;
    double gate_score = 0.0;
    bool has_gate = false;  // false when RRS is disabled (always steer)
    std::string vanilla_answer, vanilla_reasoning;
    std::string forced_answer, forced_reasoning;
    std::vector<steer::InterventionRecord> log;
};

namespace detail {

struct ParsedTexts {
    std::string answer, reasoning;
};

inline ParsedTexts parse_generation(const toy::Generation& gen,
                                    std::size_t prompt_len, const Vocab& vocab) {
    SpanAnnotation spans = toy::parse_structured(gen.response, prompt_len);
    ParsedTexts out;
    auto detok = [&](const TokenRange& range) {
        std::vector<std::int32_t> ids;
        for (std::size_t t = range.begin; t < range.end; ++t)
            ids.push_back(gen.response[t - prompt_len]);
        return vocab.decode(ids);
    };
    if (!spans.answer.empty()) out.answer = detok(spans.answer);
    if (!spans.reasoning.empty()) out.reasoning = detok(spans.reasoning);
    return out;
}

}  // namespace detail

inline std::vector<RecordRun> run_records(const ToyModel& model,
                                          const std::vector<BenchRecord>& records,
                                          const ArtifactBundle& bundle,
                                          const ExperimentConfig& cfg) {
    PromptTemplates templates = cfg.templates_path.empty()
                                    ? PromptTemplates::defaults()
                                    : PromptTemplates::load(cfg.templates_path);
    Vocab vocab = build_vocab(records, templates);

    SteeringPolicy policy = policy_from_config(cfg);
    // force the gate open; the tau cut happens in score_records
    SteeringPolicy forced = policy;
    forced.tau = 1.0;

    std::optional<SteerRunner> runner;
    if (cfg.mode != SteerMode::off) runner.emplace(model, bundle, forced);

    std::vector<RecordRun> runs(records.size());
    parallel_for(records.size(), cfg.workers, [&](std::size_t i) {
        const BenchRecord& r = records[i];
        RecordRun& run = runs[i];
        run.record = &r;
        InputSequence prompt = eval_prompt(r, vocab, templates);
        const std::size_t prompt_len = model.full_tokens(prompt).size();

        toy::Generation vanilla = toy::generate_raw(model, prompt, cfg.max_len);
        auto vtexts = detail::parse_generation(vanilla, prompt_len, vocab);
        run.vanilla_answer = vtexts.answer;
        run.vanilla_reasoning = vtexts.reasoning;

        if (cfg.mode == SteerMode::off) {
            run.forced_answer = run.vanilla_answer;
            run.forced_reasoning = run.vanilla_reasoning;
            return;
        }
        SessionResult session = runner->run(r, vocab, templates, cfg.max_len);
        run.gate_score = session.gate.score;
        run.has_gate = cfg.use_rrs;
        auto stexts = detail::parse_generation(session.generation, prompt_len, vocab);
        run.forced_answer = stexts.answer;
        run.forced_reasoning = stexts.reasoning;
        run.log = std::move(session.log);
    });
    return runs;
}

inline bool gate_open_at(const RecordRun& run, double tau) {
    return !run.has_gate || run.gate_score < tau;
}

/// Score one arm (vanilla or gated-steered) of the evaluation.
inline std::map<std::string, SplitMetrics> score_records(
    const std::vector<RecordRun>& runs, double tau, bool steered_arm,
    metrics::Judge& judge) {
    std::map<std::string, std::vector<const RecordRun*>> by_split;
    for (const RecordRun& run : runs)
        by_split[to_string(run.record->split)].push_back(&run);

    std::map<std::string, SplitMetrics> out;
    for (const auto& [split, members] : by_split) {
        SplitMetrics m;
        m.count = members.size();
        std::size_t answer_hits = 0, mc_hits = 0, cloze_hits = 0, gate_open = 0;
        double rouge_sum = 0.0;
        std::vector<metrics::RilSample> ril_samples;
        std::vector<metrics::RcrSample> rcr_samples;
        for (const RecordRun* run : members) {
            const BenchRecord& r = *run->record;
            const bool open = gate_open_at(*run, tau);
            if (open) ++gate_open;
            const bool use_forced = steered_arm && open;
            const std::string& answer =
                use_forced ? run->forced_answer : run->vanilla_answer;
            const std::string& reasoning =
                use_forced ? run->forced_reasoning : run->vanilla_reasoning;

            const bool answer_match =
                metrics::normalize_answer(answer) == metrics::normalize_answer(r.answer);
            if (answer_match) ++answer_hits;
            switch (r.question_type) {
                case QuestionType::multiple_choice: {
                    ++m.mc_count;
                    // letters are positions in the option list
                    std::size_t predicted = r.options.size();
                    for (std::size_t o = 0; o < r.options.size(); ++o) {
                        if (metrics::normalize_answer(r.options[o]) ==
                            metrics::normalize_answer(answer)) {
                            predicted = o;
                            break;
                        }
                    }
                    std::size_t truth = 0;
                    for (std::size_t o = 0; o < r.options.size(); ++o)
                        if (metrics::normalize_answer(r.options[o]) ==
                            metrics::normalize_answer(r.answer))
                            truth = o;
                    if (predicted == truth) ++mc_hits;
                    break;
                }
                case QuestionType::cloze:
                    ++m.cloze_count;
                    if (answer_match) ++cloze_hits;
                    break;
                case QuestionType::generation:
                    ++m.generation_count;
                    rouge_sum += metrics::rouge_l(r.answer, answer);
                    break;
            }
            if (!r.forgotten_attrs.empty())
                ril_samples.push_back({reasoning, r.forgotten_attrs});
            metrics::RcrSample rcr_sample;
            rcr_sample.profile = r.profile_text;
            rcr_sample.regions = r.image_features ? "image evidence present" : "";
            rcr_sample.question = r.question;
            rcr_sample.cot = reasoning;
            rcr_sample.answer = answer;
            rcr_samples.push_back(std::move(rcr_sample));
        }
        m.answer_accuracy =
            static_cast<double>(answer_hits) / static_cast<double>(m.count);
        m.mc_accuracy = m.mc_count
                            ? static_cast<double>(mc_hits) / static_cast<double>(m.mc_count)
                            : 0.0;
        m.cloze_accuracy =
            m.cloze_count
                ? static_cast<double>(cloze_hits) / static_cast<double>(m.cloze_count)
                : 0.0;
        m.rouge_l = m.generation_count
                        ? rouge_sum / static_cast<double>(m.generation_count)
                        : 0.0;
        m.ril_count = ril_samples.size();
        m.ril = ril_samples.empty() ? 0.0 : metrics::ril(ril_samples, judge).score;
        m.rcr = metrics::rcr(rcr_samples, judge).score;
        m.gate_open_fraction =
            static_cast<double>(gate_open) / static_cast<double>(m.count);
        out[split] = m;
    }
    return out;
}

inline std::unique_ptr<metrics::Judge> make_judge(const ExperimentConfig& cfg) {
    if (cfg.judge == "mock") return std::make_unique<metrics::MockJudge>();
    const std::string prefix = "subprocess:";
    if (cfg.judge.rfind(prefix, 0) == 0)
        return std::make_unique<metrics::SubprocessJudge>(cfg.judge.substr(prefix.size()));
    throw ConfigError("judge: expected 'mock' or 'subprocess:<command>'");
}

inline EvalReport evaluate(const ToyModel& model,
                           const std::vector<BenchRecord>& records,
                           const ArtifactBundle& bundle,
                           const ExperimentConfig& cfg) {
    std::vector<RecordRun> runs = run_records(model, records, bundle, cfg);
    auto judge = make_judge(cfg);
    EvalReport report;
    report.mode = steer::to_string(cfg.mode);
    report.tau = cfg.tau;
    report.config_hash = string_hash(cfg.canonical());
    report.vanilla = score_records(runs, cfg.tau, false, *judge);
    report.steered = score_records(runs, cfg.tau, true, *judge);
    return report;
}

/// Line-delimited intervention log for records whose gate is open at tau.
inline void write_intervention_log(const std::filesystem::path& path,
                                   const std::vector<RecordRun>& runs, double tau) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open log: " + path.string());
    auto fmt = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        return std::string(buf);
    };
    for (const RecordRun& run : runs) {
        if (!gate_open_at(run, tau)) continue;
        for (const auto& rec : run.log) {
            f << rec.query_id << ',' << rec.step << ',' << rec.layer << ','
              << fmt(run.gate_score) << ',' << fmt(rec.theta_dir) << ','
              << fmt(rec.theta_tar) << ',' << fmt(rec.lambda) << ','
              << (rec.applied ? 1 : 0) << '\n';
        }
    }
}

}  // namespace steerlab::harness
