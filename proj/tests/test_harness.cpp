#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "steerlab/commands.hpp"

using namespace steerlab;
using namespace steerlab::harness;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("steerlab_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

ExperimentConfig mini_config(const fs::path& out) {
    ExperimentConfig cfg;
    cfg.out_dir = out.string();
    cfg.n_profiles = 6;
    cfg.n_celebrity = 2;
    cfg.forget_ratio = 0.10;
    cfg.plant_steps = 1500;
    cfg.workers = 4;
    return cfg;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

/// One planted mini pipeline shared by the heavier tests.
struct PlantedFixture {
    ExperimentConfig cfg;
    std::vector<BenchRecord> records;
    toy::ToyModel model;

    PlantedFixture() : cfg(mini_config(temp_dir("fixture"))), model(make()) {}

    toy::ToyModel make() {
        records = cmd_gen_corpus(cfg);
        return cmd_plant(cfg);
    }

    static PlantedFixture& instance() {
        static PlantedFixture fixture;
        return fixture;
    }
};

}  // namespace

TEST(Dataset, EmptyFileLoadsEmpty) {
    const fs::path dir = temp_dir("empty");
    const fs::path path = dir / "corpus.jsonl";
    std::ofstream(path).close();
    EXPECT_TRUE(load_dataset(path).empty());
}

TEST(Dataset, RoundTripPreservesRecords) {
    CorpusOptions opt;
    opt.n_profiles = 4;
    opt.n_celebrity = 1;
    opt.forget_ratio = 0.10;
    auto records = generate_corpus(opt);
    const fs::path dir = temp_dir("roundtrip");
    save_dataset(dir / "c.jsonl", records);
    auto loaded = load_dataset(dir / "c.jsonl");
    ASSERT_EQ(loaded.size(), records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        EXPECT_EQ(loaded[i].id, records[i].id);
        EXPECT_EQ(loaded[i].question, records[i].question);
        EXPECT_EQ(loaded[i].split, records[i].split);
        if (records[i].image_features)
            EXPECT_EQ(*loaded[i].image_features, *records[i].image_features);
    }
}

TEST(Dataset, VqaWithoutFeaturesRejected) {
    const fs::path dir = temp_dir("badvqa");
    const fs::path path = dir / "c.jsonl";
    std::ofstream(path) << R"({"id":"x","split":"retain","modality":"vqa",)"
                        << R"("question":"q","answer":"a","reasoning":"r",)"
                        << R"("question_type":"generation"})" << "\n";
    EXPECT_THROW(load_dataset(path), SchemaViolation);
}

TEST(Dataset, AttrsOutsideForgetTestRejected) {
    const fs::path dir = temp_dir("badattrs");
    const fs::path path = dir / "c.jsonl";
    std::ofstream(path)
        << R"({"id":"x","split":"retain","modality":"qa","question":"q",)"
        << R"("answer":"a","reasoning":"r","question_type":"generation",)"
        << R"("forgotten_attrs":[{"key":"k","value":"v"}]})" << "\n";
    EXPECT_THROW(load_dataset(path), SchemaViolation);
}

TEST(Dataset, DuplicateIdsRejected) {
    const fs::path dir = temp_dir("dup");
    const fs::path path = dir / "c.jsonl";
    const std::string row =
        R"({"id":"x","split":"retain","modality":"qa","question":"q",)"
        R"("answer":"a","reasoning":"r","question_type":"generation"})";
    std::ofstream(path) << row << "\n" << row << "\n";
    EXPECT_THROW(load_dataset(path), DuplicateId);
}

TEST(Dataset, MalformedLineReportsLineNumber) {
    const fs::path dir = temp_dir("badjson");
    const fs::path path = dir / "c.jsonl";
    std::ofstream(path) << "{not json}\n";
    try {
        load_dataset(path);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
}

TEST(Corpus, DeterministicAndDisjointSplits) {
    CorpusOptions opt;
    opt.n_profiles = 8;
    opt.n_celebrity = 2;
    opt.forget_ratio = 0.10;
    auto a = generate_corpus(opt);
    auto b = generate_corpus(opt);
    ASSERT_EQ(a.size(), b.size());
    std::set<std::string> ids;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].id, b[i].id);
        EXPECT_EQ(a[i].reasoning, b[i].reasoning);
        EXPECT_TRUE(ids.insert(a[i].id).second) << "duplicate id " << a[i].id;
    }
}

TEST(Corpus, ForgetRatioWithinOneRecord) {
    for (double ratio : {0.05, 0.10, 0.15}) {
        CorpusOptions opt;
        opt.n_profiles = 20;
        opt.n_celebrity = 2;
        opt.forget_ratio = ratio;
        auto records = generate_corpus(opt);
        std::size_t base = 0, forget = 0, test = 0;
        for (const auto& r : records) {
            if (r.split == Split::forget) ++forget;
            if (r.split == Split::test) ++test;
            if (r.split != Split::celebrity && r.split != Split::test) ++base;
        }
        const double want = ratio * static_cast<double>(base);
        EXPECT_LE(std::abs(static_cast<double>(forget) - want), 1.0) << ratio;
        EXPECT_EQ(test, forget);  // one paraphrase probe per forget record
    }
}

TEST(Corpus, ForgetRecordsCarryAttrsWithSynonyms) {
    CorpusOptions opt;
    opt.n_profiles = 6;
    opt.n_celebrity = 1;
    opt.forget_ratio = 0.10;
    for (const auto& r : generate_corpus(opt)) {
        if (r.split == Split::forget || r.split == Split::test) {
            ASSERT_EQ(r.forgotten_attrs.size(), 1u) << r.id;
            EXPECT_FALSE(r.forgotten_attrs[0].value.empty());
            EXPECT_FALSE(r.forgotten_attrs[0].synonyms.empty());
        } else {
            EXPECT_TRUE(r.forgotten_attrs.empty());
        }
    }
}

TEST(Corpus, ReasoningLeaksMatchVariantDesign) {
    CorpusOptions opt;
    opt.n_profiles = 12;
    opt.n_celebrity = 0;
    opt.forget_ratio = 0.05;
    metrics::MockJudge judge;
    std::size_t explicit_count = 0, implicit_count = 0;
    for (const auto& r : generate_corpus(opt)) {
        if (r.forgotten_attrs.empty()) continue;
        const auto& attr = r.forgotten_attrs[0];
        if (metrics::explicit_leak(r.reasoning, attr))
            ++explicit_count;
        else if (metrics::implicit_leak(r.reasoning, attr, judge))
            ++implicit_count;
        else
            FAIL() << r.id << " reasoning leaks neither way: " << r.reasoning;
    }
    EXPECT_GT(explicit_count, 0u);
    EXPECT_GT(implicit_count, 0u);
}

TEST(Config, FileParseOverridesAndUnknownKey) {
    const fs::path dir = temp_dir("config");
    const fs::path path = dir / "exp.cfg";
    std::ofstream(path) << "# comment\nseed=7\ntau=0.7\nmode=additive\n"
                        << "view=cot_only\nuse_rrs=false\n";
    ExperimentConfig cfg = load_config_file(path);
    EXPECT_EQ(cfg.seed, 7u);
    EXPECT_DOUBLE_EQ(cfg.tau, 0.7);
    EXPECT_EQ(cfg.mode, SteerMode::additive);
    EXPECT_EQ(cfg.view, SpanView::cot_only);
    EXPECT_FALSE(cfg.use_rrs);

    std::ofstream(path) << "bogus_key=1\n";
    EXPECT_THROW(load_config_file(path), ConfigError);
}

TEST(Config, SeedEnvOverride) {
    ExperimentConfig cfg;
    cfg.seed = 1;
    setenv("STEERLAB_SEED", "99", 1);
    apply_seed_env(cfg);
    unsetenv("STEERLAB_SEED");
    EXPECT_EQ(cfg.seed, 99u);
}

TEST(Config, AutoLayersAreMiddleToLateThird) {
    ExperimentConfig cfg;
    cfg.n_layers = 6;
    auto layers = resolve_steering_layers(cfg);
    EXPECT_EQ(layers, (std::vector<std::size_t>{3, 4}));
    EXPECT_EQ(resolve_scoring_layer(cfg, layers), 4u);
    cfg.steering_layers = "2,3,4";
    EXPECT_EQ(resolve_steering_layers(cfg), (std::vector<std::size_t>{2, 3, 4}));
}

TEST(Report, JsonRoundTrip) {
    EvalReport r;
    r.config_hash = "abc";
    r.mode = "acs";
    r.tau = 0.85;
    SplitMetrics m;
    m.count = 10;
    m.answer_accuracy = 0.5;
    m.ril = 0.375;
    m.rcr = 2.0 / 3.0;
    r.vanilla["forget"] = m;
    r.steered["forget"] = m;
    const fs::path dir = temp_dir("report");
    save_report(dir / "r.json", r);
    EvalReport back = load_report(dir / "r.json");
    EXPECT_EQ(back.config_hash, "abc");
    EXPECT_DOUBLE_EQ(back.vanilla["forget"].ril, 0.375);
    EXPECT_DOUBLE_EQ(back.steered["forget"].rcr, m.rcr);
    EXPECT_EQ(back.vanilla["forget"].count, 10u);
}

TEST(Pipeline, BuildProducesArtifactsForAllLayersAndKinds) {
    auto& fx = PlantedFixture::instance();
    ArtifactBundle bundle = cmd_build(fx.cfg);
    const auto layers = resolve_steering_layers(fx.cfg);
    for (std::size_t layer : layers) {
        EXPECT_NE(bundle.find(SubspaceKind::unlearn_qa, layer), nullptr);
        EXPECT_NE(bundle.find(SubspaceKind::unlearn_vqa, layer), nullptr);
        EXPECT_NE(bundle.find(SubspaceKind::retain, layer), nullptr);
        EXPECT_NO_THROW(bundle.prototypes_at(layer));
    }
    // energy rule vs brute force on every artifact
    for (const auto& art : bundle.artifacts) {
        double total = 0.0;
        for (double s : art.spectrum) total += s * s;
        double acc = 0.0;
        std::size_t expect = art.spectrum.size();
        for (std::size_t k = 0; k < art.spectrum.size(); ++k) {
            acc += art.spectrum[k] * art.spectrum[k];
            if (acc / total >= art.eta) {
                expect = k + 1;
                break;
            }
        }
        EXPECT_EQ(art.rank, expect);
    }
}

TEST(Pipeline, BuildIsByteDeterministic) {
    auto& fx = PlantedFixture::instance();
    ExperimentConfig a = fx.cfg;
    a.artifacts_path = (fs::path(fx.cfg.out_dir) / "arts_a.bin").string();
    ExperimentConfig b = fx.cfg;
    b.artifacts_path = (fs::path(fx.cfg.out_dir) / "arts_b.bin").string();
    cmd_build(a);
    cmd_build(b);
    EXPECT_EQ(read_file(a.artifacts()), read_file(b.artifacts()));
}

TEST(Pipeline, ModeOffIsVanillaIdentity) {
    auto& fx = PlantedFixture::instance();
    cmd_build(fx.cfg);
    ExperimentConfig cfg = fx.cfg;
    cfg.mode = SteerMode::off;
    auto records = load_dataset(cfg.corpus());
    auto model = toy::load_model(cfg.model());
    auto bundle = load_bundle(cfg);
    auto runs = run_records(model, records, bundle, cfg);
    for (const auto& run : runs) {
        EXPECT_EQ(run.forced_answer, run.vanilla_answer);
        EXPECT_EQ(run.forced_reasoning, run.vanilla_reasoning);
    }
    EvalReport report = evaluate(model, records, bundle, cfg);
    for (const auto& [split, m] : report.vanilla) {
        EXPECT_DOUBLE_EQ(m.answer_accuracy,
                         report.steered.at(split).answer_accuracy);
        EXPECT_DOUBLE_EQ(m.ril, report.steered.at(split).ril);
    }
}

TEST(Pipeline, ClosedGateReproducesVanillaBytes) {
    auto& fx = PlantedFixture::instance();
    cmd_build(fx.cfg);
    ExperimentConfig cfg = fx.cfg;
    cfg.tau = 1e-9;  // gate never opens
    auto records = load_dataset(cfg.corpus());
    auto model = toy::load_model(cfg.model());
    auto bundle = load_bundle(cfg);
    auto judge = make_judge(cfg);
    auto runs = run_records(model, records, bundle, cfg);
    auto scored = score_records(runs, cfg.tau, true, *judge);
    auto vanilla = score_records(runs, cfg.tau, false, *judge);
    for (const auto& [split, m] : scored)
        EXPECT_DOUBLE_EQ(m.answer_accuracy, vanilla.at(split).answer_accuracy);
}

TEST(Pipeline, GateOpenFractionMonotoneInTau) {
    auto& fx = PlantedFixture::instance();
    cmd_build(fx.cfg);
    auto records = load_dataset(fx.cfg.corpus());
    auto model = toy::load_model(fx.cfg.model());
    auto bundle = load_bundle(fx.cfg);
    auto judge = make_judge(fx.cfg);
    auto runs = run_records(model, records, bundle, fx.cfg);
    double prev = -1.0;
    for (double tau : default_tau_grid()) {
        auto scored = score_records(runs, tau, true, *judge);
        double total_open = 0.0, total = 0.0;
        for (const auto& [split, m] : scored) {
            total_open += m.gate_open_fraction * static_cast<double>(m.count);
            total += static_cast<double>(m.count);
        }
        const double fraction = total_open / total;
        EXPECT_GE(fraction, prev);
        prev = fraction;
    }
}

TEST(Pipeline, SweepCsvShapeAndNeverSteerRowsEqualVanilla) {
    auto& fx = PlantedFixture::instance();
    cmd_build(fx.cfg);
    std::string csv = cmd_sweep_tau(fx.cfg, {1e-9, 0.85});
    EXPECT_EQ(csv.rfind("tau,split,metric,value\n", 0), 0u);
    // 2 taus x 4 splits x 7 metrics + header
    std::size_t lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    EXPECT_EQ(lines, 1u + 2u * 4u * 7u);

    auto records = load_dataset(fx.cfg.corpus());
    auto model = toy::load_model(fx.cfg.model());
    auto bundle = load_bundle(fx.cfg);
    auto judge = make_judge(fx.cfg);
    auto runs = run_records(model, records, bundle, fx.cfg);
    auto never = score_records(runs, 1e-9, true, *judge);
    auto vanilla = score_records(runs, 1e-9, false, *judge);
    for (const auto& [split, m] : never)
        EXPECT_DOUBLE_EQ(m.answer_accuracy, vanilla.at(split).answer_accuracy);
}

TEST(Pipeline, PcaExportHasFourGroups) {
    auto& fx = PlantedFixture::instance();
    cmd_build(fx.cfg);
    const auto layers = resolve_steering_layers(fx.cfg);
    std::string csv = cmd_export_pca(fx.cfg, layers.back());
    std::set<std::string> groups;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);  // header
    EXPECT_EQ(line, "group,pc1,pc2");
    while (std::getline(in, line)) {
        groups.insert(line.substr(0, line.find(',')));
    }
    EXPECT_EQ(groups, (std::set<std::string>{"forget_steered", "forget_vanilla",
                                             "retain_steered", "retain_vanilla"}));
}

TEST(Pipeline, TradeoffRowsMatchReports) {
    auto& fx = PlantedFixture::instance();
    cmd_build(fx.cfg);
    ExperimentConfig cfg = fx.cfg;
    cfg.report_path = (fs::path(fx.cfg.out_dir) / "r1.json").string();
    cmd_eval(cfg);
    ExperimentConfig off = cfg;
    off.mode = SteerMode::off;
    off.report_path = (fs::path(fx.cfg.out_dir) / "r2.json").string();
    cmd_eval(off);
    const fs::path out = fs::path(fx.cfg.out_dir) / "tradeoff.csv";
    std::string csv = cmd_tradeoff(
        {{"steered", cfg.report()}, {"vanilla", off.report()}}, out);
    std::size_t lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    EXPECT_EQ(lines, 3u);  // header + 2 rows
    EXPECT_NE(csv.find("vanilla,"), std::string::npos);
}

TEST(Pipeline, EvalIsByteDeterministic) {
    auto& fx = PlantedFixture::instance();
    cmd_build(fx.cfg);
    ExperimentConfig a = fx.cfg;
    a.report_path = (fs::path(fx.cfg.out_dir) / "det_a.json").string();
    ExperimentConfig b = fx.cfg;
    b.report_path = (fs::path(fx.cfg.out_dir) / "det_b.json").string();
    b.workers = 3;  // worker count must not affect bytes
    cmd_eval(a);
    cmd_eval(b);
    EXPECT_EQ(read_file(a.report()), read_file(b.report()));
}

TEST(Pipeline, InterventionLogHasExpectedShape) {
    auto& fx = PlantedFixture::instance();
    cmd_build(fx.cfg);
    ExperimentConfig cfg = fx.cfg;
    cfg.log_path = (fs::path(fx.cfg.out_dir) / "log.csv").string();
    cmd_eval(cfg);
    std::ifstream f(cfg.log_path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(f, line)) {
        ++lines;
        // query_id,step,layer,s_gate,theta_dir,theta_tar,lambda,applied
        std::size_t commas = 0;
        for (char c : line)
            if (c == ',') ++commas;
        EXPECT_EQ(commas, 7u) << line;
    }
    EXPECT_GT(lines, 0u);
}
