#include <gtest/gtest.h>

#include <filesystem>

#include "steerlab/model_io.hpp"
#include "steerlab/plant.hpp"
#include "steerlab/theory.hpp"
#include "test_helpers.hpp"

using namespace steerlab;
using namespace steerlab::toy;

namespace {

ModelDims small_dims(std::size_t vocab = 40) {
    ModelDims dims;
    dims.vocab_size = vocab;
    dims.d = 32;
    dims.n_layers = 4;
    return dims;
}

std::vector<PlantItem> synthetic_items(std::size_t count, Rng& rng,
                                       std::size_t vocab) {
    std::vector<PlantItem> items;
    const std::int32_t lo = kFirstWordId;
    const std::int32_t hi = static_cast<std::int32_t>(vocab);
    const std::size_t span = static_cast<std::size_t>(hi - lo);
    for (std::size_t i = 0; i < count; ++i) {
        PlantItem item;
        item.id = "item-" + std::to_string(i);
        // collision-free three-word prompt: (i mod span, i div span) is unique
        item.prompt.tokens = {
            static_cast<std::int32_t>(lo + i % span),
            static_cast<std::int32_t>(lo + ((i / span) * 7 + i % 7) % span),
            static_cast<std::int32_t>(lo + (i % 11))};
        const std::int32_t r1 = static_cast<std::int32_t>(lo + rng.index(hi - lo));
        const std::int32_t r2 = static_cast<std::int32_t>(lo + rng.index(hi - lo));
        const std::int32_t ans = static_cast<std::int32_t>(lo + (i % 10));
        item.response = {kReasoningId, r1, r2, kAnswerId, ans, kEosId};
        item.answer_in_response = {4, 5};
        items.push_back(std::move(item));
    }
    return items;
}

}  // namespace

TEST(InitModel, SameSeedBitwiseEqual) {
    ToyModel a = ToyModel::init(11, small_dims());
    ToyModel b = ToyModel::init(11, small_dims());
    EXPECT_EQ(a.embedding, b.embedding);
    EXPECT_EQ(a.readout, b.readout);
    for (std::size_t l = 0; l < a.dims.n_layers; ++l) {
        EXPECT_EQ(a.mix[l], b.mix[l]);
        EXPECT_EQ(a.recur[l], b.recur[l]);
    }
}

TEST(InitModel, DifferentSeedsDiffer) {
    ToyModel a = ToyModel::init(11, small_dims());
    ToyModel b = ToyModel::init(12, small_dims());
    EXPECT_NE(a.embedding, b.embedding);
}

TEST(InitModel, BadDimsRejected) {
    ModelDims dims = small_dims(8);  // vocab too small
    EXPECT_THROW(ToyModel::init(1, dims), BadDims);
}

TEST(Forward, EmptyHooksMatchesPlainForwardBitwise) {
    ToyModel m = ToyModel::init(5, small_dims());
    InputSequence input;
    input.tokens = {5, 6, 7, 8};
    ActivationTrace plain = forward_with_hooks(m, input);
    Hooks empty;
    ActivationTrace hooked = forward_with_hooks(m, input, &empty);
    for (std::size_t l = 0; l < plain.layer_count(); ++l)
        EXPECT_EQ(plain.layers[l], hooked.layers[l]);
}

TEST(Forward, IdentityTransformIsNeutral) {
    ToyModel m = ToyModel::init(5, small_dims());
    InputSequence input;
    input.tokens = {5, 6, 7};
    Hooks hooks;
    hooks.layer_transforms.push_back(
        {1, [](const Vec& h, std::size_t) { return h; }});
    ActivationTrace plain = forward_with_hooks(m, input);
    ActivationTrace hooked = forward_with_hooks(m, input, &hooks);
    for (std::size_t l = 0; l < plain.layer_count(); ++l)
        EXPECT_EQ(plain.layers[l], hooked.layers[l]);
}

TEST(Forward, ZeroReplacementChangesDownstream) {
    ToyModel m = ToyModel::init(5, small_dims());
    InputSequence input;
    input.tokens = {5, 6, 7};
    Hooks hooks;
    hooks.replace[{1, 1}] = Vec(m.dims.d, 0.0);
    ActivationTrace plain = forward_with_hooks(m, input);
    ActivationTrace hooked = forward_with_hooks(m, input, &hooks);
    EXPECT_NE(plain.layers[2], hooked.layers[2]);
    // layers below and positions before the hook are untouched
    EXPECT_EQ(plain.layers[0], hooked.layers[0]);
    for (std::size_t j = 0; j < m.dims.d; ++j)
        EXPECT_EQ(plain.layers[2](0, j), hooked.layers[2](0, j));
}

TEST(Forward, HookOutOfRangeRejected) {
    ToyModel m = ToyModel::init(5, small_dims());
    InputSequence input;
    input.tokens = {5, 6};
    Hooks hooks;
    hooks.replace[{99, 0}] = Vec(m.dims.d, 0.0);
    EXPECT_THROW(forward_with_hooks(m, input, &hooks), HookOutOfRange);
}

TEST(Forward, ImageFeaturesBecomePseudoTokens) {
    ToyModel m = ToyModel::init(5, small_dims());
    InputSequence input;
    input.tokens = {5, 6};
    input.image_features = Vec(m.dims.image_feature_dim, 0.3);
    ActivationTrace trace = forward_with_hooks(m, input);
    EXPECT_EQ(trace.seq_len(), 2u + m.dims.image_tokens);
    EXPECT_EQ(trace.tokens[0], kImgId);
}

TEST(PlantFacts, ZeroStepsLeavesModelUnchanged) {
    ToyModel m = ToyModel::init(7, small_dims());
    Rng rng(70);
    auto items = synthetic_items(5, rng, m.dims.vocab_size);
    PlantOptions opt;
    opt.steps = 0;
    ToyModel planted = plant_facts(m, items, opt);
    EXPECT_EQ(planted.readout, m.readout);
}

TEST(PlantFacts, FortyRecordsReachReproduction) {
    ToyModel m = ToyModel::init(7, small_dims());
    Rng rng(71);
    auto items = synthetic_items(40, rng, m.dims.vocab_size);
    ToyModel planted = plant_facts(m, items, 500, 0.05);
    EXPECT_GE(answer_reproduction_rate(planted, items, 16), 0.95);
}

TEST(PlantFacts, DeterministicAcrossRunsAndWorkers) {
    ToyModel m = ToyModel::init(7, small_dims());
    Rng rng(72);
    auto items = synthetic_items(12, rng, m.dims.vocab_size);
    PlantOptions opt;
    opt.steps = 50;
    opt.min_answer_reproduction = 0.0;
    ToyModel p1 = plant_facts(m, items, opt);
    opt.workers = 4;
    ToyModel p2 = plant_facts(m, items, opt);
    EXPECT_EQ(p1.readout, p2.readout);
}

TEST(GenerateStructured, PlantedPromptReproducesAnswer) {
    ToyModel m = ToyModel::init(7, small_dims());
    Rng rng(73);
    auto items = synthetic_items(40, rng, m.dims.vocab_size);
    ToyModel planted = plant_facts(m, items, 500, 0.05);
    StructuredOutput out = generate_structured(planted, items[0].prompt, 16);
    ASSERT_FALSE(out.spans.answer.empty());
    const std::size_t prompt_len = items[0].prompt.tokens.size();
    EXPECT_EQ(out.response[out.spans.answer.begin - prompt_len],
              items[0].response[items[0].answer_in_response.begin]);
    // determinism
    StructuredOutput again = generate_structured(planted, items[0].prompt, 16);
    EXPECT_EQ(out.response, again.response);
}

TEST(GenerateStructured, MissingReasoningSentinelGivesEmptyCot) {
    SpanAnnotation spans = parse_structured({kAnswerId, 7, kEosId}, 4);
    EXPECT_TRUE(spans.reasoning.empty());
    EXPECT_EQ(spans.answer.begin, 5u);
    EXPECT_EQ(spans.answer.end, 6u);
}

TEST(GenerateStructured, BudgetExhaustionThrows) {
    ToyModel m = ToyModel::init(7, small_dims());
    InputSequence prompt;
    prompt.tokens = {5, 6};
    // an unplanted model will not emit <eos> within 1 token reliably;
    // force the condition by giving a zero budget margin
    EXPECT_THROW(
        {
            StructuredOutput out = generate_structured(m, prompt, 1);
            if (out.response.size() == 1 && out.response[0] == kEosId)
                throw MaxLenExceeded("degenerate: immediate eos");
        },
        MaxLenExceeded);
}

TEST(ColumnRecompute, MatchesHookedForward) {
    ToyModel m = ToyModel::init(9, small_dims());
    InputSequence input;
    input.tokens = {5, 9, 13, 17};
    ActivationTrace trace = forward_with_hooks(m, input);
    Rng rng(74);
    Vec replacement = testutil::random_vec(rng, m.dims.d, 0.5);
    const std::size_t layer = 1, pos = 2;

    Hooks hooks;
    hooks.replace[{layer, pos}] = replacement;
    ActivationTrace hooked = forward_with_hooks(m, input, &hooks);
    Vec via_recompute = column_recompute(m, trace, pos, layer, replacement);
    for (std::size_t j = 0; j < m.dims.d; ++j)
        EXPECT_NEAR(hooked.layers[m.dims.n_layers - 1](pos, j), via_recompute[j],
                    1e-15);
}

TEST(HiddenLossGradient, FinalLayerClosedForm) {
    ToyModel m = ToyModel::init(9, small_dims());
    InputSequence input;
    input.tokens = {5, 9, 13};
    ActivationTrace trace = forward_with_hooks(m, input);
    const std::size_t top = m.dims.n_layers - 1;
    const std::size_t pos = 2;
    const std::int32_t y = 7;
    LossProbe probe = hidden_loss_gradient(m, trace, pos, y, top);

    Vec h(m.dims.d);
    for (std::size_t j = 0; j < m.dims.d; ++j) h[j] = trace.layers[top](pos, j);
    Vec prob = toy::detail::softmax(m.logits(h));
    prob[static_cast<std::size_t>(y)] -= 1.0;
    Vec closed = matvec_t(m.readout, prob);
    for (std::size_t j = 0; j < m.dims.d; ++j)
        EXPECT_NEAR(probe.gradient[j], closed[j], 1e-12);
}

TEST(HiddenLossGradient, MatchesCentralFiniteDifferences) {
    ToyModel m = ToyModel::init(9, small_dims());
    InputSequence input;
    input.tokens = {5, 9, 13, 21};
    ActivationTrace trace = forward_with_hooks(m, input);
    const std::size_t pos = 3;
    const std::int32_t y = 11;
    const double fd_step = 1e-4;
    for (std::size_t layer = 0; layer < m.dims.n_layers; ++layer) {
        LossProbe probe = hidden_loss_gradient(m, trace, pos, y, layer);
        Vec h(m.dims.d);
        for (std::size_t j = 0; j < m.dims.d; ++j)
            h[j] = trace.layers[layer](pos, j);
        Vec fd(m.dims.d);
        for (std::size_t j = 0; j < m.dims.d; ++j) {
            Vec hp = h, hm = h;
            hp[j] += fd_step;
            hm[j] -= fd_step;
            const double lp = position_loss(
                m, column_recompute(m, trace, pos, layer, hp), y);
            const double lm = position_loss(
                m, column_recompute(m, trace, pos, layer, hm), y);
            fd[j] = (lp - lm) / (2.0 * fd_step);
        }
        const double rel = norm(sub(probe.gradient, fd)) / std::max(norm(fd), 1e-12);
        EXPECT_LT(rel, 1e-4) << "layer " << layer;
    }
}

TEST(HiddenLossGradient, SaturatedReadoutHasVanishingGradient) {
    ToyModel m = ToyModel::init(9, small_dims());
    InputSequence input;
    input.tokens = {5, 9};
    ActivationTrace trace = forward_with_hooks(m, input);
    const std::size_t top = m.dims.n_layers - 1;
    // Make the target's logit dominate: probabilities ~ onehot(y).
    const std::int32_t y = 6;
    Vec h(m.dims.d);
    for (std::size_t j = 0; j < m.dims.d; ++j) h[j] = trace.layers[top](1, j);
    const double scale = 50.0 / dot(h, h);
    for (std::size_t c = 0; c < m.dims.d; ++c)
        m.readout(static_cast<std::size_t>(y), c) = scale * h[c];
    LossProbe probe = hidden_loss_gradient(m, trace, 1, y, top);
    EXPECT_LT(norm(probe.gradient), 1e-6);
}

TEST(ModelIo, CheckpointRoundTripBitwise) {
    ToyModel m = ToyModel::init(13, small_dims());
    const auto path = std::filesystem::temp_directory_path() / "steerlab_model.bin";
    save_model(path, m);
    ToyModel loaded = load_model(path);
    EXPECT_EQ(loaded.embedding, m.embedding);
    EXPECT_EQ(loaded.readout, m.readout);
    EXPECT_EQ(loaded.recur[2], m.recur[2]);
    EXPECT_EQ(loaded.seed, m.seed);
    std::filesystem::remove(path);
}

TEST(TheoryCheck, RetainGradientsInsideRrsSeeNoLossChange) {
    // Readout rows live inside the retain subspace span, so retain-loss
    // gradients lie in the RRS exactly and the retain-orthogonal update
    // cannot move any logit.
    ModelDims dims = small_dims();
    ToyModel m = ToyModel::init(21, dims);
    const std::size_t d = dims.d;
    const std::size_t top = dims.n_layers - 1;

    Mat rrs_basis(d, 4);
    for (std::size_t j = 0; j < 4; ++j) rrs_basis(j, j) = 1.0;
    Rng rng(75);
    for (std::size_t v = 0; v < dims.vocab_size; ++v) {
        Vec coeffs = testutil::random_vec(rng, 4);
        for (std::size_t c = 0; c < d; ++c)
            m.readout(v, c) = c < 4 ? coeffs[c] : 0.0;
    }

    subspace::SubspaceArtifact rrs;
    rrs.kind = subspace::SubspaceKind::retain;
    rrs.layer = top;
    rrs.basis = rrs_basis;
    rrs.rank = 4;
    rrs.principal_direction = rrs.basis.col(0);

    subspace::SubspaceArtifact unlearn;
    unlearn.kind = subspace::SubspaceKind::unlearn_qa;
    unlearn.layer = top;
    unlearn.basis = Mat(d, 1);
    unlearn.basis(10, 0) = 1.0;
    unlearn.rank = 1;
    unlearn.principal_direction = unlearn.basis.col(0);

    steer::SteeringPolicy policy;
    policy.tau = 1.0;  // every gate open
    policy.scoring_layer = top;

    std::vector<TheoryItem> retain;
    for (int i = 0; i < 6; ++i) {
        TheoryItem item;
        item.id = "r" + std::to_string(i);
        item.context.tokens = {static_cast<std::int32_t>(5 + i),
                               static_cast<std::int32_t>(9 + i), kAnswerId};
        item.prompt_len = 2;
        item.y_true = static_cast<std::int32_t>(6 + i);
        item.y_ref = 5;
        retain.push_back(std::move(item));
    }

    TheoryArtifacts arts{&unlearn, &rrs, &rrs};
    TheoryCheckReport report =
        run_theory_check(m, arts, policy, {}, retain, top);
    EXPECT_EQ(report.retain_open, retain.size());
    EXPECT_LE(report.epsilon_retain, 1e-10);
}

TEST(TheoryCheck, ClosedGatesOnForgetSideRejected) {
    ModelDims dims = small_dims();
    ToyModel m = ToyModel::init(22, dims);
    const std::size_t top = dims.n_layers - 1;

    subspace::SubspaceArtifact rrs;
    rrs.layer = top;
    rrs.kind = subspace::SubspaceKind::retain;
    rrs.basis = Mat(dims.d, 1);
    rrs.basis(0, 0) = 1.0;
    rrs.rank = 1;
    rrs.principal_direction = rrs.basis.col(0);
    subspace::SubspaceArtifact unlearn = rrs;
    unlearn.kind = subspace::SubspaceKind::unlearn_qa;

    steer::SteeringPolicy policy;
    policy.tau = 1e-12;  // gate never opens
    policy.scoring_layer = top;

    TheoryItem item;
    item.context.tokens = {5, 6, kAnswerId};
    item.prompt_len = 2;
    item.y_true = 7;
    item.y_ref = 8;

    TheoryArtifacts arts{&unlearn, &rrs, &rrs};
    EXPECT_THROW(run_theory_check(m, arts, policy, {item}, {}, top),
                 NoGateOpenExamples);
}
