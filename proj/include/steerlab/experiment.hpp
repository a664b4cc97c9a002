#pragma once

#include <atomic>
#include <map>
#include <optional>
#include <thread>

#include "steerlab/artifact_io.hpp"
#include "steerlab/config.hpp"
#include "steerlab/corpus.hpp"
#include "steerlab/dataset.hpp"
#include "steerlab/model_io.hpp"
#include "steerlab/plant.hpp"
#include "steerlab/steer.hpp"
#include "steerlab/theory.hpp"

namespace steerlab::harness {

using steer::SpanView;
using steer::SteerMode;
using steer::SteeringPolicy;
using subspace::SubspaceArtifact;
using subspace::SubspaceKind;
using toy::InputSequence;
using toy::ToyModel;

/// Deterministic ordered parallel map: results land by index, chunk
/// boundaries are fixed, so the worker count never changes any output.
template <typename Fn>
inline void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    const std::size_t n = std::min(workers, count);
    pool.reserve(n);
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
}

inline std::vector<std::size_t> resolve_steering_layers(const ExperimentConfig& cfg) {
    if (cfg.steering_layers == "auto") {
        // middle-to-late third of the stack
        const std::size_t L = cfg.n_layers;
        const std::size_t lo = (L + 2) / 3;
        const std::size_t hi = std::min(L - 1, (2 * L + 2) / 3);
        std::vector<std::size_t> layers;
        for (std::size_t l = lo; l <= hi; ++l) layers.push_back(l);
        return layers;
    }
    std::vector<std::size_t> layers;
    std::string token;
    for (char c : cfg.steering_layers + ",") {
        if (c == ',') {
            if (!token.empty()) layers.push_back(detail::parse_u64("steering_layers", token));
            token.clear();
        } else {
            token.push_back(c);
        }
    }
    if (layers.empty()) throw ConfigError("steering_layers: empty list");
    return layers;
}

inline std::size_t resolve_scoring_layer(const ExperimentConfig& cfg,
                                         const std::vector<std::size_t>& layers) {
    if (cfg.scoring_layer == "auto")
        return *std::max_element(layers.begin(), layers.end());
    return detail::parse_u64("scoring_layer", cfg.scoring_layer);
}

// ---------------------------------------------------------------------------
// prompt and response rendering
// ---------------------------------------------------------------------------

inline InputSequence eval_prompt(const BenchRecord& r, const Vocab& vocab,
                                 const PromptTemplates& templates) {
    InputSequence input;
    input.tokens = vocab.encode(templates.neutral_guidance + " " + r.question);
    if (r.image_features) input.image_features = r.image_features;
    return input;
}

inline std::vector<std::int32_t> structured_response(const BenchRecord& r,
                                                     const Vocab& vocab) {
    std::vector<std::int32_t> out = {kReasoningId};
    for (std::int32_t t : vocab.encode(r.reasoning)) out.push_back(t);
    out.push_back(kAnswerId);
    for (std::int32_t t : vocab.encode(r.answer)) out.push_back(t);
    out.push_back(kEosId);
    return out;
}

inline toy::PlantItem plant_item(const BenchRecord& r, const Vocab& vocab,
                                 const PromptTemplates& templates) {
    toy::PlantItem item;
    item.id = r.id;
    item.prompt = eval_prompt(r, vocab, templates);
    item.response = structured_response(r, vocab);
    const std::size_t reasoning_len = vocab.encode(r.reasoning).size();
    const std::size_t answer_len = vocab.encode(r.answer).size();
    item.answer_in_response = {reasoning_len + 2, reasoning_len + 2 + answer_len};
    return item;
}

/// Deterministic refusal template assignment per record index.
inline std::pair<std::string, std::string> refusal_for(
    const PromptTemplates& templates, std::size_t index) {
    return {templates.refusal_prefixes[index % templates.refusal_prefixes.size()],
            templates.refusal_answers[index % templates.refusal_answers.size()]};
}

// ---------------------------------------------------------------------------
// artifact bundle
// ---------------------------------------------------------------------------

struct ArtifactBundle {
    std::vector<SubspaceArtifact> artifacts;
    std::vector<subspace::PrototypeSet> prototypes;

    const SubspaceArtifact* find(SubspaceKind kind, std::size_t layer) const {
        for (const auto& a : artifacts)
            if (a.kind == kind && a.layer == layer) return &a;
        return nullptr;
    }

    const SubspaceArtifact& require(SubspaceKind kind, std::size_t layer) const {
        const SubspaceArtifact* a = find(kind, layer);
        if (!a)
            throw MissingArtifact(subspace::to_string(kind) + " at layer " +
                                  std::to_string(layer));
        return *a;
    }

    const subspace::PrototypeSet& prototypes_at(std::size_t layer) const {
        for (const auto& p : prototypes)
            if (p.layer == layer) return p;
        throw MissingArtifact("prototypes at layer " + std::to_string(layer));
    }
};

// ---------------------------------------------------------------------------
// subspace building
// ---------------------------------------------------------------------------

/// Capture a teacher-forced trace of prompt + response with known spans.
inline ActivationTrace traced_response(const ToyModel& model,
                                       const InputSequence& prompt,
                                       const std::vector<std::int32_t>& response,
                                       const SpanAnnotation& spans) {
    InputSequence full = prompt;
    full.tokens.insert(full.tokens.end(), response.begin(), response.end());
    ActivationTrace trace = forward_with_hooks(model, full);
    trace.spans = spans;
    trace.validate();
    return trace;
}

inline SpanAnnotation response_spans(const std::vector<std::int32_t>& response,
                                     std::size_t prompt_len) {
    return toy::parse_structured(response, prompt_len);
}

/// Contrast pair for one forget record: the model's own structured recall
/// generation against the teacher-forced refusal rendering.
inline std::optional<subspace::ContrastPair> contrast_pair_for(
    const ToyModel& model, const BenchRecord& record, std::size_t record_index,
    const Vocab& vocab, const PromptTemplates& templates, std::size_t max_len) {
    InputSequence prompt = eval_prompt(record, vocab, templates);
    const std::size_t prompt_len = model.full_tokens(prompt).size();

    toy::Generation gen = toy::generate_raw(model, prompt, max_len);
    SpanAnnotation neg_spans = toy::parse_structured(gen.response, prompt_len);
    if (neg_spans.answer.empty()) return std::nullopt;  // nothing to contrast

    subspace::ContrastPair pair;
    pair.negative_ans = traced_response(model, prompt, gen.response, neg_spans);
    pair.negative_cot = pair.negative_ans;

    const auto [prefix, answer] = refusal_for(templates, record_index);
    std::vector<std::int32_t> refusal = {kReasoningId};
    for (std::int32_t t : vocab.encode(prefix)) refusal.push_back(t);
    refusal.push_back(kAnswerId);
    for (std::int32_t t : vocab.encode(answer)) refusal.push_back(t);
    refusal.push_back(kEosId);
    pair.positive = traced_response(model, prompt, refusal,
                                    response_spans(refusal, prompt_len));
    return pair;
}

inline Mat differentials_for_view(const std::vector<subspace::ContrastPair>& pairs,
                                  std::size_t layer, SpanView view) {
    switch (view) {
        case SpanView::hybrid: return subspace::hybrid_differentials(pairs, layer);
        case SpanView::answer_only:
            return subspace::answer_only_differentials(pairs, layer);
        case SpanView::cot_only:
            return subspace::cot_only_differentials(pairs, layer);
    }
    throw InvalidArgument("unknown span view");
}

/// Build all unlearning artifacts, retain artifacts, and prototypes.
inline ArtifactBundle build_artifacts(const ToyModel& model,
                                      const std::vector<BenchRecord>& records,
                                      const ExperimentConfig& cfg) {
    const std::vector<std::size_t> layers = resolve_steering_layers(cfg);
    PromptTemplates templates = cfg.templates_path.empty()
                                    ? PromptTemplates::defaults()
                                    : PromptTemplates::load(cfg.templates_path);
    Vocab vocab = build_vocab(records, templates);

    // contrast pairs over the forget split, by modality
    std::vector<subspace::ContrastPair> qa_pairs, vqa_pairs;
    std::vector<ActivationTrace> positives;  // prototype sources, all modalities
    std::size_t record_index = 0;
    for (const BenchRecord& r : records) {
        if (r.split != Split::forget) {
            ++record_index;
            continue;
        }
        auto pair = contrast_pair_for(model, r, record_index, vocab, templates,
                                      cfg.max_len);
        ++record_index;
        if (!pair) continue;
        positives.push_back(pair->positive);
        if (r.modality == Modality::qa)
            qa_pairs.push_back(std::move(*pair));
        else
            vqa_pairs.push_back(std::move(*pair));
    }
    if (qa_pairs.size() < 2 || vqa_pairs.size() < 2)
        throw BatchTooSmall("build_artifacts: need >= 2 forget items per modality");

    // retain pairs: stepwise reasoning vs direct answer renderings
    std::vector<subspace::RetainPair> retain_pairs;
    for (const BenchRecord& r : records) {
        if (r.split != Split::retain) continue;
        InputSequence prompt = eval_prompt(r, vocab, templates);
        const std::size_t prompt_len = model.full_tokens(prompt).size();

        std::vector<std::int32_t> stepwise = structured_response(r, vocab);
        std::vector<std::int32_t> direct = {kAnswerId};
        for (std::int32_t t : vocab.encode(r.answer)) direct.push_back(t);
        direct.push_back(kEosId);

        subspace::RetainPair pair;
        pair.stepwise = traced_response(model, prompt, stepwise,
                                        response_spans(stepwise, prompt_len));
        pair.direct = traced_response(model, prompt, direct,
                                      response_spans(direct, prompt_len));
        retain_pairs.push_back(std::move(pair));
    }
    if (retain_pairs.size() < 2)
        throw BatchTooSmall("build_artifacts: need >= 2 retain items");

    ArtifactBundle bundle;
    for (std::size_t layer : layers) {
        for (auto [pairs, kind] :
             {std::pair{&qa_pairs, SubspaceKind::unlearn_qa},
              std::pair{&vqa_pairs, SubspaceKind::unlearn_vqa}}) {
            Mat diffs = differentials_for_view(*pairs, layer, cfg.view);
            Vec hint = subspace::raw_mean_differential(*pairs, layer);
            bundle.artifacts.push_back(subspace::build_unlearning_subspace(
                diffs, cfg.eta, layer, kind, cfg.seed, hint));
        }
        Mat rrs_diffs = subspace::rrs_differentials(retain_pairs, layer);
        bundle.artifacts.push_back(subspace::build_unlearning_subspace(
            rrs_diffs, cfg.eta, layer, SubspaceKind::retain, cfg.seed));
        bundle.prototypes.push_back(
            subspace::build_prototypes(positives, layer, cfg.prototype_k));
    }
    return bundle;
}

// ---------------------------------------------------------------------------
// steered generation
// ---------------------------------------------------------------------------

struct SessionResult {
    toy::Generation generation;
    steer::GateDecision gate;
    bool steered = false;
    std::vector<steer::InterventionRecord> log;
};

/// Per-query steering session: gate once from the end-of-prompt activation,
/// then apply the per-layer update to the current token's state at every
/// decoding step.
class SteerRunner {
  public:
    SteerRunner(const ToyModel& model, const ArtifactBundle& bundle,
                const SteeringPolicy& policy)
        : model_(&model), bundle_(&bundle), policy_(policy) {
        policy_.validate(model.dims.n_layers);
        if (policy_.use_rrs) {
            gate_projector_ = bundle.require(SubspaceKind::retain, policy_.scoring_layer)
                                  .projector();
        }
        for (std::size_t layer : policy_.steering_layers) {
            LayerState ls;
            ls.layer = layer;
            if (policy_.use_rrs) {
                ls.rrs = bundle.require(SubspaceKind::retain, layer).projector();
            }
            const auto& qa = bundle.require(SubspaceKind::unlearn_qa, layer);
            const auto& vqa = bundle.require(SubspaceKind::unlearn_vqa, layer);
            ls.vhat_qa = steer::effective_direction(
                qa, policy_.use_rrs ? &*ls.rrs : nullptr);
            ls.vhat_vqa = steer::effective_direction(
                vqa, policy_.use_rrs ? &*ls.rrs : nullptr);
            ls.prototypes = &bundle.prototypes_at(layer);
            layers_.push_back(std::move(ls));
        }
    }

    SessionResult run(const BenchRecord& record, const Vocab& vocab,
                      const PromptTemplates& templates, std::size_t max_len) const {
        InputSequence prompt = eval_prompt(record, vocab, templates);
        const std::size_t prompt_len = model_->full_tokens(prompt).size();

        SessionResult result;
        if (policy_.mode == SteerMode::off) {
            result.generation = toy::generate_raw(*model_, prompt, max_len);
            result.gate = {1.0, false};
            return result;
        }

        // gate from the clean end-of-prompt activation at the scoring layer
        ActivationTrace prompt_trace = forward_with_hooks(*model_, prompt);
        if (policy_.use_rrs) {
            Vec h_end(model_->dims.d);
            for (std::size_t j = 0; j < model_->dims.d; ++j)
                h_end[j] = prompt_trace.layers[policy_.scoring_layer](prompt_len - 1, j);
            result.gate = steer::decide_gate(
                steer::gate_score(h_end, *gate_projector_), policy_.tau);
        } else {
            result.gate = {0.0, true};  // ablation: ungated steering
        }

        if (!result.gate.open) {
            result.generation = toy::generate_raw(*model_, prompt, max_len);
            return result;
        }

        toy::Hooks hooks = steering_hooks(record.modality == Modality::vqa,
                                          prompt_len, record.id, result);
        result.steered = true;
        result.generation = toy::generate_raw(*model_, prompt, max_len, &hooks);
        return result;
    }

    /// Trace of the prompt alone under the steering hooks (gate not applied
    /// here; callers decide). Used by the activation map export.
    ActivationTrace prompt_trace(const BenchRecord& record, const Vocab& vocab,
                                 const PromptTemplates& templates,
                                 SessionResult& scratch) const {
        InputSequence prompt = eval_prompt(record, vocab, templates);
        const std::size_t prompt_len = model_->full_tokens(prompt).size();
        toy::Hooks hooks = steering_hooks(record.modality == Modality::vqa,
                                          prompt_len, record.id, scratch);
        return forward_with_hooks(*model_, prompt, &hooks);
    }

    const SteeringPolicy& policy() const { return policy_; }

  private:
    struct LayerState {
        std::size_t layer = 0;
        std::optional<Projector> rrs;
        Vec vhat_qa, vhat_vqa;
        const subspace::PrototypeSet* prototypes = nullptr;
    };

    toy::Hooks steering_hooks(bool is_vqa, std::size_t prompt_len,
                              const std::string& query_id,
                              SessionResult& result) const {
        toy::Hooks hooks;
        hooks.from_position = prompt_len - 1;
        for (const LayerState& ls : layers_) {
            const LayerState* state = &ls;
            const Vec* vhat = is_vqa ? &ls.vhat_vqa : &ls.vhat_qa;
            SessionResult* res = &result;
            hooks.layer_transforms.push_back(
                {ls.layer, [this, state, vhat, res, prompt_len, query_id](
                               const Vec& h, std::size_t pos) {
                     return apply_step(*state, *vhat, h, pos, prompt_len,
                                       query_id, *res);
                 }});
        }
        return hooks;
    }

    Vec apply_step(const LayerState& ls, const Vec& vhat, const Vec& h,
                   std::size_t pos, std::size_t prompt_len,
                   const std::string& query_id, SessionResult& result) const {
        steer::InterventionRecord rec;
        rec.query_id = query_id;
        rec.step = pos - (prompt_len - 1);
        rec.layer = ls.layer;
        rec.s_gate = result.gate.score;

        Vec out;
        if (policy_.mode == SteerMode::additive) {
            out = steer::additive_step(h, vhat, policy_.lambda_fixed);
            rec.lambda = policy_.lambda_fixed;
            rec.applied = true;
        } else {
            try {
                auto [h_new, outcome] = steer::acs_step(h, vhat, *ls.prototypes);
                rec.theta_dir = outcome.theta_dir;
                rec.theta_tar = outcome.theta_tar;
                rec.lambda = outcome.lambda;
                rec.applied = outcome.applied;
                out = std::move(h_new);
            } catch (const AntipodalDirection&) {
                // fall back to a unit additive push, rescaled to the radius
                const double r = norm(h);
                Vec pushed = steer::additive_step(h, vhat, 1.0);
                out = scaled(normalized(pushed), r);
                rec.lambda = 1.0;
                rec.applied = true;
            }
        }
        result.log.push_back(std::move(rec));
        return out;
    }

    const ToyModel* model_;
    const ArtifactBundle* bundle_;
    SteeringPolicy policy_;
    std::optional<Projector> gate_projector_;
    std::vector<LayerState> layers_;
};

inline SteeringPolicy policy_from_config(const ExperimentConfig& cfg) {
    SteeringPolicy policy;
    policy.tau = cfg.tau;
    policy.steering_layers = resolve_steering_layers(cfg);
    policy.scoring_layer = resolve_scoring_layer(cfg, policy.steering_layers);
    policy.mode = cfg.mode;
    policy.lambda_fixed = cfg.lambda_fixed;
    policy.use_rrs = cfg.use_rrs;
    policy.view = cfg.view;
    return policy;
}

}  // namespace steerlab::harness
