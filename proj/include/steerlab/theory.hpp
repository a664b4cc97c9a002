#pragma once

#include <optional>
#include <string>
#include <vector>

#include "steerlab/plant.hpp"
#include "steerlab/steer.hpp"
#include "steerlab/toymodel.hpp"

namespace steerlab::toy {

/// Recompute the layers above `layer` at one position with a replacement
/// hidden state, reusing the trace's previous-position states for the
/// recurrent terms. Returns the final-layer state. The loss at a position
/// depends only on its own column, so this is exact.
inline Vec column_recompute(const ToyModel& model, const ActivationTrace& trace,
                            std::size_t position, std::size_t layer,
                            const Vec& replacement) {
    if (layer >= model.dims.n_layers || position >= trace.seq_len())
        throw HookOutOfRange("column_recompute");
    Vec below = replacement;
    for (std::size_t l = layer + 1; l < model.dims.n_layers; ++l) {
        Vec z = model.bias[l];
        axpy(1.0, matvec(model.mix[l], below), z);
        if (position > 0) {
            Vec prev(model.dims.d);
            for (std::size_t j = 0; j < model.dims.d; ++j)
                prev[j] = trace.layers[l](position - 1, j);
            axpy(1.0, matvec(model.recur[l], prev), z);
        }
        for (double& x : z) x = std::tanh(x);
        below = std::move(z);
    }
    return below;
}

inline double position_loss(const ToyModel& model, const Vec& final_state,
                            std::int32_t target) {
    return detail::cross_entropy(model.logits(final_state), target);
}

struct LossProbe {
    std::size_t layer = 0;
    std::size_t position = 0;
    std::int32_t target = 0;
    Vec gradient;
    double loss = 0.0;
};

/// Gradient of the cross-entropy at `position` (next-token target) with
/// respect to the layer-`layer` hidden state, by backpropagation through the
/// tanh column above it.
inline LossProbe hidden_loss_gradient(const ToyModel& model,
                                      const ActivationTrace& trace,
                                      std::size_t position, std::int32_t target,
                                      std::size_t layer) {
    if (layer >= model.dims.n_layers || position >= trace.seq_len())
        throw HookOutOfRange("hidden_loss_gradient");
    const std::size_t top = model.dims.n_layers - 1;
    Vec final_state(model.dims.d);
    for (std::size_t j = 0; j < model.dims.d; ++j)
        final_state[j] = trace.layers[top](position, j);

    Vec prob = detail::softmax(model.logits(final_state));
    prob[static_cast<std::size_t>(target)] -= 1.0;
    Vec g = matvec_t(model.readout, prob);  // d(loss)/d(h_top)

    for (std::size_t l = top; l > layer; --l) {
        Vec h_l(model.dims.d);
        for (std::size_t j = 0; j < model.dims.d; ++j)
            h_l[j] = trace.layers[l](position, j);
        Vec pre(model.dims.d);
        for (std::size_t j = 0; j < model.dims.d; ++j)
            pre[j] = g[j] * (1.0 - h_l[j] * h_l[j]);
        g = matvec_t(model.mix[l], pre);
    }

    LossProbe probe;
    probe.layer = layer;
    probe.position = position;
    probe.target = target;
    probe.gradient = std::move(g);
    probe.loss = position_loss(model, final_state, target);
    if (!all_finite(probe.gradient)) throw NumericalFailure("hidden_loss_gradient");
    return probe;
}

/// One example for the first-order analysis: a teacher-forced context ending
/// at the answer-field sentinel, plus the gold and refusal targets it should
/// predict next.
struct TheoryItem {
    std::string id;
    InputSequence context;
    std::size_t prompt_len = 0;  // full prompt length incl. image tokens
    std::int32_t y_true = 0;
    std::int32_t y_ref = 0;
};

struct TheoryArtifacts {
    const subspace::SubspaceArtifact* unlearn = nullptr;   // at the check layer
    const subspace::SubspaceArtifact* rrs_check = nullptr; // at the check layer
    const subspace::SubspaceArtifact* rrs_gate = nullptr;  // at the scoring layer
};

struct TheoryCheckReport {
    std::size_t check_layer = 0;
    std::size_t forget_total = 0, forget_open = 0;
    std::size_t retain_total = 0, retain_open = 0;
    std::vector<double> forget_s, forget_dl;   // gate-open examples only
    std::vector<double> retain_s, retain_dl;
    double mean_forget_dl = 0.0;
    double mean_retain_dl = 0.0;
    double alpha_forget = 0.0;    // least-squares slope of -dl against s
    double epsilon_retain = 0.0;  // max |dl| / s over retain examples
};

/// Empirical first-order check: apply the gated retain-orthogonal rank-1
/// update with a small measured step against the principal direction's
/// component (the loss-decreasing orientation of the raw operator) and record
/// the exact loss changes together with s(x), the squared retain-orthogonal
/// unlearning component.
inline TheoryCheckReport run_theory_check(
    const ToyModel& model, const TheoryArtifacts& artifacts,
    const steer::SteeringPolicy& policy, const std::vector<TheoryItem>& forget,
    const std::vector<TheoryItem>& retain, std::size_t check_layer,
    double step_scale = 1e-2) {
    if (!artifacts.unlearn || !artifacts.rrs_gate)
        throw MissingArtifact("run_theory_check");
    Projector p_gate = artifacts.rrs_gate->projector();
    Projector p_un = artifacts.unlearn->projector();
    std::optional<Projector> p_check;
    if (artifacts.rrs_check) p_check = artifacts.rrs_check->projector();
    const Vec& v_un = artifacts.unlearn->principal_direction;

    TheoryCheckReport report;
    report.check_layer = check_layer;

    auto run_side = [&](const std::vector<TheoryItem>& items, bool is_forget,
                        std::vector<double>& s_out, std::vector<double>& dl_out,
                        std::size_t& open_count) {
        for (const TheoryItem& item : items) {
            ActivationTrace trace = forward_with_hooks(model, item.context);
            const std::size_t end_pos = item.prompt_len - 1;
            Vec h_end(model.dims.d);
            for (std::size_t j = 0; j < model.dims.d; ++j)
                h_end[j] = trace.layers[policy.scoring_layer](end_pos, j);
            steer::GateDecision gate =
                steer::decide_gate(steer::gate_score(h_end, p_gate), policy.tau);
            if (!gate.open) continue;
            ++open_count;

            const std::size_t pos = trace.seq_len() - 1;
            Vec h(model.dims.d);
            for (std::size_t j = 0; j < model.dims.d; ++j)
                h[j] = trace.layers[check_layer](pos, j);

            Vec un_component = p_un.project(h);
            if (p_check) un_component = p_check->reject(un_component);
            const double s = dot(un_component, un_component);

            Vec delta = steer::update_operator(
                h, gate, p_check ? &*p_check : nullptr, v_un);
            Vec perturbed = h;
            const double dn = norm(delta);
            if (dn > 1e-12)
                axpy(-step_scale * norm(h) / dn, delta, perturbed);

            const std::int32_t target = is_forget ? item.y_ref : item.y_true;
            const double base = position_loss(
                model, column_recompute(model, trace, pos, check_layer, h), target);
            const double moved = position_loss(
                model, column_recompute(model, trace, pos, check_layer, perturbed),
                target);
            s_out.push_back(s);
            dl_out.push_back(moved - base);
        }
    };

    report.forget_total = forget.size();
    report.retain_total = retain.size();
    run_side(forget, true, report.forget_s, report.forget_dl, report.forget_open);
    run_side(retain, false, report.retain_s, report.retain_dl, report.retain_open);

    if (!forget.empty() && report.forget_open == 0)
        throw NoGateOpenExamples("run_theory_check: no gate-open forget examples");

    auto mean = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    report.mean_forget_dl = mean(report.forget_dl);
    report.mean_retain_dl = mean(report.retain_dl);

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < report.forget_s.size(); ++i) {
        num += report.forget_s[i] * (-report.forget_dl[i]);
        den += report.forget_s[i] * report.forget_s[i];
    }
    report.alpha_forget = den > 0.0 ? num / den : 0.0;

    double eps = 0.0;
    for (std::size_t i = 0; i < report.retain_s.size(); ++i) {
        if (report.retain_s[i] > 1e-12)
            eps = std::max(eps, std::abs(report.retain_dl[i]) / report.retain_s[i]);
    }
    report.epsilon_retain = eps;
    return report;
}

}  // namespace steerlab::toy
