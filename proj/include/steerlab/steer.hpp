#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "steerlab/linalg.hpp"
#include "steerlab/sphere.hpp"
#include "steerlab/subspace.hpp"

namespace steerlab::steer {

using subspace::PrototypeSet;
using subspace::SubspaceArtifact;

enum class SteerMode { acs, additive, off };
enum class SpanView { hybrid, answer_only, cot_only };

inline std::string to_string(SteerMode m) {
    switch (m) {
        case SteerMode::acs: return "acs";
        case SteerMode::additive: return "additive";
        case SteerMode::off: return "off";
    }
    return "off";
}

inline std::string to_string(SpanView v) {
    switch (v) {
        case SpanView::hybrid: return "hybrid";
        case SpanView::answer_only: return "answer_only";
        case SpanView::cot_only: return "cot_only";
    }
    return "hybrid";
}

struct SteeringPolicy {
    double tau = 0.85;
    std::vector<std::size_t> steering_layers;
    std::size_t scoring_layer = 0;
    SteerMode mode = SteerMode::acs;
    double lambda_fixed = 1.5;  // additive-mode coefficient
    bool use_rrs = true;
    SpanView view = SpanView::hybrid;

    void validate(std::size_t n_layers) const {
        if (!(tau > 0.0 && tau <= 1.0))
            throw InvalidArgument("SteeringPolicy: tau outside (0, 1]");
        if (scoring_layer >= n_layers)
            throw InvalidArgument("SteeringPolicy: scoring layer out of range");
        for (std::size_t l : steering_layers)
            if (l >= n_layers)
                throw InvalidArgument("SteeringPolicy: steering layer out of range");
        if (mode == SteerMode::additive && !(lambda_fixed > 0.0))
            throw InvalidArgument("SteeringPolicy: additive mode needs lambda > 0");
    }
};

struct GateDecision {
    double score = 1.0;
    bool open = false;
};

struct SteeringOutcome {
    double theta_dir = 0.0;
    double theta_tar = 0.0;
    double lambda = 0.0;
    std::size_t target_index = 0;
    bool applied = false;
    bool antipodal_fallback = false;
    double norm_before = 0.0;
    double norm_after = 0.0;
};

/// Normalized projection of the end-token activation onto the retain
/// subspace; in [0, 1] and invariant under positive scaling of h.
inline double gate_score(const Vec& h_end, const Projector& rrs) {
    const double n = norm(h_end);
    if (!(n > 0.0)) throw ZeroVector("gate_score");
    if (h_end.size() != rrs.dim()) throw DimMismatch("gate_score");
    const double p = norm(rrs.project(h_end));
    return std::min(1.0, p / n);
}

/// Strict comparison: the gate opens (steering applies) only when the score
/// is below the threshold. tau = 1.0 is allowed so threshold sweeps can
/// cover the always-steer end of the range.
inline GateDecision decide_gate(double score, double tau) {
    if (!(tau > 0.0 && tau <= 1.0))
        throw InvalidArgument("decide_gate: tau outside (0, 1]");
    return GateDecision{score, score < tau};
}

/// Principal unlearning direction with its retained-reasoning component
/// removed; plain principal direction when no retain subspace is in force.
inline Vec effective_direction(const SubspaceArtifact& unlearn,
                               const Projector* rrs) {
    Vec v = unlearn.principal_direction;
    if (!rrs) return normalized(v);
    if (v.size() != rrs->dim()) throw DimMismatch("effective_direction");
    Vec rejected = rrs->reject(v);
    const double n = norm(rejected);
    if (n <= 1e-8)
        throw DegenerateDirection("unlearning direction lies in the retain subspace");
    return scaled(rejected, 1.0 / n);
}

struct OtTarget {
    Vec zstar;
    double theta_tar = 0.0;
    std::size_t index = 0;
};

/// Nearest prototype under squared geodesic cost; a point-mass source makes
/// the transport plan a deterministic map onto that prototype.
inline OtTarget ot_target(const Vec& hhat, const PrototypeSet& prototypes) {
    if (prototypes.directions.empty()) throw EmptyPrototypes("ot_target");
    std::size_t best = 0;
    double best_theta = geodesic(hhat, prototypes.directions[0]);
    for (std::size_t k = 1; k < prototypes.directions.size(); ++k) {
        const double theta = geodesic(hhat, prototypes.directions[k]);
        if (theta < best_theta) {
            best_theta = theta;
            best = k;
        }
    }
    return OtTarget{prototypes.directions[best], best_theta, best};
}

/// Norm-preserving adaptive step: rotate the state toward the steering
/// direction by the angle prescribed by the nearest-prototype transport
/// cost, never beyond the direction itself.
inline std::pair<Vec, SteeringOutcome> acs_step(const Vec& h, const Vec& vhat,
                                                const PrototypeSet& prototypes) {
    auto [r, hhat] = unit_decompose(h);
    const double theta_dir = geodesic(hhat, vhat);
    if (theta_dir >= kPi - 1e-9) throw AntipodalDirection("acs_step");
    OtTarget target = ot_target(hhat, prototypes);

    SteeringOutcome outcome;
    outcome.theta_dir = theta_dir;
    outcome.theta_tar = target.theta_tar;
    outcome.target_index = target.index;
    outcome.norm_before = r;
    outcome.lambda =
        theta_dir > 0.0 ? std::min(1.0, target.theta_tar / theta_dir) : 0.0;
    outcome.applied = true;

    Vec h_new = scaled(slerp(hhat, vhat, outcome.lambda), r);
    outcome.norm_after = norm(h_new);
    return {std::move(h_new), outcome};
}

/// Fixed-strength additive baseline; no renormalization.
inline Vec additive_step(const Vec& h, const Vec& vhat, double lambda_fixed) {
    if (h.size() != vhat.size()) throw DimMismatch("additive_step");
    Vec out = h;
    axpy(lambda_fixed, vhat, out);
    return out;
}

/// Add-then-renormalize route to the same rotation: push along the in-plane
/// component of the direction with magnitude r * tan(lambda * theta_dir) and
/// rescale back to radius r. Valid while the rotation stays under a quarter
/// turn.
inline Vec add_renormalize_step(const Vec& h, const Vec& vhat, double lambda) {
    auto [r, hhat] = unit_decompose(h);
    const double theta_dir = geodesic(hhat, vhat);
    if (theta_dir == 0.0) return h;
    if (theta_dir >= kPi - 1e-9) throw AntipodalDirection("add_renormalize_step");
    const double angle = lambda * theta_dir;
    if (!(angle < kPi / 2.0))
        throw InvalidArgument("add_renormalize_step: rotation >= pi/2");
    // in-plane unit direction orthogonal to hhat
    Vec w = vhat;
    axpy(-std::cos(theta_dir), hhat, w);
    w = normalized(w);
    const double alpha = r * std::tan(angle);
    Vec out = h;
    axpy(alpha, w, out);
    return scaled(normalized(out), r);
}

/// First-order update operator: the gated, retain-orthogonal rank-1
/// projection of the state onto the principal unlearning direction. Returns
/// the raw delta; callers choose the applied magnitude.
inline Vec update_operator(const Vec& h, const GateDecision& gate,
                           const Projector* rrs, const Vec& v_un) {
    if (h.size() != v_un.size()) throw DimMismatch("update_operator");
    if (rrs && rrs->dim() != h.size()) throw DimMismatch("update_operator: rrs");
    if (!gate.open) return Vec(h.size(), 0.0);
    Vec delta = scaled(v_un, dot(v_un, h));
    if (rrs) delta = rrs->reject(delta);
    return delta;
}

/// One line of the intervention log.
struct InterventionRecord {
    std::string query_id;
    std::size_t step = 0;
    std::size_t layer = 0;
    double s_gate = 0.0;
    double theta_dir = 0.0;
    double theta_tar = 0.0;
    double lambda = 0.0;
    bool applied = false;
};

}  // namespace steerlab::steer
