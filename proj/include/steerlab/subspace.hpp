#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "steerlab/linalg.hpp"
#include "steerlab/sphere.hpp"
#include "steerlab/trace.hpp"

namespace steerlab::subspace {

/// Refusal-guided positive against the model's own recall generation.
/// The two negatives may alias the same trace when one structured
/// generation carries both the answer and the reasoning field.
struct ContrastPair {
    ActivationTrace positive;
    ActivationTrace negative_ans;
    ActivationTrace negative_cot;

    bool has_cot() const {
        return !positive.spans.reasoning.empty() &&
               !negative_cot.spans.reasoning.empty();
    }
};

/// Retain example rendered twice: once with an explicit stepwise solution,
/// once with the bare direct answer.
struct RetainPair {
    ActivationTrace stepwise;
    ActivationTrace direct;
};

enum class SubspaceKind { unlearn_qa, unlearn_vqa, retain };

inline std::string to_string(SubspaceKind k) {
    switch (k) {
        case SubspaceKind::unlearn_qa: return "unlearn_qa";
        case SubspaceKind::unlearn_vqa: return "unlearn_vqa";
        case SubspaceKind::retain: return "retain";
    }
    return "unknown";
}

inline SubspaceKind subspace_kind_from_string(const std::string& s) {
    if (s == "unlearn_qa") return SubspaceKind::unlearn_qa;
    if (s == "unlearn_vqa") return SubspaceKind::unlearn_vqa;
    if (s == "retain") return SubspaceKind::retain;
    throw InvalidArgument("unknown subspace kind: " + s);
}

/// Orthonormal basis of one layer's subspace plus its build metadata.
struct SubspaceArtifact {
    std::size_t layer = 0;
    SubspaceKind kind = SubspaceKind::unlearn_qa;
    Mat basis;               // d x rank, orthonormal columns
    std::size_t rank = 0;
    double eta = 0.0;
    Vec principal_direction; // first basis column
    Vec centering_mean;      // subtracted per-dimension item mean
    Vec spectrum;            // full singular values of the centered stack
    std::uint64_t seed = 0;
    std::size_t item_count = 0;
    std::uint32_t version = 1;

    Projector projector() const { return Projector::from_basis(basis); }
};

/// Unit prototype directions with weights summing to one.
struct PrototypeSet {
    std::size_t layer = 0;
    std::vector<Vec> directions;
    Vec weights;

    void validate() const {
        if (directions.empty()) throw EmptyPrototypes("PrototypeSet");
        if (weights.size() != directions.size())
            throw DimMismatch("PrototypeSet: weights/directions length");
        double total = 0.0;
        for (std::size_t i = 0; i < directions.size(); ++i) {
            if (std::abs(norm(directions[i]) - 1.0) > 1e-6)
                throw NotUnit("PrototypeSet direction");
            total += weights[i];
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw InvalidArgument("PrototypeSet: weights do not sum to 1");
    }
};

/// Mean hidden state over a token span at one layer.
inline Vec span_pool(const ActivationTrace& trace, std::size_t layer,
                     const TokenRange& span) {
    if (layer >= trace.layer_count())
        throw InvalidArgument("span_pool: layer out of range");
    if (span.empty()) throw EmptySpan("span_pool");
    if (span.end > trace.seq_len())
        throw InvalidArgument("span_pool: span outside sequence");
    const Mat& states = trace.layers[layer];
    Vec out(states.cols, 0.0);
    for (std::size_t t = span.begin; t < span.end; ++t) {
        const double* row = states.row_ptr(t);
        for (std::size_t j = 0; j < states.cols; ++j) out[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(span.size());
    for (double& x : out) x *= inv;
    return out;
}

/// Mean hidden state over the union of two disjoint spans. Field-label
/// sentinels between the spans stay excluded.
inline Vec span_pool_union(const ActivationTrace& trace, std::size_t layer,
                           const TokenRange& a, const TokenRange& b) {
    if (a.empty() && b.empty()) throw EmptySpan("span_pool_union");
    if (a.empty()) return span_pool(trace, layer, b);
    if (b.empty()) return span_pool(trace, layer, a);
    Vec pa = span_pool(trace, layer, a);
    Vec pb = span_pool(trace, layer, b);
    const double wa = static_cast<double>(a.size());
    const double wb = static_cast<double>(b.size());
    Vec out = scaled(pa, wa / (wa + wb));
    axpy(wb / (wa + wb), pb, out);
    return out;
}

namespace detail {

inline Vec answer_differential(const ContrastPair& p, std::size_t layer) {
    Vec pos = span_pool(p.positive, layer, p.positive.spans.answer);
    Vec neg = span_pool(p.negative_ans, layer, p.negative_ans.spans.answer);
    return sub(pos, neg);
}

inline Vec cot_differential(const ContrastPair& p, std::size_t layer) {
    Vec pos = span_pool(p.positive, layer, p.positive.spans.reasoning);
    Vec neg = span_pool(p.negative_cot, layer, p.negative_cot.spans.reasoning);
    return sub(pos, neg);
}

// Z-score a view over the items that carry it, writing standardized columns
// into `out` at the listed column indices. With a single carrier the column
// centers to zero by definition.
inline void add_zscored_view(const std::vector<Vec>& diffs,
                             const std::vector<std::size_t>& columns, Mat& out) {
    if (diffs.empty()) return;
    if (diffs.size() == 1) return;  // centered by its own mean: contributes zero
    Mat view(diffs[0].size(), diffs.size());
    for (std::size_t j = 0; j < diffs.size(); ++j) view.set_col(j, diffs[j]);
    auto [standardized, stats] = zscore_batch(view);
    for (std::size_t j = 0; j < columns.size(); ++j) {
        const std::size_t c = columns[j];
        for (std::size_t i = 0; i < out.rows; ++i)
            out(i, c) += standardized(i, j);
    }
}

}  // namespace detail

/// Span-hybrid differential stack: column i is the z-scored answer-span
/// differential of pair i plus its z-scored reasoning-span differential.
/// Pairs without a reasoning span contribute no reasoning term and are
/// excluded from the reasoning-view statistics.
inline Mat hybrid_differentials(const std::vector<ContrastPair>& pairs,
                                std::size_t layer) {
    if (pairs.size() < 2) throw BatchTooSmall("hybrid_differentials: need >= 2 pairs");
    const std::size_t d = pairs[0].positive.dim();
    Mat out(d, pairs.size());

    std::vector<Vec> ans_diffs;
    std::vector<std::size_t> ans_cols;
    std::vector<Vec> cot_diffs;
    std::vector<std::size_t> cot_cols;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        ans_diffs.push_back(detail::answer_differential(pairs[i], layer));
        ans_cols.push_back(i);
        if (pairs[i].has_cot()) {
            cot_diffs.push_back(detail::cot_differential(pairs[i], layer));
            cot_cols.push_back(i);
        }
    }
    detail::add_zscored_view(ans_diffs, ans_cols, out);
    detail::add_zscored_view(cot_diffs, cot_cols, out);
    return out;
}

/// Single-view variants used by the span ablations: the same stack built
/// from only the answer-span or only the reasoning-span differentials.
inline Mat answer_only_differentials(const std::vector<ContrastPair>& pairs,
                                     std::size_t layer) {
    if (pairs.size() < 2) throw BatchTooSmall("answer_only_differentials");
    const std::size_t d = pairs[0].positive.dim();
    Mat out(d, pairs.size());
    std::vector<Vec> diffs;
    std::vector<std::size_t> cols;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        diffs.push_back(detail::answer_differential(pairs[i], layer));
        cols.push_back(i);
    }
    detail::add_zscored_view(diffs, cols, out);
    return out;
}

inline Mat cot_only_differentials(const std::vector<ContrastPair>& pairs,
                                  std::size_t layer) {
    if (pairs.size() < 2) throw BatchTooSmall("cot_only_differentials");
    const std::size_t d = pairs[0].positive.dim();
    Mat out(d, pairs.size());
    std::vector<Vec> diffs;
    std::vector<std::size_t> cols;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!pairs[i].has_cot()) continue;
        diffs.push_back(detail::cot_differential(pairs[i], layer));
        cols.push_back(i);
    }
    detail::add_zscored_view(diffs, cols, out);
    return out;
}

/// Mean raw (pre-standardization) hybrid differential across the batch.
/// Used only to orient the principal direction toward the refusal side;
/// z-scoring centers the stack, so the orientation must come from the raw
/// contrasts.
inline Vec raw_mean_differential(const std::vector<ContrastPair>& pairs,
                                 std::size_t layer) {
    if (pairs.empty()) throw BatchTooSmall("raw_mean_differential");
    const std::size_t d = pairs[0].positive.dim();
    Vec mean_ans(d, 0.0);
    Vec mean_cot(d, 0.0);
    std::size_t n_cot = 0;
    for (const ContrastPair& p : pairs) {
        axpy(1.0, detail::answer_differential(p, layer), mean_ans);
        if (p.has_cot()) {
            axpy(1.0, detail::cot_differential(p, layer), mean_cot);
            ++n_cot;
        }
    }
    Vec out = scaled(mean_ans, 1.0 / static_cast<double>(pairs.size()));
    if (n_cot > 0) axpy(1.0 / static_cast<double>(n_cot), mean_cot, out);
    return out;
}

/// Center the differential stack, factor it, and keep the smallest basis
/// reaching the energy threshold. An optional orientation hint flips the
/// principal direction to point along the hinted half-space.
inline SubspaceArtifact build_unlearning_subspace(
    const Mat& diffs, double eta, std::size_t layer, SubspaceKind kind,
    std::uint64_t seed = 0, const Vec& orientation_hint = {}) {
    if (diffs.cols < 2) throw BatchTooSmall("build_unlearning_subspace: need >= 2 columns");

    Mat centered = diffs;
    Vec mean(diffs.rows, 0.0);
    for (std::size_t i = 0; i < diffs.rows; ++i) {
        const double* row = diffs.row_ptr(i);
        double mu = 0.0;
        for (std::size_t j = 0; j < diffs.cols; ++j) mu += row[j];
        mu /= static_cast<double>(diffs.cols);
        mean[i] = mu;
        double* crow = centered.row_ptr(i);
        for (std::size_t j = 0; j < diffs.cols; ++j) crow[j] -= mu;
    }

    SvdResult svd = compact_svd(centered);
    const std::size_t k = rank_by_energy(svd.singular_values, eta);

    SubspaceArtifact art;
    art.layer = layer;
    art.kind = kind;
    art.rank = k;
    art.eta = eta;
    art.centering_mean = std::move(mean);
    art.spectrum = svd.singular_values;
    art.seed = seed;
    art.item_count = diffs.cols;
    art.basis = Mat(diffs.rows, k);
    for (std::size_t j = 0; j < k; ++j) art.basis.set_col(j, svd.u.col(j));
    if (!orientation_hint.empty()) {
        Vec first = art.basis.col(0);
        if (dot(first, orientation_hint) < 0.0) {
            for (std::size_t i = 0; i < art.basis.rows; ++i)
                art.basis(i, 0) = -art.basis(i, 0);
        }
    }
    art.principal_direction = art.basis.col(0);
    return art;
}

/// Z-scored full-response differentials of retain pairs.
inline Mat rrs_differentials(const std::vector<RetainPair>& pairs,
                             std::size_t layer) {
    if (pairs.size() < 2) throw BatchTooSmall("rrs_differentials: need >= 2 pairs");
    const std::size_t d = pairs[0].stepwise.dim();
    std::vector<Vec> diffs;
    diffs.reserve(pairs.size());
    for (const RetainPair& p : pairs) {
        Vec pos = span_pool_union(p.stepwise, layer, p.stepwise.spans.reasoning,
                                  p.stepwise.spans.answer);
        Vec neg = span_pool_union(p.direct, layer, p.direct.spans.reasoning,
                                  p.direct.spans.answer);
        diffs.push_back(sub(pos, neg));
    }
    Mat view(d, diffs.size());
    for (std::size_t j = 0; j < diffs.size(); ++j) view.set_col(j, diffs[j]);
    auto [standardized, stats] = zscore_batch(view);
    return standardized;
}

/// Reasoning retain subspace per requested layer, same pipeline as the
/// unlearning subspace with stepwise/direct responses as the contrast.
inline std::vector<SubspaceArtifact> build_rrs(const std::vector<RetainPair>& pairs,
                                               double eta,
                                               const std::vector<std::size_t>& layers,
                                               std::uint64_t seed = 0) {
    std::vector<SubspaceArtifact> out;
    out.reserve(layers.size());
    for (std::size_t layer : layers) {
        Mat diffs = rrs_differentials(pairs, layer);
        out.push_back(build_unlearning_subspace(diffs, eta, layer,
                                                SubspaceKind::retain, seed));
    }
    return out;
}

namespace detail {

inline std::size_t nearest_index(const Vec& point, const std::vector<Vec>& refs,
                                 const std::vector<std::size_t>& subset) {
    std::size_t best = subset[0];
    double best_d = geodesic(point, refs[subset[0]]);
    for (std::size_t i = 1; i < subset.size(); ++i) {
        const double dd = geodesic(point, refs[subset[i]]);
        if (dd < best_d) {
            best_d = dd;
            best = subset[i];
        }
    }
    return best;
}

}  // namespace detail

/// K-medoids under geodesic distance with deterministic farthest-point
/// initialization from item 0. count <= K keeps every pooled positive.
inline PrototypeSet build_prototypes(const std::vector<ActivationTrace>& positives,
                                     std::size_t layer, std::size_t K) {
    if (positives.empty()) throw InvalidArgument("build_prototypes: no positives");
    if (K == 0) throw InvalidArgument("build_prototypes: K must be positive");

    std::vector<Vec> pooled;
    pooled.reserve(positives.size());
    for (const ActivationTrace& t : positives) {
        Vec p = span_pool_union(t, layer, t.spans.answer, t.spans.reasoning);
        const double n = norm(p);
        if (!(n > 0.0)) throw ZeroVector("build_prototypes: zero pooled activation");
        pooled.push_back(scaled(p, 1.0 / n));
    }

    PrototypeSet set;
    set.layer = layer;
    if (pooled.size() <= K) {
        set.directions = pooled;
    } else {
        // farthest-point seeding
        std::vector<std::size_t> medoids = {0};
        while (medoids.size() < K) {
            std::size_t arg = 0;
            double best = -1.0;
            for (std::size_t i = 0; i < pooled.size(); ++i) {
                double nearest = geodesic(pooled[i], pooled[medoids[0]]);
                for (std::size_t m = 1; m < medoids.size(); ++m)
                    nearest = std::min(nearest, geodesic(pooled[i], pooled[medoids[m]]));
                if (nearest > best) {
                    best = nearest;
                    arg = i;
                }
            }
            medoids.push_back(arg);
        }
        // alternate assignment and medoid refresh until stable
        for (int iter = 0; iter < 64; ++iter) {
            std::vector<std::vector<std::size_t>> clusters(K);
            for (std::size_t i = 0; i < pooled.size(); ++i) {
                std::size_t best_m = 0;
                double best_d = geodesic(pooled[i], pooled[medoids[0]]);
                for (std::size_t m = 1; m < K; ++m) {
                    const double dd = geodesic(pooled[i], pooled[medoids[m]]);
                    if (dd < best_d) {
                        best_d = dd;
                        best_m = m;
                    }
                }
                clusters[best_m].push_back(i);
            }
            bool changed = false;
            for (std::size_t m = 0; m < K; ++m) {
                if (clusters[m].empty()) continue;
                std::size_t best = medoids[m];
                double best_cost = -1.0;
                for (std::size_t cand : clusters[m]) {
                    double cost = 0.0;
                    for (std::size_t other : clusters[m])
                        cost += geodesic(pooled[cand], pooled[other]);
                    if (best_cost < 0.0 || cost < best_cost) {
                        best_cost = cost;
                        best = cand;
                    }
                }
                if (best != medoids[m]) {
                    medoids[m] = best;
                    changed = true;
                }
            }
            if (!changed) break;
        }
        for (std::size_t m : medoids) set.directions.push_back(pooled[m]);
    }
    set.weights.assign(set.directions.size(),
                       1.0 / static_cast<double>(set.directions.size()));
    set.validate();
    return set;
}

}  // namespace steerlab::subspace
