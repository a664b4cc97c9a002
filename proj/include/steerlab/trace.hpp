#pragma once

#include <cstdint>
#include <vector>

#include "steerlab/tensor.hpp"

namespace steerlab {

/// Half-open token index range [begin, end).
struct TokenRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    bool empty() const { return end <= begin; }
    std::size_t size() const { return empty() ? 0 : end - begin; }
    bool operator==(const TokenRange&) const = default;
};

/// Token spans of the structured output: the answer field and the reasoning
/// field, with field-label sentinels excluded. An absent reasoning field is
/// an empty range.
struct SpanAnnotation {
    TokenRange answer;
    TokenRange reasoning;
    bool operator==(const SpanAnnotation&) const = default;
};

inline bool spans_disjoint(const SpanAnnotation& s) {
    if (s.answer.empty() || s.reasoning.empty()) return true;
    return s.answer.end <= s.reasoning.begin || s.reasoning.end <= s.answer.begin;
}

/// Per-layer, per-token hidden states captured from one forward pass.
/// layers[l] is a (seq_len x d) matrix.
struct ActivationTrace {
    std::vector<Mat> layers;
    std::vector<std::int32_t> tokens;
    SpanAnnotation spans;

    std::size_t layer_count() const { return layers.size(); }
    std::size_t seq_len() const { return tokens.size(); }
    std::size_t dim() const { return layers.empty() ? 0 : layers[0].cols; }

    void validate() const {
        if (layers.empty()) throw InvalidArgument("ActivationTrace: no layers");
        for (const Mat& m : layers) {
            if (m.rows != tokens.size() || m.cols != layers[0].cols)
                throw DimMismatch("ActivationTrace: inconsistent layer shapes");
            if (!all_finite(m))
                throw InvalidArgument("ActivationTrace: non-finite states");
        }
        auto in_range = [&](const TokenRange& r) {
            return r.empty() || r.end <= tokens.size();
        };
        if (!in_range(spans.answer) || !in_range(spans.reasoning))
            throw InvalidArgument("ActivationTrace: span outside sequence");
        if (!spans_disjoint(spans))
            throw InvalidArgument("ActivationTrace: overlapping spans");
    }
};

}  // namespace steerlab
