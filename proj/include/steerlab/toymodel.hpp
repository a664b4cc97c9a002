#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <thread>
#include <vector>

#include "steerlab/rng.hpp"
#include "steerlab/trace.hpp"
#include "steerlab/vocab.hpp"

namespace steerlab::toy {

struct ModelDims {
    std::size_t vocab_size = 0;
    std::size_t d = 64;
    std::size_t n_layers = 6;
    std::size_t image_feature_dim = 16;  // length of a record's feature vector
    std::size_t image_tokens = 2;       // pseudo-tokens the features map to
};

/// Token ids plus optional image features rendered as pseudo-token prefix.
struct InputSequence {
    std::vector<std::int32_t> tokens;
    std::optional<Vec> image_features;
};

/// Per-layer transform applied to the current position's hidden state before
/// it propagates upward; position is absolute within the sequence.
using LayerTransform = std::function<Vec(const Vec& h, std::size_t position)>;

struct Hooks {
    // exact replacements keyed by (layer, position)
    std::map<std::pair<std::size_t, std::size_t>, Vec> replace;
    // transforms applied at every position in [from_position, end)
    std::vector<std::pair<std::size_t, LayerTransform>> layer_transforms;
    std::size_t from_position = 0;

    bool empty() const { return replace.empty() && layer_transforms.empty(); }
};

struct Generation {
    std::vector<std::int32_t> response;
    bool complete = false;  // saw <eos> within budget
};

/// Deterministic multi-layer recurrent sequence model with hookable per
/// layer, per token states and a linear readout. Layer update:
///   h_t^l = tanh(A_l h_t^{l-1} + B_l h_{t-1}^l + b_l + emb(token_t) [l = 0])
class ToyModel {
  public:
    ModelDims dims;
    std::uint64_t seed = 0;
    Mat embedding;             // vocab x d
    std::vector<Mat> mix;      // A_l, d x d
    std::vector<Mat> recur;    // B_l, d x d
    std::vector<Vec> bias;     // b_l
    Mat readout;               // vocab x d
    Mat image_adapter;         // d x (image_feature_dim / image_tokens)

    static ToyModel init(std::uint64_t seed, const ModelDims& dims) {
        if (dims.vocab_size < 16 || dims.d == 0 || dims.n_layers == 0)
            throw BadDims("ToyModel: vocab >= 16 and positive dims required");
        if (dims.image_tokens == 0 || dims.image_feature_dim % dims.image_tokens != 0)
            throw BadDims("ToyModel: image features must split evenly into tokens");
        ToyModel m;
        m.dims = dims;
        m.seed = seed;
        Rng root(seed);

        Rng emb_rng = root.derive("embedding");
        m.embedding = gaussian_mat(emb_rng, dims.vocab_size, dims.d, 1.0);

        for (std::size_t l = 0; l < dims.n_layers; ++l) {
            // Orthogonal mixing keeps every singular value at the stability
            // bound, so signals neither explode nor decay across the stack.
            Rng a_rng = root.derive("mix/" + std::to_string(l));
            m.mix.push_back(random_orthogonal(a_rng, dims.d, 0.95));

            Rng b_rng = root.derive("recur/" + std::to_string(l));
            m.recur.push_back(random_orthogonal(b_rng, dims.d, 0.98));

            Rng bias_rng = root.derive("bias/" + std::to_string(l));
            Vec bv(dims.d);
            for (double& x : bv) x = 0.2 * bias_rng.gaussian();
            m.bias.push_back(std::move(bv));
        }

        Rng w_rng = root.derive("readout");
        m.readout = gaussian_mat(w_rng, dims.vocab_size, dims.d,
                                 1.0 / std::sqrt(static_cast<double>(dims.d)));

        Rng img_rng = root.derive("image_adapter");
        const std::size_t chunk = dims.image_feature_dim / dims.image_tokens;
        m.image_adapter = gaussian_mat(img_rng, dims.d, chunk,
                                       2.0 / std::sqrt(static_cast<double>(chunk)));
        return m;
    }

    /// Embeddings for a full input: image pseudo-tokens first, then words.
    std::vector<Vec> embed(const InputSequence& input) const {
        std::vector<Vec> out;
        if (input.image_features) {
            const Vec& f = *input.image_features;
            if (f.size() != dims.image_feature_dim)
                throw BadDims("image feature length mismatch");
            const std::size_t chunk = dims.image_feature_dim / dims.image_tokens;
            for (std::size_t t = 0; t < dims.image_tokens; ++t) {
                Vec piece(f.begin() + static_cast<long>(t * chunk),
                          f.begin() + static_cast<long>((t + 1) * chunk));
                out.push_back(matvec(image_adapter, piece));
            }
        }
        for (std::int32_t tok : input.tokens) {
            if (tok < 0 || static_cast<std::size_t>(tok) >= dims.vocab_size)
                throw BadDims("token id out of vocab");
            Vec e(dims.d);
            for (std::size_t j = 0; j < dims.d; ++j)
                e[j] = embedding(static_cast<std::size_t>(tok), j);
            out.push_back(std::move(e));
        }
        return out;
    }

    /// Token ids of the full input including image pseudo-token sentinels.
    std::vector<std::int32_t> full_tokens(const InputSequence& input) const {
        std::vector<std::int32_t> out;
        if (input.image_features)
            out.assign(dims.image_tokens, kImgId);
        out.insert(out.end(), input.tokens.begin(), input.tokens.end());
        return out;
    }

    Vec logits(const Vec& final_state) const { return matvec(readout, final_state); }

    std::int32_t argmax_token(const Vec& final_state) const {
        Vec lg = logits(final_state);
        std::size_t best = 0;
        for (std::size_t i = 1; i < lg.size(); ++i)
            if (lg[i] > lg[best]) best = i;
        return static_cast<std::int32_t>(best);
    }

  private:
    static Mat gaussian_mat(Rng& rng, std::size_t r, std::size_t c, double scale) {
        Mat m(r, c);
        for (double& x : m.data) x = scale * rng.gaussian();
        return m;
    }

    // Random orthogonal matrix (Gram-Schmidt over gaussian columns) scaled
    // so the spectral norm equals `gain`.
    static Mat random_orthogonal(Rng& rng, std::size_t d, double gain) {
        Mat q(d, d);
        std::size_t filled = 0;
        while (filled < d) {
            Vec v(d);
            for (double& x : v) x = rng.gaussian();
            for (std::size_t j = 0; j < filled; ++j) {
                Vec qj = q.col(j);
                axpy(-dot(qj, v), qj, v);
            }
            const double n = norm(v);
            if (n < 1e-8) continue;
            q.set_col(filled++, scaled(v, gain / n));
        }
        return q;
    }
};

/// Incremental forward pass: one position at a time, keeping the previous
/// position's per-layer states for the recurrent term.
class ForwardCursor {
  public:
    explicit ForwardCursor(const ToyModel& model)
        : model_(&model), prev_(model.dims.n_layers, Vec(model.dims.d, 0.0)),
          position_(0) {}

    /// Advance by one embedded input. Returns the per-layer states of this
    /// position (after hooks).
    const std::vector<Vec>& step(const Vec& emb, const Hooks* hooks = nullptr) {
        const auto& dims = model_->dims;
        current_.assign(dims.n_layers, Vec());
        Vec below;  // state of the layer beneath, at this position
        for (std::size_t l = 0; l < dims.n_layers; ++l) {
            Vec z = model_->bias[l];
            if (l == 0) {
                axpy(1.0, emb, z);
            } else {
                Vec az = matvec(model_->mix[l], below);
                axpy(1.0, az, z);
            }
            Vec bz = matvec(model_->recur[l], prev_[l]);
            axpy(1.0, bz, z);
            for (double& x : z) x = std::tanh(x);

            if (hooks) {
                auto it = hooks->replace.find({l, position_});
                if (it != hooks->replace.end()) {
                    if (it->second.size() != dims.d)
                        throw HookOutOfRange("replacement dimension mismatch");
                    z = it->second;
                }
                if (position_ >= hooks->from_position) {
                    for (const auto& [layer, fn] : hooks->layer_transforms) {
                        if (layer >= dims.n_layers)
                            throw HookOutOfRange("transform layer out of range");
                        if (layer == l) z = fn(z, position_);
                    }
                }
            }
            current_[l] = z;
            below = std::move(z);
        }
        prev_ = current_;
        ++position_;
        return current_;
    }

    const std::vector<Vec>& column() const { return current_; }
    std::size_t position() const { return position_; }

  private:
    const ToyModel* model_;
    std::vector<Vec> prev_;
    std::vector<Vec> current_;
    std::size_t position_;
};

/// Full forward pass with optional interventions; captures every hidden
/// state. With empty hooks this is the plain forward pass.
inline ActivationTrace forward_with_hooks(const ToyModel& model,
                                          const InputSequence& input,
                                          const Hooks* hooks = nullptr) {
    std::vector<Vec> embeds = model.embed(input);
    if (embeds.empty()) throw InvalidArgument("forward: empty input");
    if (hooks) {
        for (const auto& [key, value] : hooks->replace) {
            if (key.first >= model.dims.n_layers || key.second >= embeds.size())
                throw HookOutOfRange("replacement outside layer/position range");
        }
        for (const auto& [layer, fn] : hooks->layer_transforms)
            if (layer >= model.dims.n_layers)
                throw HookOutOfRange("transform layer out of range");
    }

    ActivationTrace trace;
    trace.tokens = model.full_tokens(input);
    trace.layers.assign(model.dims.n_layers, Mat(embeds.size(), model.dims.d));
    ForwardCursor cursor(model);
    for (std::size_t t = 0; t < embeds.size(); ++t) {
        const auto& column = cursor.step(embeds[t], hooks);
        for (std::size_t l = 0; l < model.dims.n_layers; ++l)
            for (std::size_t j = 0; j < model.dims.d; ++j)
                trace.layers[l](t, j) = column[l][j];
    }
    return trace;
}

/// Greedy decoding; never throws on budget exhaustion (the caller decides).
inline Generation generate_raw(const ToyModel& model, const InputSequence& prompt,
                               std::size_t max_len, const Hooks* hooks = nullptr) {
    std::vector<Vec> embeds = model.embed(prompt);
    if (embeds.empty()) throw InvalidArgument("generate: empty prompt");
    ForwardCursor cursor(model);
    Vec last_state;
    for (const Vec& e : embeds) last_state = cursor.step(e, hooks).back();

    Generation gen;
    for (std::size_t step = 0; step < max_len; ++step) {
        const std::int32_t tok = model.argmax_token(last_state);
        gen.response.push_back(tok);
        if (tok == kEosId) {
            gen.complete = true;
            break;
        }
        Vec e(model.dims.d);
        for (std::size_t j = 0; j < model.dims.d; ++j)
            e[j] = model.embedding(static_cast<std::size_t>(tok), j);
        last_state = cursor.step(e, hooks).back();
    }
    return gen;
}

/// Spans of the structured response relative to the full sequence
/// (prompt_len + response offsets); sentinels excluded.
inline SpanAnnotation parse_structured(const std::vector<std::int32_t>& response,
                                       std::size_t prompt_len) {
    SpanAnnotation spans;
    std::size_t i = 0;
    const std::size_t n = response.size();
    auto find_next = [&](std::int32_t id, std::size_t from) {
        for (std::size_t k = from; k < n; ++k)
            if (response[k] == id) return k;
        return n;
    };
    const std::size_t r = find_next(kReasoningId, 0);
    const std::size_t a = find_next(kAnswerId, 0);
    const std::size_t e = find_next(kEosId, 0);
    if (r < n) {
        const std::size_t stop = std::min(a, e);
        if (r + 1 < stop)
            spans.reasoning = {prompt_len + r + 1, prompt_len + stop};
    }
    if (a < n) {
        const std::size_t stop = std::min(e, n);
        if (a + 1 < stop)
            spans.answer = {prompt_len + a + 1, prompt_len + stop};
    }
    (void)i;
    return spans;
}

struct StructuredOutput {
    std::vector<std::int32_t> response;
    SpanAnnotation spans;  // relative to prompt + response
};

/// Greedy structured generation; exhausting the budget without <eos> is an
/// error here (harness callers use generate_raw and score truncations).
inline StructuredOutput generate_structured(const ToyModel& model,
                                            const InputSequence& prompt,
                                            std::size_t max_len,
                                            const Hooks* hooks = nullptr) {
    Generation gen = generate_raw(model, prompt, max_len, hooks);
    if (!gen.complete) throw MaxLenExceeded("generate_structured");
    const std::size_t prompt_len = model.full_tokens(prompt).size();
    StructuredOutput out;
    out.spans = parse_structured(gen.response, prompt_len);
    out.response = std::move(gen.response);
    return out;
}

}  // namespace steerlab::toy
