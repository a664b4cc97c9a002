#pragma once

#include <atomic>
#include <string>
#include <vector>

#include "steerlab/toymodel.hpp"

namespace steerlab::toy {

/// One association to plant: a prompt, the full structured response to
/// teach, and where the answer tokens sit inside that response.
struct PlantItem {
    std::string id;
    InputSequence prompt;
    std::vector<std::int32_t> response;
    TokenRange answer_in_response;
};

struct PlantOptions {
    std::size_t steps = 500;
    double lr = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double min_answer_reproduction = 0.95;
    std::size_t max_len = 48;
    std::size_t workers = 1;
};

namespace detail {

inline Vec softmax(const Vec& logits) {
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    Vec p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& x : p) x /= z;
    return p;
}

inline double cross_entropy(const Vec& logits, std::int32_t target) {
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    double z = 0.0;
    for (double x : logits) z += std::exp(x - mx);
    return std::log(z) + mx - logits[static_cast<std::size_t>(target)];
}

// Fixed-size chunks keep the gradient reduction order independent of the
// worker count, so results are bit-identical for any `workers`.
inline constexpr std::size_t kGradChunk = 256;

}  // namespace detail

/// Whether greedy decoding reproduces the item's answer-span tokens exactly.
inline bool reproduces_answer(const ToyModel& model, const PlantItem& item,
                              std::size_t max_len) {
    Generation gen = generate_raw(model, item.prompt, max_len);
    SpanAnnotation spans = parse_structured(gen.response, 0);
    const TokenRange& want = item.answer_in_response;
    if (spans.answer.empty() || want.empty()) return false;
    if (spans.answer.size() != want.size()) return false;
    for (std::size_t i = 0; i < want.size(); ++i) {
        if (gen.response[spans.answer.begin + i] !=
            item.response[want.begin + i])
            return false;
    }
    return true;
}

inline double answer_reproduction_rate(const ToyModel& model,
                                       const std::vector<PlantItem>& items,
                                       std::size_t max_len) {
    std::size_t good = 0;
    for (const PlantItem& item : items)
        if (reproduces_answer(model, item, max_len)) ++good;
    return static_cast<double>(good) / static_cast<double>(items.size());
}

/// Train the readout on next-token prediction over the response tokens of
/// every item; recurrent layers stay frozen, so hidden states are computed
/// once and the objective is convex in the readout.
inline ToyModel plant_facts(const ToyModel& model,
                            const std::vector<PlantItem>& items,
                            const PlantOptions& opt) {
    if (items.empty()) throw InvalidArgument("plant_facts: no items");
    ToyModel out = model;
    if (opt.steps == 0) return out;

    const std::size_t d = model.dims.d;
    const std::size_t vocab = model.dims.vocab_size;

    // Collect (state, next-token) pairs: the state at position t predicts
    // the response token entering at t + 1.
    std::vector<Vec> states;
    std::vector<std::int32_t> targets;
    for (const PlantItem& item : items) {
        std::vector<Vec> embeds = out.embed(item.prompt);
        ForwardCursor cursor(out);
        Vec last;
        for (const Vec& e : embeds) last = cursor.step(e).back();
        for (std::size_t j = 0; j < item.response.size(); ++j) {
            const std::int32_t tok = item.response[j];
            states.push_back(last);
            targets.push_back(tok);
            if (j + 1 == item.response.size()) break;
            Vec e(d);
            for (std::size_t c = 0; c < d; ++c)
                e[c] = out.embedding(static_cast<std::size_t>(tok), c);
            last = cursor.step(e).back();
        }
    }
    const std::size_t P = states.size();
    const std::size_t n_chunks = (P + detail::kGradChunk - 1) / detail::kGradChunk;

    Mat moment1(vocab, d);
    Mat moment2(vocab, d);
    std::vector<Mat> partials(n_chunks, Mat(vocab, d));

    for (std::size_t step = 0; step < opt.steps; ++step) {
        auto chunk_grad = [&](std::size_t chunk) {
            Mat& g = partials[chunk];
            std::fill(g.data.begin(), g.data.end(), 0.0);
            const std::size_t lo = chunk * detail::kGradChunk;
            const std::size_t hi = std::min(P, lo + detail::kGradChunk);
            for (std::size_t p = lo; p < hi; ++p) {
                Vec logits = matvec(out.readout, states[p]);
                Vec prob = detail::softmax(logits);
                prob[static_cast<std::size_t>(targets[p])] -= 1.0;
                for (std::size_t v = 0; v < vocab; ++v) {
                    const double pv = prob[v];
                    if (pv == 0.0) continue;
                    double* grow = g.row_ptr(v);
                    const double* srow = states[p].data();
                    for (std::size_t c = 0; c < d; ++c) grow[c] += pv * srow[c];
                }
            }
        };

        if (opt.workers <= 1 || n_chunks <= 1) {
            for (std::size_t chunk = 0; chunk < n_chunks; ++chunk) chunk_grad(chunk);
        } else {
            std::atomic<std::size_t> next{0};
            auto worker = [&]() {
                for (;;) {
                    const std::size_t chunk = next.fetch_add(1);
                    if (chunk >= n_chunks) return;
                    chunk_grad(chunk);
                }
            };
            std::vector<std::thread> pool;
            const std::size_t n_threads = std::min(opt.workers, n_chunks);
            pool.reserve(n_threads);
            for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
            for (std::thread& t : pool) t.join();
        }

        // reduce in chunk order, then a full-batch Adam update
        const double inv = 1.0 / static_cast<double>(P);
        const double t = static_cast<double>(step + 1);
        const double bias1 = 1.0 - std::pow(opt.beta1, t);
        const double bias2 = 1.0 - std::pow(opt.beta2, t);
        for (std::size_t i = 0; i < moment1.data.size(); ++i) {
            double g = 0.0;
            for (std::size_t chunk = 0; chunk < n_chunks; ++chunk)
                g += partials[chunk].data[i];
            g *= inv;
            moment1.data[i] = opt.beta1 * moment1.data[i] + (1.0 - opt.beta1) * g;
            moment2.data[i] = opt.beta2 * moment2.data[i] + (1.0 - opt.beta2) * g * g;
            const double mhat = moment1.data[i] / bias1;
            const double vhat = moment2.data[i] / bias2;
            out.readout.data[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.adam_eps);
        }
    }

    const double rate = answer_reproduction_rate(out, items, opt.max_len);
    if (rate < opt.min_answer_reproduction)
        throw DidNotConverge("plant_facts: answer reproduction " +
                             std::to_string(rate));
    return out;
}

inline ToyModel plant_facts(const ToyModel& model,
                            const std::vector<PlantItem>& items,
                            std::size_t steps, double lr) {
    PlantOptions opt;
    opt.steps = steps;
    opt.lr = lr;
    return plant_facts(model, items, opt);
}

}  // namespace steerlab::toy
