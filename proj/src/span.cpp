#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cgra/model.h"

namespace cgra {

namespace {

// −log softmax(x)[gold] and its gradient softmax(x) − onehot(gold).
Real cross_entropy(std::span<const Real> x, int gold, std::vector<Real>& grad) {
    const Real mx = *std::max_element(x.begin(), x.end());
    Real sum = 0.0;
    for (Real v : x) sum += std::exp(v - mx);
    const Real lse = mx + std::log(sum);
    grad.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) grad[i] = std::exp(x[i] - lse);
    grad[static_cast<std::size_t>(gold)] -= 1.0;
    return lse - x[static_cast<std::size_t>(gold)];
}

}  // namespace

SpanLoss span_loss(std::span<const Real> start_logits, std::span<const Real> end_logits,
                   TokenSpan gold) {
    const auto len = static_cast<int>(start_logits.size());
    if (len == 0 || end_logits.size() != start_logits.size()) {
        throw std::invalid_argument("span_loss: logits must be non-empty and of equal length");
    }
    if (gold.start < 0 || gold.end >= len || gold.start > gold.end) {
        throw std::invalid_argument("span_loss: gold span [" + std::to_string(gold.start) + ", " +
                                    std::to_string(gold.end) + "] invalid for length " +
                                    std::to_string(len));
    }
    SpanLoss out;
    out.loss = cross_entropy(start_logits, gold.start, out.grad.start) +
               cross_entropy(end_logits, gold.end, out.grad.end);
    return out;
}

SpanPrediction predict_span(std::span<const Real> start_logits, std::span<const Real> end_logits,
                            const TokenizedExample& ex, int max_answer_len) {
    const std::size_t len = ex.size();
    if (start_logits.size() != len || end_logits.size() != len) {
        throw std::invalid_argument("predict_span: logits length != sequence length");
    }
    if (max_answer_len < 1) throw std::invalid_argument("predict_span: max_answer_len must be >= 1");

    SpanPrediction best;
    bool found = false;
    for (std::size_t s = 0; s < len; ++s) {
        if (ex.segments[s] != Segment::kContext) continue;
        const std::size_t last = std::min(len, s + static_cast<std::size_t>(max_answer_len));
        for (std::size_t e = s; e < last; ++e) {
            if (ex.segments[e] != Segment::kContext) continue;
            const Real score = start_logits[s] + end_logits[e];
            // Strict comparison keeps the first (smallest s, then e) maximum.
            if (!found || score > best.score) {
                best = {static_cast<int>(s), static_cast<int>(e), score};
                found = true;
            }
        }
    }
    if (!found) throw std::invalid_argument("no candidate span");
    return best;
}

}  // namespace cgra
