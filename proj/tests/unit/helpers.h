#pragma once

#include <cmath>
#include <vector>

#include "cgra/model.h"
#include "cgra/rng.h"
#include "cgra/tensor.h"
#include "cgra/tokenizer.h"

namespace testutil {

using cgra::Matrix;
using cgra::Real;

inline Matrix random_matrix(cgra::Rng& rng, std::size_t r, std::size_t c, Real sd = 1.0) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = sd * rng.normal();
    return m;
}

inline cgra::ModelConfig tiny_config(std::uint64_t seed = 5) {
    cgra::ModelConfig c;
    c.layers = 2;
    c.hidden = 8;
    c.heads = 2;
    c.ffn_mult = 2;
    c.max_len = 24;
    c.vocab_size = 20;
    c.lora_rank = 2;
    c.lora_alpha = 4.0;
    c.max_rel_distance = 3;
    c.init_std = 0.3;
    c.seed = seed;
    return c;
}

// [CLS] q... [SEP] c... [SEP] with random ids, some boosted/flagged
// context positions and a gold span inside the context.
inline cgra::TokenizedExample random_example(cgra::Rng& rng, int q_len, int c_len, int vocab) {
    cgra::TokenizedExample ex;
    ex.id = "rand";
    auto push = [&](int id, cgra::Segment s) {
        ex.token_ids.push_back(id);
        ex.segments.push_back(s);
        ex.word_index.push_back(-1);
    };
    push(2, cgra::Segment::kSpecial);
    for (int i = 0; i < q_len; ++i) push(4 + static_cast<int>(rng.uniform_index(vocab - 4)), cgra::Segment::kQuestion);
    push(3, cgra::Segment::kSpecial);
    const int ctx0 = static_cast<int>(ex.token_ids.size());
    for (int i = 0; i < c_len; ++i) push(4 + static_cast<int>(rng.uniform_index(vocab - 4)), cgra::Segment::kContext);
    push(3, cgra::Segment::kSpecial);
    ex.boost.assign(ex.size(), 1.0);
    ex.concept_flags.assign(ex.size(), 0);
    for (int i = ctx0; i < ctx0 + c_len; ++i) {
        if (rng.uniform() < 0.3) {
            ex.boost[static_cast<std::size_t>(i)] = 1.0 + 2.0 * rng.uniform();
            ex.concept_flags[static_cast<std::size_t>(i)] = 1;
        }
    }
    const int s = ctx0 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(c_len)));
    const int e = std::min(ctx0 + c_len - 1, s + static_cast<int>(rng.uniform_index(3)));
    ex.gold_span = cgra::TokenSpan{s, e};
    return ex;
}

inline Real max_abs(const std::vector<Real>& a, const std::vector<Real>& b) {
    Real m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace testutil
