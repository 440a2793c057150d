#include <cmath>
#include <stdexcept>

#include "cgra/kernels.h"
#include "cgra/model.h"

namespace cgra {

namespace kn = kernels::active;

namespace {

// y = x·Wᵀ + s·(x·Aᵀ)·Bᵀ;  u receives x·Aᵀ.
void lora_forward(const LoraLinear& lin, const Matrix& x, bool use_lora, Real scale, Matrix& y,
                  Matrix& u) {
    kn::matmul_nt(x, lin.base.value, y);
    if (!use_lora) {
        u = Matrix();
        return;
    }
    kn::matmul_nt(x, lin.a.value, u);
    Matrix t;
    kn::matmul_nt(u, lin.b.value, t);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += scale * t[i];
}

// Accumulates dx and the adapter gradients. The base matrix gets none.
void lora_backward(LoraLinear& lin, const Matrix& x, const Matrix& u, const Matrix& dy,
                   bool use_lora, Real scale, Matrix& dx) {
    kn::matmul_nn(dy, lin.base.value, dx, /*accumulate=*/true);
    if (!use_lora) return;
    Matrix gb;
    kn::matmul_tn(dy, u, gb);
    for (std::size_t i = 0; i < gb.size(); ++i) lin.b.grad[i] += scale * gb[i];
    Matrix du;
    kn::matmul_nn(dy, lin.b.value, du);
    for (std::size_t i = 0; i < du.size(); ++i) du[i] *= scale;
    kn::matmul_tn(du, x, lin.a.grad, /*accumulate=*/true);
    kn::matmul_nn(du, lin.a.value, dx, /*accumulate=*/true);
}

void check_finite(const Matrix& h, const std::string& where) {
    if (!all_finite(h)) throw std::runtime_error("non-finite hidden state after " + where);
}

}  // namespace

Matrix Model::embed(std::span<const int> token_ids, std::span<const std::uint8_t> flags) const {
    const std::size_t len = token_ids.size();
    const auto d = static_cast<std::size_t>(cfg_.hidden);
    if (flags.size() != len) throw std::invalid_argument("embed: flag length != token count");
    if (len > static_cast<std::size_t>(cfg_.max_len)) {
        throw std::invalid_argument("embed: sequence length " + std::to_string(len) +
                                    " exceeds max_len " + std::to_string(cfg_.max_len));
    }
    // W_d·d_s, shared by every flagged position.
    std::vector<Real> domain(d, 0.0);
    for (std::size_t a = 0; a < d; ++a) {
        Real acc = 0.0;
        for (std::size_t b = 0; b < d; ++b) acc += embedding.domain_proj.value(a, b) * embedding.domain_vec.value[b];
        domain[a] = acc;
    }
    Matrix e(len, d);
    for (std::size_t i = 0; i < len; ++i) {
        const int id = token_ids[i];
        if (id < 0 || id >= cfg_.vocab_size) {
            throw std::out_of_range("embed: token id " + std::to_string(id) + " outside vocab of " +
                                    std::to_string(cfg_.vocab_size));
        }
        const auto tok = embedding.token.value.row(static_cast<std::size_t>(id));
        const auto pos = embedding.position.value.row(i);
        for (std::size_t c = 0; c < d; ++c) {
            e(i, c) = tok[c] + pos[c];
            if (flags[i]) e(i, c) += domain[c];
        }
    }
    return e;
}

std::vector<Real> Model::effective_boost(const TokenizedExample& ex) const {
    if (ex.boost.size() != ex.size()) {
        throw std::invalid_argument("boost vector length " + std::to_string(ex.boost.size()) +
                                    " != sequence length " + std::to_string(ex.size()));
    }
    if (!cfg_.use_concepts || cfg_.boost_mode == BoostMode::kOff) return std::vector<Real>(ex.size(), 1.0);
    return {ex.boost.begin(), ex.boost.end()};
}

std::vector<std::uint8_t> Model::effective_flags(const TokenizedExample& ex) const {
    if (ex.concept_flags.size() != ex.size()) {
        throw std::invalid_argument("concept flag length != sequence length");
    }
    if (!cfg_.use_concepts) return std::vector<std::uint8_t>(ex.size(), 0);
    return ex.concept_flags;
}

Matrix Model::disentangled_attention(std::size_t l, const Matrix& h, std::span<const Real> boost,
                                     ForwardCache::Layer* cache) const {
    const LayerParams& lp = layers.at(l);
    const std::size_t len = h.rows();
    const auto hd = static_cast<std::size_t>(cfg_.head_dim());
    const int span = cfg_.max_rel_distance;
    const Real scale = 1.0 / std::sqrt(3.0 * static_cast<Real>(hd));
    const Real ls = cfg_.lora_scale();

    ForwardCache::Layer local;
    ForwardCache::Layer& c = cache ? *cache : local;
    c.input = h;
    lora_forward(lp.q, h, cfg_.use_lora, ls, c.q, c.q_u);
    lora_forward(lp.k, h, cfg_.use_lora, ls, c.k, c.k_u);
    lora_forward(lp.v, h, cfg_.use_lora, ls, c.v, c.v_u);
    kn::matmul_nt(lp.rel.value, lp.pos_q.value, c.qr);
    kn::matmul_nt(lp.rel.value, lp.pos_k.value, c.kr);

    c.attn_boost.clear();
    if (cfg_.boost_mode == BoostMode::kAttentionScore) c.attn_boost.assign(boost.begin(), boost.end());

    c.probs.assign(static_cast<std::size_t>(cfg_.heads), Matrix());
    c.ctx = Matrix(len, h.cols());
    for (std::size_t head = 0; head < c.probs.size(); ++head) {
        Matrix& p = c.probs[head];
        kn::disentangled_scores(c.q, c.k, c.qr, c.kr, head * hd, hd, span, scale, p);
        if (!c.attn_boost.empty()) {
            for (std::size_t i = 0; i < len; ++i) {
                for (std::size_t j = 0; j < len; ++j) p(i, j) *= c.attn_boost[j];
            }
        }
        kn::softmax_rows(p);
        kn::attend_values(p, c.v, head * hd, hd, c.ctx);
    }
    Matrix attn;
    lora_forward(lp.o, c.ctx, cfg_.use_lora, ls, attn, c.o_u);
    for (std::size_t i = 0; i < attn.size(); ++i) attn[i] += h[i];
    kn::layer_norm_rows(attn, c.attn_norm, c.attn_rstd, cfg_.layer_norm_eps);
    return c.attn_norm;
}

Matrix Model::encode(const TokenizedExample& ex, ForwardCache* cache) const {
    if (ex.segments.size() != ex.size()) throw std::invalid_argument("segment length != sequence length");
    const std::vector<Real> boost = effective_boost(ex);
    const std::vector<std::uint8_t> flags = effective_flags(ex);
    const std::vector<Real> ones(ex.size(), 1.0);
    const std::vector<Real>& gate_m = cfg_.boost_mode == BoostMode::kResidualGate ? boost : ones;
    const bool debug_checks =
#ifndef NDEBUG
        true;
#else
        cfg_.check_finite;
#endif

    ForwardCache local;
    ForwardCache& fc = cache ? *cache : local;
    fc.token_ids = ex.token_ids;
    fc.flags = flags;
    fc.boost = boost;
    fc.layers.assign(layers.size(), ForwardCache::Layer{});

    const Matrix e = embed(ex.token_ids, flags);
    kn::layer_norm_rows(e, fc.embed_norm, fc.embed_rstd, cfg_.layer_norm_eps);
    Matrix h = fc.embed_norm;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        ForwardCache::Layer& c = fc.layers[l];
        const Matrix h1 = disentangled_attention(l, h, boost, &c);
        if (cfg_.gate_mode != GateMode::kOff) {
            gating::GateOutput g = gating::gate_forward(h1, gate_m, gate_for(l), cfg_.residual_skip);
            c.gated = std::move(g.r);
            c.gate = std::move(g.cache);
        } else {
            c.gated = h1;
            c.gate.reset();
        }
        const LayerParams& lp = layers[l];
        kn::matmul_nt(c.gated, lp.ffn_in.value, c.ffn_pre);
        kn::gelu(c.ffn_pre, c.ffn_act);
        Matrix out;
        kn::matmul_nt(c.ffn_act, lp.ffn_out.value, out);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += c.gated[i];
        kn::layer_norm_rows(out, c.out_norm, c.out_rstd, cfg_.layer_norm_eps);
        h = c.out_norm;
        if (debug_checks) check_finite(h, "layer " + std::to_string(l));
    }
    if (!cache) fc.layers.clear();
    return h;
}

SpanLogits Model::span_logits(const Matrix& hidden) const {
    SpanLogits out;
    out.start.assign(hidden.rows(), 0.0);
    out.end.assign(hidden.rows(), 0.0);
    for (std::size_t i = 0; i < hidden.rows(); ++i) {
        Real s = heads.start_b.value[0], e = heads.end_b.value[0];
        for (std::size_t c = 0; c < hidden.cols(); ++c) {
            s += hidden(i, c) * heads.start_w.value[c];
            e += hidden(i, c) * heads.end_w.value[c];
        }
        out.start[i] = s;
        out.end[i] = e;
    }
    return out;
}

Matrix Model::layer_backward(std::size_t l, const ForwardCache::Layer& c, const Matrix& dout) {
    LayerParams& lp = layers[l];
    const std::size_t len = dout.rows();
    const auto hd = static_cast<std::size_t>(cfg_.head_dim());
    const int span = cfg_.max_rel_distance;
    const Real scale = 1.0 / std::sqrt(3.0 * static_cast<Real>(hd));
    const Real ls = cfg_.lora_scale();

    // Output LayerNorm and the FFN branch.
    Matrix dsum;
    kn::layer_norm_backward(c.out_norm, c.out_rstd, dout, dsum);
    Matrix dact;
    kn::matmul_nn(dsum, lp.ffn_out.value, dact);
    Matrix dpre;
    kn::gelu_backward(c.ffn_pre, dact, dpre);
    Matrix dgated = dsum;
    kn::matmul_nn(dpre, lp.ffn_in.value, dgated, /*accumulate=*/true);

    Matrix dh1;
    if (c.gate) {
        const gating::GateParams gp = gate_for(l);
        gating::GateGrads gg = gating::gate_backward(dgated, *c.gate, gp);
        Param& gw = cfg_.gate_mode == GateMode::kPerLayer ? lp.gate_w : shared_gate_w;
        Param& gb = cfg_.gate_mode == GateMode::kPerLayer ? lp.gate_b : shared_gate_b;
        for (std::size_t i = 0; i < gg.dw.size(); ++i) gw.grad[i] += gg.dw[i];
        for (std::size_t i = 0; i < gg.db.size(); ++i) gb.grad[i] += gg.db[i];
        dh1 = std::move(gg.dx);
    } else {
        dh1 = std::move(dgated);
    }

    // Attention LayerNorm; the residual passes dh straight through.
    Matrix dattn;
    kn::layer_norm_backward(c.attn_norm, c.attn_rstd, dh1, dattn);
    Matrix dh = dattn;

    Matrix dctx(len, dout.cols());
    lora_backward(lp.o, c.ctx, c.o_u, dattn, cfg_.use_lora, ls, dctx);

    Matrix dq(len, dout.cols()), dk(len, dout.cols()), dv(len, dout.cols());
    for (std::size_t head = 0; head < c.probs.size(); ++head) {
        Matrix dp;
        kn::attend_values_backward(c.probs[head], c.v, dctx, head * hd, hd, dp, dv);
        kn::softmax_backward_rows(c.probs[head], dp);
        if (!c.attn_boost.empty()) {
            for (std::size_t i = 0; i < len; ++i) {
                for (std::size_t j = 0; j < len; ++j) dp(i, j) *= c.attn_boost[j];
            }
        }
        kn::disentangled_scores_backward(dp, c.q, c.k, c.qr, c.kr, head * hd, hd, span, scale, dq, dk);
    }
    lora_backward(lp.q, c.input, c.q_u, dq, cfg_.use_lora, ls, dh);
    lora_backward(lp.k, c.input, c.k_u, dk, cfg_.use_lora, ls, dh);
    lora_backward(lp.v, c.input, c.v_u, dv, cfg_.use_lora, ls, dh);
    return dh;
}

Matrix Model::backward(const ForwardCache& cache, const Matrix& hidden, const SpanLogits& dlogits) {
    const std::size_t len = hidden.rows(), d = hidden.cols();
    if (dlogits.start.size() != len || dlogits.end.size() != len) {
        throw std::invalid_argument("backward: logit gradient length mismatch");
    }
    if (cache.layers.size() != layers.size()) throw std::invalid_argument("backward: cache has no layers");

    Matrix dh(len, d);
    for (std::size_t i = 0; i < len; ++i) {
        const Real gs = dlogits.start[i], ge = dlogits.end[i];
        heads.start_b.grad[0] += gs;
        heads.end_b.grad[0] += ge;
        for (std::size_t c = 0; c < d; ++c) {
            heads.start_w.grad[c] += gs * hidden(i, c);
            heads.end_w.grad[c] += ge * hidden(i, c);
            dh(i, c) = gs * heads.start_w.value[c] + ge * heads.end_w.value[c];
        }
    }
    for (std::size_t l = layers.size(); l-- > 0;) dh = layer_backward(l, cache.layers[l], dh);

    Matrix de;
    kn::layer_norm_backward(cache.embed_norm, cache.embed_rstd, dh, de);

    // Flagged rows received W_d·d_s.
    Param& wd = embedding.domain_proj;
    Param& ds = embedding.domain_vec;
    for (std::size_t i = 0; i < len; ++i) {
        if (!cache.flags[i]) continue;
        for (std::size_t a = 0; a < d; ++a) {
            const Real g = de(i, a);
            for (std::size_t b = 0; b < d; ++b) {
                wd.grad(a, b) += g * ds.value[b];
                ds.grad[b] += g * wd.value(a, b);
            }
        }
    }
    return de;
}

}  // namespace cgra
