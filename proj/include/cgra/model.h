#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cgra/gating.h"
#include "cgra/rng.h"
#include "cgra/tensor.h"
#include "cgra/tokenizer.h"

namespace cgra {

enum class GateMode : std::uint8_t { kShared, kPerLayer, kOff };
enum class BoostMode : std::uint8_t { kResidualGate, kAttentionScore, kOff };

std::string to_string(GateMode m);
std::string to_string(BoostMode m);
GateMode gate_mode_from_string(std::string_view s);
BoostMode boost_mode_from_string(std::string_view s);

struct ModelConfig {
    int layers = 2;
    int hidden = 32;
    int heads = 4;
    int ffn_mult = 4;
    int max_len = kDefaultMaxLen;
    int vocab_size = 512;
    int lora_rank = 8;
    double lora_alpha = 16.0;
    int max_rel_distance = 8;
    GateMode gate_mode = GateMode::kShared;
    BoostMode boost_mode = BoostMode::kResidualGate;
    bool residual_skip = true;
    // Dictionary signals (boost vector and embedding flags) reach the model.
    bool use_concepts = true;
    // LoRA path on; off gives the frozen base model.
    bool use_lora = true;
    double init_std = 0.02;
    std::uint64_t seed = 1;
    double layer_norm_eps = 1e-5;
    // Abort on the first non-finite hidden state.
    bool check_finite = false;

    int head_dim() const noexcept { return hidden / heads; }
    double lora_scale() const noexcept { return lora_alpha / lora_rank; }
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

enum class ParamGroup : std::uint8_t { kFrozen, kLora, kGates, kHeads, kEmbedDomain };
std::string to_string(ParamGroup g);

struct Param {
    std::string name;
    ParamGroup group = ParamGroup::kFrozen;
    Matrix value;
    Matrix grad;

    void init(std::string n, ParamGroup g, std::size_t rows, std::size_t cols);
};

// Frozen projection W (d_out×d_in) with a low-rank update: W' = W + (α/r)·B·A.
struct LoraLinear {
    Param base;  // d_out × d_in
    Param a;     // r × d_in
    Param b;     // d_out × r
};

// W·x + (α/r)·B·(A·x); W is never modified.
std::vector<Real> lora_apply(const Matrix& base, const Matrix& a, const Matrix& b, double alpha,
                             std::span<const Real> x);

struct EmbeddingParams {
    Param token;       // vocab × d
    Param position;    // max_len × d
    Param domain_vec;  // 1 × d
    Param domain_proj; // d × d
};

struct LayerParams {
    Param rel;    // (2·span+1) × d relative position table
    Param pos_q;  // d × d projection of rel for position→content
    Param pos_k;  // d × d projection of rel for content→position
    LoraLinear q, k, v, o;
    Param ffn_in;   // (ffn_mult·d) × d
    Param ffn_out;  // d × (ffn_mult·d)
    Param gate_w;  // d × d (per-layer gate mode only)
    Param gate_b;  // 1 × d
};

struct SpanHeads {
    Param start_w;  // 1 × d
    Param start_b;  // 1 × 1
    Param end_w;
    Param end_b;
};

struct ParameterReport {
    std::size_t total = 0;
    std::size_t trainable = 0;
    std::size_t frozen = 0;
    std::size_t lora = 0;
    std::size_t gates = 0;
    std::size_t heads = 0;
    std::size_t embed_domain = 0;
};

// Closed-form parameter accounting from the configuration alone.
ParameterReport count_parameters(const ModelConfig& cfg);

class Model;

// Everything the backward pass needs from one forward pass.
struct ForwardCache {
    struct Layer {
        Matrix input;
        Matrix q, k, v;
        std::vector<Real> attn_boost;  // column multipliers, empty unless ATTENTION_SCORE
        Matrix q_u, k_u, v_u, o_u;  // LoRA intermediates x·Aᵀ
        Matrix qr, kr;
        std::vector<Matrix> probs;  // per head, after softmax
        Matrix ctx;
        Matrix attn_norm;
        std::vector<Real> attn_rstd;
        std::optional<gating::GateCache> gate;
        Matrix gated;
        Matrix ffn_pre;
        Matrix ffn_act;
        Matrix out_norm;
        std::vector<Real> out_rstd;
    };
    std::vector<Layer> layers;
    Matrix embed_norm;
    std::vector<Real> embed_rstd;
    std::vector<std::uint8_t> flags;
    std::vector<Real> boost;
    std::vector<int> token_ids;
};

struct SpanLogits {
    std::vector<Real> start;
    std::vector<Real> end;
};

class Model {
public:
    Model() = default;
    explicit Model(const ModelConfig& cfg);

    const ModelConfig& config() const noexcept { return cfg_; }
    // Switches runtime modes (ablations, stages). Dimensions must match.
    void set_modes(GateMode gate, BoostMode boost, bool residual_skip, bool use_concepts);
    void set_use_concepts(bool on) { cfg_.use_concepts = on; }
    void set_use_lora(bool on) { cfg_.use_lora = on; }

    // e′_i = e_i + P_i + [flag_i]·W_d·d_s, before the embedding LayerNorm.
    Matrix embed(std::span<const int> token_ids, std::span<const std::uint8_t> flags) const;

    // Signals the model actually sees under the current modes.
    std::vector<Real> effective_boost(const TokenizedExample& ex) const;
    std::vector<std::uint8_t> effective_flags(const TokenizedExample& ex) const;

    // One attention sub-layer: LayerNorm(h + Attention(h)).
    Matrix disentangled_attention(std::size_t layer, const Matrix& h, std::span<const Real> boost,
                                  ForwardCache::Layer* cache = nullptr) const;

    Matrix encode(const TokenizedExample& ex, ForwardCache* cache = nullptr) const;
    SpanLogits span_logits(const Matrix& hidden) const;

    // Accumulates parameter gradients for d(loss)/d(logits); returns
    // d(loss)/d(embedding output) for testing.
    Matrix backward(const ForwardCache& cache, const Matrix& hidden, const SpanLogits& dlogits);

    std::vector<Param*> parameters();
    std::vector<const Param*> parameters() const;
    Param* find_parameter(std::string_view name);
    void zero_grad();

    ParameterReport parameter_report() const;

    EmbeddingParams embedding;
    std::vector<LayerParams> layers;
    Param shared_gate_w;
    Param shared_gate_b;
    SpanHeads heads;

private:
    void init_parameters();
    gating::GateParams gate_for(std::size_t layer) const;
    Matrix layer_backward(std::size_t l, const ForwardCache::Layer& c, const Matrix& dout);

    ModelConfig cfg_{};
};

// Sum of start and end cross-entropies over all positions.
struct SpanLoss {
    Real loss = 0.0;
    SpanLogits grad;
};
SpanLoss span_loss(std::span<const Real> start_logits, std::span<const Real> end_logits,
                   TokenSpan gold);

struct SpanPrediction {
    int start = 0;
    int end = 0;
    Real score = 0.0;
    friend bool operator==(const SpanPrediction&, const SpanPrediction&) = default;
};

inline constexpr int kDefaultMaxAnswerLen = 30;

// Best (s, e) with s ≤ e, e − s < max_answer_len, both in the context
// segment, maximizing start[s] + end[e]; ties go to the smaller s, then e.
SpanPrediction predict_span(std::span<const Real> start_logits, std::span<const Real> end_logits,
                            const TokenizedExample& ex, int max_answer_len = kDefaultMaxAnswerLen);

}  // namespace cgra
