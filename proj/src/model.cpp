#include "cgra/model.h"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "cgra/error.h"

namespace cgra {

std::string to_string(GateMode m) {
    switch (m) {
        case GateMode::kShared: return "SHARED";
        case GateMode::kPerLayer: return "PER_LAYER";
        case GateMode::kOff: return "OFF";
    }
    return "?";
}

std::string to_string(BoostMode m) {
    switch (m) {
        case BoostMode::kResidualGate: return "RESIDUAL_GATE";
        case BoostMode::kAttentionScore: return "ATTENTION_SCORE";
        case BoostMode::kOff: return "OFF";
    }
    return "?";
}

GateMode gate_mode_from_string(std::string_view s) {
    if (s == "SHARED") return GateMode::kShared;
    if (s == "PER_LAYER") return GateMode::kPerLayer;
    if (s == "OFF") return GateMode::kOff;
    throw ValidationError("unknown gate_mode '" + std::string(s) + "'");
}

BoostMode boost_mode_from_string(std::string_view s) {
    if (s == "RESIDUAL_GATE") return BoostMode::kResidualGate;
    if (s == "ATTENTION_SCORE") return BoostMode::kAttentionScore;
    if (s == "OFF") return BoostMode::kOff;
    throw ValidationError("unknown boost_mode '" + std::string(s) + "'");
}

std::string to_string(ParamGroup g) {
    switch (g) {
        case ParamGroup::kFrozen: return "FROZEN";
        case ParamGroup::kLora: return "LORA";
        case ParamGroup::kGates: return "GATES";
        case ParamGroup::kHeads: return "HEADS";
        case ParamGroup::kEmbedDomain: return "EMBED_DOMAIN";
    }
    return "?";
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& m) { throw ValidationError("model config: " + m); };
    if (layers < 1) fail("layers must be >= 1");
    if (hidden < 1 || heads < 1) fail("hidden and heads must be >= 1");
    if (hidden % heads != 0) fail("hidden " + std::to_string(hidden) + " not divisible by heads " +
                                  std::to_string(heads));
    if (ffn_mult < 1) fail("ffn_mult must be >= 1");
    if (max_len < 4) fail("max_len must be >= 4");
    if (vocab_size < 5) fail("vocab_size must be >= 5");
    if (lora_rank < 1) fail("lora_rank must be >= 1");
    if (!(lora_alpha > 0.0)) fail("lora_alpha must be > 0");
    if (max_rel_distance < 1) fail("max_rel_distance must be >= 1");
    if (!(init_std > 0.0)) fail("init_std must be > 0");
    if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be > 0");
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"layers", c.layers},
            {"hidden", c.hidden},
            {"heads", c.heads},
            {"ffn_mult", c.ffn_mult},
            {"max_len", c.max_len},
            {"vocab_size", c.vocab_size},
            {"lora_rank", c.lora_rank},
            {"lora_alpha", c.lora_alpha},
            {"max_rel_distance", c.max_rel_distance},
            {"gate_mode", to_string(c.gate_mode)},
            {"boost_mode", to_string(c.boost_mode)},
            {"residual_skip", c.residual_skip},
            {"use_concepts", c.use_concepts},
            {"use_lora", c.use_lora},
            {"init_std", c.init_std},
            {"seed", c.seed},
            {"layer_norm_eps", c.layer_norm_eps},
            {"check_finite", c.check_finite}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("model config must be a JSON object");
    ModelConfig c;
    try {
        c.layers = j.value("layers", c.layers);
        c.hidden = j.value("hidden", c.hidden);
        c.heads = j.value("heads", c.heads);
        c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
        c.max_len = j.value("max_len", c.max_len);
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.lora_rank = j.value("lora_rank", c.lora_rank);
        c.lora_alpha = j.value("lora_alpha", c.lora_alpha);
        c.max_rel_distance = j.value("max_rel_distance", c.max_rel_distance);
        if (j.contains("gate_mode")) c.gate_mode = gate_mode_from_string(j.at("gate_mode").get<std::string>());
        if (j.contains("boost_mode")) c.boost_mode = boost_mode_from_string(j.at("boost_mode").get<std::string>());
        c.residual_skip = j.value("residual_skip", c.residual_skip);
        c.use_concepts = j.value("use_concepts", c.use_concepts);
        c.use_lora = j.value("use_lora", c.use_lora);
        c.init_std = j.value("init_std", c.init_std);
        c.seed = j.value("seed", c.seed);
        c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
        c.check_finite = j.value("check_finite", c.check_finite);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

void Param::init(std::string n, ParamGroup g, std::size_t rows, std::size_t cols) {
    name = std::move(n);
    group = g;
    value = Matrix(rows, cols);
    grad = Matrix(rows, cols);
}

std::vector<Real> lora_apply(const Matrix& base, const Matrix& a, const Matrix& b, double alpha,
                             std::span<const Real> x) {
    const std::size_t r = a.rows();
    if (r == 0) throw std::invalid_argument("lora_apply: rank must be >= 1");
    if (b.cols() != r) {
        throw std::invalid_argument("lora_apply: rank mismatch, A has " + std::to_string(r) +
                                    " rows but B has " + std::to_string(b.cols()) + " columns");
    }
    if (a.cols() != base.cols() || b.rows() != base.rows() || x.size() != base.cols()) {
        throw std::invalid_argument("lora_apply: shape mismatch");
    }
    const Real scale = alpha / static_cast<Real>(r);
    std::vector<Real> ax(r, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < x.size(); ++j) ax[i] += a(i, j) * x[j];
    }
    std::vector<Real> y(base.rows(), 0.0);
    for (std::size_t i = 0; i < base.rows(); ++i) {
        Real acc = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) acc += base(i, j) * x[j];
        Real low = 0.0;
        for (std::size_t p = 0; p < r; ++p) low += b(i, p) * ax[p];
        y[i] = acc + scale * low;
    }
    return y;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    init_parameters();
}

void Model::init_parameters() {
    const auto d = static_cast<std::size_t>(cfg_.hidden);
    const auto r = static_cast<std::size_t>(cfg_.lora_rank);
    const auto f = d * static_cast<std::size_t>(cfg_.ffn_mult);
    const auto rel_rows = static_cast<std::size_t>(2 * cfg_.max_rel_distance + 1);
    Rng rng(cfg_.seed);
    const Real sd = cfg_.init_std;
    auto randn = [&](Param& p) {
        for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = sd * rng.normal();
        round_to_f32(p.value);
    };

    embedding.token.init("embed.token", ParamGroup::kFrozen, static_cast<std::size_t>(cfg_.vocab_size), d);
    embedding.position.init("embed.position", ParamGroup::kFrozen, static_cast<std::size_t>(cfg_.max_len), d);
    embedding.domain_vec.init("embed.domain_vec", ParamGroup::kEmbedDomain, 1, d);
    embedding.domain_proj.init("embed.domain_proj", ParamGroup::kEmbedDomain, d, d);
    randn(embedding.token);
    randn(embedding.position);
    randn(embedding.domain_vec);
    for (std::size_t i = 0; i < d; ++i) embedding.domain_proj.value(i, i) = 1.0;

    // A ~ N(0, 1/d_in), the usual fan-in scaling; B starts at zero.
    const Real a_sd = 1.0 / std::sqrt(static_cast<Real>(d));
    auto lora = [&](LoraLinear& lin, const std::string& prefix, std::size_t out, std::size_t in) {
        lin.base.init(prefix + ".w", ParamGroup::kFrozen, out, in);
        lin.a.init(prefix + ".lora_a", ParamGroup::kLora, r, in);
        lin.b.init(prefix + ".lora_b", ParamGroup::kLora, out, r);
        randn(lin.base);
        for (std::size_t i = 0; i < lin.a.value.size(); ++i) lin.a.value[i] = a_sd * rng.normal();
        round_to_f32(lin.a.value);
    };

    layers.assign(static_cast<std::size_t>(cfg_.layers), LayerParams{});
    for (std::size_t l = 0; l < layers.size(); ++l) {
        LayerParams& lp = layers[l];
        const std::string pre = "layer" + std::to_string(l);
        lp.rel.init(pre + ".rel", ParamGroup::kFrozen, rel_rows, d);
        lp.pos_q.init(pre + ".pos_q", ParamGroup::kFrozen, d, d);
        lp.pos_k.init(pre + ".pos_k", ParamGroup::kFrozen, d, d);
        randn(lp.rel);
        randn(lp.pos_q);
        randn(lp.pos_k);
        lora(lp.q, pre + ".q", d, d);
        lora(lp.k, pre + ".k", d, d);
        lora(lp.v, pre + ".v", d, d);
        lora(lp.o, pre + ".o", d, d);
        lp.ffn_in.init(pre + ".ffn_in", ParamGroup::kFrozen, f, d);
        lp.ffn_out.init(pre + ".ffn_out", ParamGroup::kFrozen, d, f);
        randn(lp.ffn_in);
        randn(lp.ffn_out);
        if (cfg_.gate_mode == GateMode::kPerLayer) {
            lp.gate_w.init(pre + ".gate_w", ParamGroup::kGates, d, d);
            lp.gate_b.init(pre + ".gate_b", ParamGroup::kGates, 1, d);
            randn(lp.gate_w);
        }
    }
    // The shared gate always exists so a checkpoint can be re-evaluated
    // under any gate mode.
    shared_gate_w.init("gate.w", ParamGroup::kGates, d, d);
    shared_gate_b.init("gate.b", ParamGroup::kGates, 1, d);
    randn(shared_gate_w);

    heads.start_w.init("head.start_w", ParamGroup::kHeads, 1, d);
    heads.start_b.init("head.start_b", ParamGroup::kHeads, 1, 1);
    heads.end_w.init("head.end_w", ParamGroup::kHeads, 1, d);
    heads.end_b.init("head.end_b", ParamGroup::kHeads, 1, 1);
    randn(heads.start_w);
    randn(heads.end_w);
}

void Model::set_modes(GateMode gate, BoostMode boost, bool residual_skip, bool use_concepts) {
    if (gate == GateMode::kPerLayer && !layers.empty() && layers.front().gate_w.value.empty()) {
        throw ValidationError("set_modes: model was built without per-layer gates");
    }
    cfg_.gate_mode = gate;
    cfg_.boost_mode = boost;
    cfg_.residual_skip = residual_skip;
    cfg_.use_concepts = use_concepts;
}

gating::GateParams Model::gate_for(std::size_t layer) const {
    if (cfg_.gate_mode == GateMode::kPerLayer) {
        return {layers[layer].gate_w.value, layers[layer].gate_b.value};
    }
    return {shared_gate_w.value, shared_gate_b.value};
}

std::vector<const Param*> Model::parameters() const {
    std::vector<const Param*> out;
    out.push_back(&embedding.token);
    out.push_back(&embedding.position);
    out.push_back(&embedding.domain_vec);
    out.push_back(&embedding.domain_proj);
    for (const LayerParams& lp : layers) {
        out.push_back(&lp.rel);
        out.push_back(&lp.pos_q);
        out.push_back(&lp.pos_k);
        for (const LoraLinear* lin : {&lp.q, &lp.k, &lp.v, &lp.o}) {
            out.push_back(&lin->base);
            out.push_back(&lin->a);
            out.push_back(&lin->b);
        }
        out.push_back(&lp.ffn_in);
        out.push_back(&lp.ffn_out);
        if (!lp.gate_w.value.empty()) {
            out.push_back(&lp.gate_w);
            out.push_back(&lp.gate_b);
        }
    }
    out.push_back(&shared_gate_w);
    out.push_back(&shared_gate_b);
    out.push_back(&heads.start_w);
    out.push_back(&heads.start_b);
    out.push_back(&heads.end_w);
    out.push_back(&heads.end_b);
    return out;
}

std::vector<Param*> Model::parameters() {
    std::vector<Param*> out;
    for (const Param* p : std::as_const(*this).parameters()) out.push_back(const_cast<Param*>(p));
    return out;
}

Param* Model::find_parameter(std::string_view name) {
    for (Param* p : parameters()) {
        if (p->name == name) return p;
    }
    return nullptr;
}

void Model::zero_grad() {
    for (Param* p : parameters()) p->grad.fill(0.0);
}

namespace {

void tally(ParameterReport& rep, ParamGroup g, std::size_t n) {
    rep.total += n;
    switch (g) {
        case ParamGroup::kFrozen: rep.frozen += n; return;
        case ParamGroup::kLora: rep.lora += n; break;
        case ParamGroup::kGates: rep.gates += n; break;
        case ParamGroup::kHeads: rep.heads += n; break;
        case ParamGroup::kEmbedDomain: rep.embed_domain += n; break;
    }
    rep.trainable += n;
}

}  // namespace

// Counts what the forward pass under the current modes touches: the shared
// gate is excluded when gates are off or per-layer.
ParameterReport Model::parameter_report() const {
    ParameterReport rep;
    for (const Param* p : parameters()) {
        if (p->group == ParamGroup::kGates) {
            const bool shared = p == &shared_gate_w || p == &shared_gate_b;
            if (cfg_.gate_mode == GateMode::kOff) continue;
            if (shared != (cfg_.gate_mode == GateMode::kShared)) continue;
        }
        tally(rep, p->group, p->value.size());
    }
    return rep;
}

ParameterReport count_parameters(const ModelConfig& cfg) {
    cfg.validate();
    const auto d = static_cast<std::size_t>(cfg.hidden);
    const auto r = static_cast<std::size_t>(cfg.lora_rank);
    const auto L = static_cast<std::size_t>(cfg.layers);
    const auto f = d * static_cast<std::size_t>(cfg.ffn_mult);
    const auto rel_rows = static_cast<std::size_t>(2 * cfg.max_rel_distance + 1);

    ParameterReport rep;
    tally(rep, ParamGroup::kFrozen, static_cast<std::size_t>(cfg.vocab_size) * d);
    tally(rep, ParamGroup::kFrozen, static_cast<std::size_t>(cfg.max_len) * d);
    tally(rep, ParamGroup::kEmbedDomain, d + d * d);
    // Per layer: relative table, its two projections, Q/K/V/O bases, FFN.
    tally(rep, ParamGroup::kFrozen, L * (rel_rows * d + 2 * d * d + 4 * d * d + 2 * f * d));
    tally(rep, ParamGroup::kLora, L * 4 * (r * d + d * r));
    const std::size_t gate = d * d + d;
    if (cfg.gate_mode == GateMode::kShared) tally(rep, ParamGroup::kGates, gate);
    if (cfg.gate_mode == GateMode::kPerLayer) tally(rep, ParamGroup::kGates, L * gate);
    tally(rep, ParamGroup::kHeads, 2 * (d + 1));
    return rep;
}

}  // namespace cgra
