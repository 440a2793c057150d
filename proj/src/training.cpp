#include "cgra/training.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>

#include <fmt/format.h>

#include "cgra/error.h"
#include "cgra/rng.h"

namespace cgra {

using nlohmann::json;

std::string to_string(Stage s) { return s == Stage::kAdaptation ? "ADAPTATION" : "SPECIALIZATION"; }

namespace {

ParamGroup group_from_string(std::string_view s) {
    for (ParamGroup g : {ParamGroup::kLora, ParamGroup::kGates, ParamGroup::kHeads, ParamGroup::kEmbedDomain}) {
        if (to_string(g) == s) return g;
    }
    throw ValidationError("unknown trainable group '" + std::string(s) + "'");
}

}  // namespace

void StageConfig::validate() const {
    if (epochs < 1) throw ValidationError("stage epochs must be >= 1");
    if (stage == Stage::kAdaptation && boost_enabled) {
        throw ValidationError("the adaptation stage runs without boost");
    }
    if (stage == Stage::kSpecialization && !boost_enabled) {
        throw ValidationError("the specialization stage requires boost");
    }
    if (trainable.empty()) throw ValidationError("stage has no trainable groups");
    if (trainable.count(ParamGroup::kFrozen)) throw ValidationError("frozen parameters cannot be trained");
    if (learning_rate && !(*learning_rate > 0.0)) throw ValidationError("stage learning_rate must be > 0");
    if (warmup_steps && *warmup_steps < 0) throw ValidationError("stage warmup_steps must be >= 0");
}

StageConfig StageConfig::adaptation() { return {}; }

StageConfig StageConfig::specialization() {
    StageConfig s;
    s.stage = Stage::kSpecialization;
    s.epochs = 20;
    s.boost_enabled = true;
    s.trainable = {ParamGroup::kLora, ParamGroup::kGates, ParamGroup::kHeads, ParamGroup::kEmbedDomain};
    return s;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw ValidationError("train config: " + m); };
    if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
    if (effective_batch < 1) fail("effective_batch must be >= 1");
    if (warmup_steps < 0) fail("warmup_steps must be >= 0");
    if (max_epochs < 1) fail("max_epochs must be >= 1");
    if (patience < 1) fail("patience must be >= 1");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must be in [0, 1)");
    if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
    if (max_steps < 0) fail("max_steps must be >= 0");
    if (max_answer_len < 1) fail("max_answer_len must be >= 1");
}

json to_json(const StageConfig& s) {
    std::vector<std::string> groups;
    for (ParamGroup g : s.trainable) groups.push_back(to_string(g));
    json j = {{"stage", to_string(s.stage)},
              {"epochs", s.epochs},
              {"boost_enabled", s.boost_enabled},
              {"trainable", groups}};
    if (s.learning_rate) j["learning_rate"] = *s.learning_rate;
    if (s.warmup_steps) j["warmup_steps"] = *s.warmup_steps;
    return j;
}

json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"effective_batch", c.effective_batch},
            {"warmup_steps", c.warmup_steps},   {"max_epochs", c.max_epochs},
            {"patience", c.patience},           {"weight_decay", c.weight_decay},
            {"beta1", c.beta1},                 {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},           {"seed", c.seed},
            {"max_steps", c.max_steps},         {"max_answer_len", c.max_answer_len}};
}

StageConfig stage_config_from_json(const json& j) {
    try {
        const std::string name = j.at("stage").get<std::string>();
        StageConfig s;
        if (name == "ADAPTATION") {
            s = StageConfig::adaptation();
        } else if (name == "SPECIALIZATION") {
            s = StageConfig::specialization();
        } else {
            throw ValidationError("unknown stage '" + name + "'");
        }
        s.epochs = j.value("epochs", s.epochs);
        s.boost_enabled = j.value("boost_enabled", s.boost_enabled);
        if (j.contains("trainable")) {
            s.trainable.clear();
            for (const auto& g : j.at("trainable")) s.trainable.insert(group_from_string(g.get<std::string>()));
        }
        if (j.contains("learning_rate")) s.learning_rate = j.at("learning_rate").get<double>();
        if (j.contains("warmup_steps")) s.warmup_steps = j.at("warmup_steps").get<int>();
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("stage config: ") + e.what());
    }
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    try {
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.effective_batch = j.value("effective_batch", c.effective_batch);
        c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.patience = j.value("patience", c.patience);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        c.seed = j.value("seed", c.seed);
        c.max_steps = j.value("max_steps", c.max_steps);
        c.max_answer_len = j.value("max_answer_len", c.max_answer_len);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

double lr_schedule(long step, double lr, long warmup, long total) {
    if (total <= warmup) {
        throw ValidationError("schedule underflow: total_steps " + std::to_string(total) +
                              " <= warmup_steps " + std::to_string(warmup));
    }
    if (step < 0 || step > total) throw std::invalid_argument("lr_schedule: step outside [0, total_steps]");
    if (step < warmup) return lr * static_cast<double>(step) / static_cast<double>(warmup);
    return lr * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

double lr_schedule(long step, const TrainConfig& cfg, long total_steps) {
    return lr_schedule(step, cfg.learning_rate, cfg.warmup_steps, total_steps);
}

void adamw_update(Matrix& value, const Matrix& grad, AdamMoments& st, long t, double lr,
                  const TrainConfig& cfg) {
    if (!value.same_shape(grad)) throw std::invalid_argument("adamw_update: gradient shape mismatch");
    if (t < 1) throw std::invalid_argument("adamw_update: step count starts at 1");
    if (st.m.empty()) {
        st.m = Matrix(value.rows(), value.cols());
        st.v = Matrix(value.rows(), value.cols());
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mh = st.m[i] / bc1;
        const double vh = st.v[i] / bc2;
        value[i] -= lr * (mh / (std::sqrt(vh) + cfg.adam_eps) + cfg.weight_decay * value[i]);
    }
}

void AdamW::step(const std::vector<Param*>& params, const std::set<ParamGroup>& trainable, double lr) {
    for (const Param* p : params) {
        if (!trainable.count(p->group)) continue;
        if (!all_finite(p->grad)) {
            throw std::runtime_error("optimizer step aborted: non-finite gradient in " + p->name);
        }
    }
    ++t_;
    for (Param* p : params) {
        if (!trainable.count(p->group)) continue;
        adamw_update(p->value, p->grad, state_[p->name], t_, lr, cfg_);
    }
}

std::string TrainHistory::to_csv() const {
    std::string out = "step,stage,epoch,loss,em,f1,lr\n";
    for (const HistoryRecord& r : records) {
        out += fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.step, r.stage, r.epoch,
                           r.train_loss, r.val_em, r.val_f1, r.lr);
    }
    return out;
}

std::optional<std::size_t> early_stop_index(const std::vector<double>& val_em, int patience) {
    if (patience < 1) throw std::invalid_argument("patience must be >= 1");
    double best = -1.0;
    int bad = 0;
    for (std::size_t i = 0; i < val_em.size(); ++i) {
        if (val_em[i] > best) {
            best = val_em[i];
            bad = 0;
        } else if (++bad >= patience) {
            return i;
        }
    }
    return std::nullopt;
}

SetScore score_examples(const Model& model, const std::vector<Example>& data, int max_answer_len) {
    if (data.empty()) throw ValidationError("cannot score an empty set");
    std::vector<double> em(data.size(), 0.0), f1(data.size(), 0.0);
    std::exception_ptr failure;
    std::mutex mu;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < data.size(); ++i) {
        try {
            const Example& ex = data[i];
            const SpanLogits lg = model.span_logits(model.encode(ex.tok));
            const SpanPrediction sp = predict_span(lg.start, lg.end, ex.tok, max_answer_len);
            const std::string pred = predicted_text(ex, {sp.start, sp.end});
            const auto& golds = ex.record.answers.empty() ? std::vector<std::string>{ex.record.answer_text}
                                                          : ex.record.answers;
            for (const std::string& g : golds) {
                em[i] = std::max(em[i], exact_match_single(pred, g) ? 1.0 : 0.0);
                f1[i] = std::max(f1[i], token_f1(pred, g));
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(mu);
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    SetScore s;
    for (std::size_t i = 0; i < data.size(); ++i) {
        s.em += em[i];
        s.f1 += f1[i];
    }
    s.em = 100.0 * s.em / static_cast<double>(data.size());
    s.f1 = 100.0 * s.f1 / static_cast<double>(data.size());
    return s;
}

Trainer::Trainer(Model& model, const std::vector<Example>& train, const std::vector<Example>& val,
                 TrainConfig cfg)
    : model_(model), train_(train), val_(val), cfg_(std::move(cfg)),
      concepts_allowed_(model.config().use_concepts) {
    cfg_.validate();
    if (train_.empty()) throw ValidationError("empty training split");
    if (val_.empty()) throw ValidationError("empty validation split");
    for (const Example& ex : train_) {
        if (!ex.tok.gold_span) ++history_.skipped_examples;
    }
    if (history_.skipped_examples == train_.size()) {
        throw ValidationError("no training example has a gold span inside the encoded sequence");
    }
}

Real Trainer::accumulate_example(Model& model, const TokenizedExample& ex) {
    if (!ex.gold_span) throw std::invalid_argument("accumulate_example: example has no gold span");
    ForwardCache cache;
    const Matrix h = model.encode(ex, &cache);
    const SpanLogits lg = model.span_logits(h);
    const SpanLoss loss = span_loss(lg.start, lg.end, *ex.gold_span);
    model.backward(cache, h, loss.grad);
    return loss.loss;
}

bool Trainer::run_stage(const StageConfig& stage) {
    stage.validate();
    const int epochs = std::min(stage.epochs, cfg_.max_epochs - epochs_done_);
    if (epochs <= 0) return false;
    if (cfg_.max_steps > 0 && step_ >= cfg_.max_steps) return false;

    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < train_.size(); ++i) {
        if (train_[i].tok.gold_span) usable.push_back(i);
    }
    const auto batch = static_cast<std::size_t>(cfg_.effective_batch);
    const long per_epoch = static_cast<long>((usable.size() + batch - 1) / batch);
    long total = per_epoch * epochs;
    if (cfg_.max_steps > 0) total = std::min(total, cfg_.max_steps - step_);
    const double peak = stage.learning_rate.value_or(cfg_.learning_rate);
    const long warmup = stage.warmup_steps.value_or(cfg_.warmup_steps);
    lr_schedule(0, peak, warmup, total);  // surfaces "schedule underflow" before any work

    model_.set_use_concepts(concepts_allowed_ && stage.boost_enabled);
    AdamW opt(cfg_);
    Rng rng(cfg_.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(stage.stage) + 1);
    const auto params = model_.parameters();
    const std::string stage_name = to_string(stage.stage);
    int bad = 0;
    long local = 0;

    for (int e = 0; e < epochs; ++e) {
        std::vector<std::size_t> order = usable;
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t loss_n = 0;
        double lr = 0.0;
        for (std::size_t b = 0; b < order.size() && local < total; b += batch) {
            model_.zero_grad();
            const std::size_t end = std::min(order.size(), b + batch);
            for (std::size_t i = b; i < end; ++i) {
                loss_sum += accumulate_example(model_, train_[order[i]].tok);
                ++loss_n;
            }
            const Real inv = 1.0 / static_cast<Real>(end - b);
            for (Param* p : params) {
                if (!stage.trainable.count(p->group)) continue;
                for (std::size_t k = 0; k < p->grad.size(); ++k) p->grad[k] *= inv;
            }
            ++local;
            lr = lr_schedule(local, peak, warmup, total);
            opt.step(params, stage.trainable, lr);
            for (Param* p : params) {
                if (stage.trainable.count(p->group)) round_to_f32(p->value);
            }
            ++step_;
        }
        ++epochs_done_;
        const SetScore vs = score_examples(model_, val_, cfg_.max_answer_len);
        history_.records.push_back({step_, stage_name, epochs_done_,
                                    loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0, vs.em, vs.f1, lr});
        history_.total_steps = step_;
        if (vs.em > history_.best_em) {
            history_.best_em = vs.em;
            history_.best_index = history_.records.size() - 1;
            best_model_ = model_;
            bad = 0;
        } else if (++bad >= cfg_.patience) {
            history_.early_stopped = true;
            break;
        }
        if (local >= total) break;
    }
    model_.zero_grad();
    if (cfg_.max_steps > 0 && step_ >= cfg_.max_steps) return false;
    return epochs_done_ < cfg_.max_epochs;
}

void Trainer::restore_best() {
    if (best_model_) model_ = *best_model_;
    model_.zero_grad();
}

TrainOutcome train_two_stage(Model& model, const std::vector<Example>& train,
                             const std::vector<Example>& val, const TrainConfig& cfg,
                             const std::vector<StageConfig>& stages) {
    if (stages.empty()) throw ValidationError("no training stages given");
    Trainer trainer(model, train, val, cfg);
    for (const StageConfig& s : stages) {
        if (!trainer.run_stage(s)) break;
    }
    trainer.restore_best();
    return {trainer.history()};
}

std::vector<Fold> kfold_split(std::size_t n, int k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("kfold_split: k must be >= 2");
    if (n < static_cast<std::size_t>(k)) {
        throw ValidationError("kfold_split: " + std::to_string(n) + " items cannot fill " +
                              std::to_string(k) + " folds");
    }
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(seed);
    rng.shuffle(perm);
    const auto kk = static_cast<std::size_t>(k);
    std::vector<Fold> folds(kk);
    for (std::size_t f = 0; f < kk; ++f) {
        const std::size_t lo = f * n / kk, hi = (f + 1) * n / kk;
        for (std::size_t i = 0; i < n; ++i) {
            (i >= lo && i < hi ? folds[f].val : folds[f].train).push_back(perm[i]);
        }
    }
    return folds;
}

}  // namespace cgra
