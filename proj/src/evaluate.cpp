#include <algorithm>
#include <chrono>
#include <exception>
#include <mutex>
#include <stdexcept>

#include <fmt/format.h>

#include "cgra/error.h"
#include "cgra/evaluation.h"
#include "cgra/text.h"

namespace cgra {

std::string to_string(AblationVariant v) {
    switch (v) {
        case AblationVariant::kFull: return "FULL";
        case AblationVariant::kNoGating: return "NO_GATING";
        case AblationVariant::kNoIcd: return "NO_ICD";
        case AblationVariant::kNoResidual: return "NO_RESIDUAL";
    }
    return "?";
}

AblationVariant ablation_from_string(std::string_view s) {
    for (AblationVariant v : kAllVariants) {
        if (to_string(v) == s) return v;
    }
    throw ValidationError("unknown ablation variant '" + std::string(s) + "'");
}

Model apply_ablation(const Model& model, AblationVariant v) {
    Model m = model;
    ModelConfig c = model.config();
    switch (v) {
        case AblationVariant::kFull: break;
        case AblationVariant::kNoGating: c.gate_mode = GateMode::kOff; break;
        case AblationVariant::kNoIcd: c.use_concepts = false; break;
        case AblationVariant::kNoResidual: c.residual_skip = false; break;
    }
    m.set_modes(c.gate_mode, c.boost_mode, c.residual_skip, c.use_concepts);
    return m;
}

Matrix ModelEmbedder::embed(const std::vector<std::string>& tokens) const {
    const std::size_t room = static_cast<std::size_t>(model_.config().max_len) - 2;
    TokenizedExample ex;
    ex.token_ids.push_back(vocab_.cls_id());
    ex.segments.push_back(Segment::kSpecial);
    ex.word_index.push_back(-1);
    std::vector<std::size_t> pieces(tokens.size(), 0);
    for (std::size_t w = 0; w < tokens.size(); ++w) {
        std::vector<int> ids;
        for (const std::string& nw : text::normalized_words(tokens[w])) {
            const auto part = vocab_.tokenize_word(nw);
            ids.insert(ids.end(), part.begin(), part.end());
        }
        if (ids.empty()) ids.push_back(vocab_.unk_id());
        for (int id : ids) {
            if (ex.token_ids.size() - 1 >= room) break;
            ex.token_ids.push_back(id);
            ex.segments.push_back(Segment::kContext);
            ex.word_index.push_back(static_cast<int>(w));
            ++pieces[w];
        }
    }
    ex.token_ids.push_back(vocab_.sep_id());
    ex.segments.push_back(Segment::kSpecial);
    ex.word_index.push_back(-1);
    ex.boost.assign(ex.size(), 1.0);
    ex.concept_flags.assign(ex.size(), 0);

    const Matrix h = model_.encode(ex);
    Matrix out(tokens.size(), h.cols());
    for (std::size_t t = 0; t < ex.size(); ++t) {
        const int w = ex.word_index[t];
        if (w < 0) continue;
        for (std::size_t c = 0; c < h.cols(); ++c) {
            out(static_cast<std::size_t>(w), c) += h(t, c) / static_cast<Real>(pieces[static_cast<std::size_t>(w)]);
        }
    }
    return out;
}

double measure_latency_ms(const Model& model, const TokenizedExample& ex, int repeats) {
    if (repeats < 1) throw std::invalid_argument("latency repeats must be >= 1");
    std::vector<double> ms;
    ms.reserve(static_cast<std::size_t>(repeats));
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const Matrix h = model.encode(ex);
        const SpanLogits logits = model.span_logits(h);
        const auto t1 = std::chrono::steady_clock::now();
        if (logits.start.empty()) throw std::logic_error("empty logits");
        ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    const std::size_t n = ms.size();
    return n % 2 == 1 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
}

namespace {

bool answer_has_concept(const std::string& answer, const ConceptDictionary& dict) {
    for (const std::string& w : text::normalized_words(answer)) {
        if (dict.contains(w)) return true;
    }
    return false;
}

}  // namespace

EvalResult evaluate(const Model& model, const Vocab& vocab, const std::vector<Example>& data,
                    AblationVariant variant, const EvalOptions& opts) {
    if (data.empty()) throw ValidationError("evaluate: empty dataset");
    const Model m = apply_ablation(model, variant);
    const ModelEmbedder default_embedder(m, vocab);
    const TokenEmbedder& embedder = opts.embedder ? *opts.embedder : default_embedder;

    const std::size_t n = data.size();
    EvalResult res;
    res.predictions.resize(n);
    std::vector<double> em(n), f1(n), bl(n), rl(n), es(n);
    std::exception_ptr failure;
    std::mutex failure_mu;

#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < n; ++i) {
        try {
            const Example& ex = data[i];
            const Matrix h = m.encode(ex.tok);
            const SpanLogits logits = m.span_logits(h);
            const SpanPrediction sp = predict_span(logits.start, logits.end, ex.tok, opts.max_answer_len);
            Prediction& p = res.predictions[i];
            p.id = ex.record.id;
            p.pred_text = predicted_text(ex, {sp.start, sp.end});
            p.gold_text = ex.record.answer_text;
            p.start = sp.start;
            p.end = sp.end;
            std::vector<std::string> golds = ex.record.answers;
            if (golds.empty()) golds.push_back(ex.record.answer_text);
            for (const std::string& g : golds) {
                em[i] = std::max(em[i], exact_match_single(p.pred_text, g) ? 1.0 : 0.0);
                f1[i] = std::max(f1[i], token_f1(p.pred_text, g));
                bl[i] = std::max(bl[i], bleu(p.pred_text, g));
                rl[i] = std::max(rl[i], rouge_l(p.pred_text, g));
                es[i] = std::max(es[i], embed_score_single(p.pred_text, g, embedder));
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mu);
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    MetricReport& r = res.report;
    r.variant = to_string(variant);
    r.n_examples = n;
    std::size_t concept_hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        r.em += em[i];
        r.f1 += f1[i];
        r.bleu += bl[i];
        r.rouge_l += rl[i];
        r.embed_score += es[i];
        if (opts.dict != nullptr && answer_has_concept(data[i].record.answer_text, *opts.dict)) {
            ++r.concept_examples;
            if (em[i] > 0.0) ++concept_hits;
        }
    }
    const auto dn = static_cast<double>(n);
    r.em = 100.0 * r.em / dn;
    r.f1 = 100.0 * r.f1 / dn;
    r.bleu /= dn;
    r.rouge_l /= dn;
    r.embed_score /= dn;
    if (r.concept_examples > 0) {
        r.concept_em = 100.0 * static_cast<double>(concept_hits) / static_cast<double>(r.concept_examples);
    }
    if (opts.measure_latency) {
        double total = 0.0;
        for (const Example& ex : data) total += measure_latency_ms(m, ex.tok, opts.latency_repeats);
        r.mean_latency_ms = total / dn;
    }
    return res;
}

AblationReport run_ablation(const Model& model, const Vocab& vocab, const std::vector<Example>& test,
                            const EvalOptions& opts) {
    AblationReport rep;
    for (AblationVariant v : kAllVariants) rep.reports.push_back(evaluate(model, vocab, test, v, opts).report);
    return rep;
}

nlohmann::json to_json(const MetricReport& r, bool include_latency) {
    nlohmann::json j = {{"variant", r.variant},
                        {"em", r.em},
                        {"f1", r.f1},
                        {"bleu", r.bleu},
                        {"rouge_l", r.rouge_l},
                        {"embed_score", r.embed_score},
                        {"n_examples", r.n_examples},
                        {"concept_examples", r.concept_examples}};
    j["concept_em"] = r.concept_em ? nlohmann::json(*r.concept_em) : nlohmann::json(nullptr);
    if (include_latency) j["mean_latency_ms"] = r.mean_latency_ms;
    return j;
}

std::string format_metric_table(const std::vector<MetricReport>& reports) {
    std::string out = fmt::format("{:<12} {:>7} {:>7} {:>8} {:>11} {:>13} {:>9} {:>10}\n", "Variant",
                                  "EM (%)", "F1 (%)", "BLEU (%)", "ROUGE-L (%)", "BERTScore (%)",
                                  "Time (ms)", "C-EM (%)");
    for (const MetricReport& r : reports) {
        out += fmt::format("{:<12} {:>7.2f} {:>7.2f} {:>8.2f} {:>11.2f} {:>13.2f} {:>9.3f} {:>10}\n",
                           r.variant, r.em, r.f1, 100.0 * r.bleu, 100.0 * r.rouge_l,
                           100.0 * r.embed_score, r.mean_latency_ms,
                           r.concept_em ? fmt::format("{:.2f}", *r.concept_em) : std::string("-"));
    }
    return out;
}

nlohmann::json to_json(const std::vector<Prediction>& preds) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Prediction& p : preds) {
        arr.push_back({{"id", p.id},
                       {"pred_text", p.pred_text},
                       {"gold_text", p.gold_text},
                       {"start", p.start},
                       {"end", p.end}});
    }
    return arr;
}

std::string format_ablation_table(const AblationReport& rep) {
    std::string out = fmt::format("{:<12} {:>7} {:>7} {:>10}\n", "Variant", "EM", "F1", "BERTScore");
    for (const MetricReport& r : rep.reports) {
        out += fmt::format("{:<12} {:>7.2f} {:>7.2f} {:>10.2f}\n", r.variant, r.em, r.f1,
                           100.0 * r.embed_score);
    }
    return out;
}

nlohmann::json to_json(const AblationReport& rep) {
    nlohmann::json rows = nlohmann::json::array();
    for (const MetricReport& r : rep.reports) {
        rows.push_back({{"variant", r.variant},
                        {"metrics", {{"EM", r.em}, {"F1", r.f1}, {"BERTScore", 100.0 * r.embed_score}}}});
    }
    return {{"columns", {"EM", "F1", "BERTScore"}}, {"rows", rows}};
}

}  // namespace cgra
