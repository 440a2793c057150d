// cgra: command-line front end for dictionary building, data preparation,
// training, evaluation, ablation and gradient checks.

#include <cstdio>
#include <iostream>
#include <set>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "cgra/checkpoint.h"
#include "cgra/concept_dictionary.h"
#include "cgra/dataset.h"
#include "cgra/error.h"
#include "cgra/evaluation.h"
#include "cgra/gating.h"
#include "cgra/json_util.h"
#include "cgra/synth.h"
#include "cgra/training.h"
#include "settings.h"

namespace fs = std::filesystem;
using namespace cgra;
using cgra::cli::Manifest;
using cgra::cli::Settings;

namespace {

fs::path manifest_for(Settings& s, const fs::path& primary) {
    if (auto m = s.maybe_output("manifest")) return *m;
    return cli::manifest_path_for(primary);
}

std::vector<std::string> record_texts(const std::vector<QaRecord>& recs) {
    std::vector<std::string> out;
    out.reserve(recs.size() * 2);
    for (const auto& r : recs) {
        out.push_back(r.question);
        out.push_back(r.context);
    }
    return out;
}

std::array<double, 3> parse_ratios(const std::string& s) {
    std::array<double, 3> r{};
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
        const std::size_t comma = s.find(',', pos);
        if ((i < 2) != (comma != std::string::npos)) throw ValidationError("--ratios needs three values");
        const std::string part = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            r[static_cast<std::size_t>(i)] = std::stod(part);
        } catch (const std::logic_error&) {
            throw ValidationError("--ratios: cannot parse '" + part + "'");
        }
        pos = comma + 1;
    }
    return r;
}

// ---- model / training settings shared by train and ablate ----

void add_model_options(Settings& s) {
    s.option("layers", "Encoder layers");
    s.option("hidden", "Hidden size");
    s.option("heads", "Attention heads");
    s.option("ffn-mult", "FFN width multiplier");
    s.option("max-len", "Maximum sequence length in pieces");
    s.option("lora-rank", "LoRA rank");
    s.option("lora-alpha", "LoRA alpha");
    s.option("max-rel-distance", "Relative position clip distance");
    s.option("init-std", "Std of random initial weights");
    s.option("gate-mode", "SHARED, PER_LAYER or OFF");
    s.option("boost-mode", "RESIDUAL_GATE, ATTENTION_SCORE or OFF");
    s.flag("check-finite", "Abort on non-finite hidden states");
}

ModelConfig model_config(Settings& s, std::size_t vocab_size, std::uint64_t seed) {
    ModelConfig c;
    c.vocab_size = static_cast<int>(vocab_size);
    c.layers = static_cast<int>(s.integer("layers", c.layers));
    c.hidden = static_cast<int>(s.integer("hidden", c.hidden));
    c.heads = static_cast<int>(s.integer("heads", c.heads));
    c.ffn_mult = static_cast<int>(s.integer("ffn-mult", c.ffn_mult));
    c.max_len = static_cast<int>(s.integer("max-len", c.max_len));
    c.lora_rank = static_cast<int>(s.integer("lora-rank", c.lora_rank));
    c.lora_alpha = s.real("lora-alpha", c.lora_alpha);
    c.max_rel_distance = static_cast<int>(s.integer("max-rel-distance", c.max_rel_distance));
    c.init_std = s.real("init-std", c.init_std);
    c.gate_mode = gate_mode_from_string(s.str("gate-mode", to_string(c.gate_mode)));
    c.boost_mode = boost_mode_from_string(s.str("boost-mode", to_string(c.boost_mode)));
    c.check_finite = s.boolean("check-finite", false);
    c.seed = seed;
    c.validate();
    return c;
}

void add_train_options(Settings& s) {
    s.option("lr", "Peak learning rate");
    s.option("batch", "Effective batch size (gradient accumulation)");
    s.option("warmup", "Warmup steps");
    s.option("max-epochs", "Global epoch cap across stages");
    s.option("max-steps", "Global optimizer step cap (0 = none)");
    s.option("patience", "Early-stopping patience in evaluations");
    s.option("weight-decay", "Decoupled weight decay");
    s.option("stage1-epochs", "Adaptation epochs (0 skips the stage)");
    s.option("stage2-epochs", "Specialization epochs (0 skips the stage)");
    s.option("stage1-lr", "Adaptation learning rate override");
    s.option("stage2-lr", "Specialization learning rate override");
    s.option("stage1-warmup", "Adaptation warmup override");
    s.option("stage2-warmup", "Specialization warmup override");
    s.option("max-answer-len", "Longest predicted span in pieces");
}

TrainConfig train_config(Settings& s, std::uint64_t seed) {
    TrainConfig c;
    c.learning_rate = s.real("lr", c.learning_rate);
    c.effective_batch = static_cast<int>(s.integer("batch", c.effective_batch));
    c.warmup_steps = static_cast<int>(s.integer("warmup", c.warmup_steps));
    c.max_epochs = static_cast<int>(s.integer("max-epochs", c.max_epochs));
    c.max_steps = s.integer("max-steps", c.max_steps);
    c.patience = static_cast<int>(s.integer("patience", c.patience));
    c.weight_decay = s.real("weight-decay", c.weight_decay);
    c.max_answer_len = static_cast<int>(s.integer("max-answer-len", c.max_answer_len));
    c.seed = seed;
    c.validate();
    return c;
}

std::vector<StageConfig> stage_configs(Settings& s) {
    StageConfig a = StageConfig::adaptation();
    StageConfig b = StageConfig::specialization();
    a.epochs = static_cast<int>(s.integer("stage1-epochs", a.epochs));
    b.epochs = static_cast<int>(s.integer("stage2-epochs", b.epochs));
    if (auto v = s.maybe_real("stage1-lr")) a.learning_rate = *v;
    if (auto v = s.maybe_real("stage2-lr")) b.learning_rate = *v;
    if (auto v = s.maybe_integer("stage1-warmup")) a.warmup_steps = static_cast<int>(*v);
    if (auto v = s.maybe_integer("stage2-warmup")) b.warmup_steps = static_cast<int>(*v);
    std::vector<StageConfig> out;
    if (a.epochs < 0 || b.epochs < 0) throw ValidationError("stage epochs must be >= 0");
    if (a.epochs > 0) out.push_back(a);
    if (b.epochs > 0) out.push_back(b);
    if (out.empty()) throw ValidationError("both training stages have zero epochs");
    for (const auto& st : out) st.validate();
    return out;
}

struct LoadedDict {
    ConceptDictionary dict;
    bool given = false;
};

LoadedDict dictionary_setting(Settings& s) {
    LoadedDict d;
    if (auto p = s.maybe_input("dict")) {
        d.dict = load_dictionary(*p);
        d.given = true;
    }
    return d;
}

void check_dictionary(const Checkpoint& ck, const LoadedDict& d) {
    if (!d.given) {
        if (!ck.dictionary_version.empty()) {
            throw ValidationError("checkpoint was trained with dictionary '" + ck.dictionary_version +
                                  "'; pass it with --dict");
        }
        return;
    }
    if (d.dict.version() != ck.dictionary_version) {
        throw ValidationError("dictionary version mismatch: checkpoint has '" + ck.dictionary_version +
                              "', --dict has '" + d.dict.version() + "'");
    }
}

std::unique_ptr<TokenEmbedder> make_embedder(const std::string& kind, const Model* model, const Vocab& vocab) {
    if (kind == "model") return model ? std::make_unique<ModelEmbedder>(*model, vocab) : nullptr;
    if (kind.rfind("hash", 0) == 0) return std::make_unique<HashEmbedder>(64);
    throw ValidationError("--embedder must be 'model' or 'hash'");
}

struct TrainedModel {
    Model model;
    TrainHistory history;
};

TrainedModel train_model(const ModelConfig& mc, const TrainConfig& tc, const std::vector<StageConfig>& stages,
                         AblationVariant variant, const std::vector<Example>& train,
                         const std::vector<Example>& val) {
    Model model = apply_ablation(Model(mc), variant);
    TrainOutcome out = train_two_stage(model, train, val, tc, stages);
    return {std::move(model), std::move(out.history)};
}

// ---- commands ----

int cmd_icd_build(Settings& s) {
    const std::uint64_t seed = s.seed();
    const auto corpus_path = s.input("corpus");
    const auto terms_path = s.input("terms");
    const auto weights_path = s.maybe_input("weights");
    const std::string version = s.str("version", "icd-1");
    const auto out = s.output("out");

    const auto corpus = record_texts(load_records(corpus_path));
    const nlohmann::json tj = parse_json_file(terms_path);
    std::vector<std::string> terms;
    std::map<std::string, std::string> cats;
    try {
        const nlohmann::json& list = tj.is_object() ? tj.at("terms") : tj;
        for (const auto& t : list) {
            if (t.is_string()) {
                terms.push_back(t.get<std::string>());
            } else {
                terms.push_back(t.at("term").get<std::string>());
                if (t.contains("category")) cats[terms.back()] = t.at("category").get<std::string>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(terms_path.string() + ": " + e.what());
    }
    const ScholarWeights weights = weights_path ? ScholarWeights::load(*weights_path) : ScholarWeights{};
    const DictionaryBuild b = build_dictionary(corpus, terms, weights, version, cats);
    save_dictionary(b.dictionary, out);
    for (const auto& w : b.warnings) fmt::print(stderr, "warning: {}\n", w);
    fmt::print("{} terms, {} clamped -> {}\n", b.dictionary.size(), b.clamped, out.string());

    Manifest m{"icd build", {corpus_path, terms_path}, {out}};
    if (weights_path) m.inputs.push_back(*weights_path);
    m.extra = {{"clamped", b.clamped}, {"warnings", b.warnings}};
    (void)seed;
    write_manifest(manifest_for(s, out), m, s);
    return 0;
}

int cmd_icd_show(Settings& s) {
    s.seed();
    const auto path = s.input("dict");
    const ConceptDictionary d = load_dictionary(path);
    if (s.boolean("json")) {
        std::cout << dictionary_to_json(d) << "\n";
        return 0;
    }
    fmt::print("dictionary {} ({} terms)\n", d.version(), d.size());
    fmt::print("{:<14} {:>6} {:>6}  {}\n", "term", "IS", "BF", "category");
    std::vector<const ConceptEntry*> rows;
    for (const auto& [k, e] : d.entries()) rows.push_back(&e);
    std::stable_sort(rows.begin(), rows.end(), [](const ConceptEntry* a, const ConceptEntry* b) {
        return a->importance_score > b->importance_score;
    });
    for (const ConceptEntry* e : rows) {
        fmt::print("{:<14} {:>6.3f} {:>6.2f}  {}\n", e->term, e->importance_score, e->boost_factor, e->category);
    }
    return 0;
}

int cmd_data_ingest(Settings& s) {
    s.seed();
    const auto in = s.input("input");
    const auto out = s.output("out");
    const auto rejects = s.maybe_output("rejects");
    const IngestReport rep = ingest_squad(in);
    save_records(out, rep.records);
    nlohmann::json rj = nlohmann::json::array();
    for (const auto& r : rep.rejected) rj.push_back({{"id", r.id}, {"reason", r.reason}});
    for (const auto& r : rep.rejected) fmt::print(stderr, "rejected {}: {}\n", r.id, r.reason);
    fmt::print("{} questions: {} accepted, {} rejected\n", rep.total, rep.records.size(), rep.rejected.size());
    fmt::print("mean context {:.1f} words, mean question {:.1f} words\n", rep.stats.mean_context_words,
               rep.stats.mean_question_words);

    Manifest m{"data ingest", {in}, {out}};
    if (rejects) {
        write_text_file(*rejects, rj.dump(2) + "\n");
        m.outputs.push_back(*rejects);
    }
    m.extra = {{"total", rep.total},
               {"accepted", rep.records.size()},
               {"rejected", rj},
               {"source_sha256", rep.content_hash},
               {"stats", to_json(rep.stats)}};
    write_manifest(manifest_for(s, out), m, s);
    return 0;
}

int cmd_data_split(Settings& s) {
    const std::uint64_t seed = s.seed();
    const auto in = s.input("input");
    const auto ratios = parse_ratios(s.str("ratios", "0.8,0.1,0.1"));
    const fs::path dir = s.str("out-dir", ".");
    fs::create_directories(dir);
    const DatasetSplit sp = split_dataset(load_records(in), ratios, seed);
    const fs::path tr = dir / "train.jsonl", va = dir / "val.jsonl", te = dir / "test.jsonl";
    save_records(tr, sp.train);
    save_records(va, sp.val);
    save_records(te, sp.test);
    fmt::print("train {} / val {} / test {}\n", sp.train.size(), sp.val.size(), sp.test.size());
    Manifest m{"data split", {in}, {tr, va, te}};
    m.extra = {{"sizes", {sp.train.size(), sp.val.size(), sp.test.size()}}};
    write_manifest(manifest_for(s, dir / "split"), m, s);
    return 0;
}

int cmd_data_augment(Settings& s) {
    const std::uint64_t seed = s.seed();
    const auto in = s.input("input");
    const auto syn_path = s.input("synonyms");
    const LoadedDict d = dictionary_setting(s);
    const double rate = s.real("rate", 0.3);
    const bool keep = !s.boolean("replace-only", false);
    const auto out = s.output("out");

    const SynonymTable table = SynonymTable::load(syn_path, d.dict);
    const auto recs = load_records(in);
    std::vector<QaRecord> result;
    if (keep) result = recs;
    std::size_t eligible = 0, replaced = 0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        AugmentResult a = augment_synonym(recs[i], table, d.dict, rate, seed * 1000003ULL + i);
        eligible += a.eligible;
        replaced += a.replaced;
        if (keep) {
            if (a.replaced == 0) continue;
            a.record.id += "-aug";
        }
        result.push_back(std::move(a.record));
    }
    save_records(out, result);
    fmt::print("{} records written, {} of {} eligible words replaced\n", result.size(), replaced, eligible);
    Manifest m{"data augment", {in, syn_path}, {out}};
    if (auto p = s.maybe_str("dict")) m.inputs.emplace_back(*p);
    m.extra = {{"eligible", eligible}, {"replaced", replaced}};
    write_manifest(manifest_for(s, out), m, s);
    return 0;
}

int cmd_data_generate(Settings& s) {
    SynthConfig c;
    c.seed = s.seed();
    c.count = static_cast<std::size_t>(s.integer("count", static_cast<long>(c.count)));
    c.context_words_min = static_cast<int>(s.integer("context-min", c.context_words_min));
    c.context_words_max = static_cast<int>(s.integer("context-max", c.context_words_max));
    c.distractor_clauses = static_cast<int>(s.integer("distractors", c.distractor_clauses));
    c.answer_words_min = static_cast<int>(s.integer("answer-min", c.answer_words_min));
    c.answer_words_max = static_cast<int>(s.integer("answer-max", c.answer_words_max));
    c.answer_adjacency = s.real("adjacency", c.answer_adjacency);
    c.concept_in_answer_rate = s.real("concept-answer-rate", c.concept_in_answer_rate);
    c.id_prefix = s.str("id-prefix", c.id_prefix);
    const std::string format = s.str("format", "squad");
    const auto out = s.output("out");
    const auto recs = generate_synthetic(c);
    if (format == "squad") {
        write_text_file(out, to_squad_json(recs, "synthetic"));
    } else if (format == "jsonl") {
        save_records(out, recs);
    } else {
        throw ValidationError("--format must be 'squad' or 'jsonl'");
    }
    const DatasetStats st = dataset_stats(recs);
    fmt::print("{} records, mean context {:.1f} words, mean question {:.1f} words\n", st.count,
               st.mean_context_words, st.mean_question_words);
    Manifest m{"data generate", {}, {out}};
    m.extra = {{"stats", to_json(st)}};
    write_manifest(manifest_for(s, out), m, s);
    return 0;
}

int cmd_vocab_train(Settings& s) {
    s.seed();
    const auto inputs = s.strings("input");
    if (inputs.empty()) throw ValidationError("--input is required");
    for (const auto& p : inputs) {
        if (!fs::exists(p)) throw ValidationError("--input: no such file " + p);
    }
    const long size = s.integer("size", 512);
    if (size < 5) throw ValidationError("--size must be at least 5");
    const auto out = s.output("out");
    std::vector<std::string> corpus;
    for (const auto& p : inputs) {
        auto t = record_texts(load_records(p));
        corpus.insert(corpus.end(), t.begin(), t.end());
    }
    const Vocab v = train_vocab(corpus, static_cast<std::size_t>(size));
    v.save(out);
    fmt::print("{} pieces -> {}\n", v.size(), out.string());
    Manifest m{"vocab train", {}, {out}};
    for (const auto& p : inputs) m.inputs.emplace_back(p);
    write_manifest(manifest_for(s, out), m, s);
    return 0;
}

struct PreparedData {
    Vocab vocab;
    LoadedDict dict;
    std::vector<Example> train, val;
    std::vector<fs::path> inputs;
};

PreparedData prepare_training(Settings& s, int max_len) {
    PreparedData p;
    const auto tr = s.input("train");
    const auto va = s.input("val");
    const auto vo = s.input("vocab");
    p.dict = dictionary_setting(s);
    p.vocab = Vocab::load(vo);
    const auto* dp = p.dict.given ? &p.dict.dict : nullptr;
    EncodeReport rt = encode_dataset(load_records(tr), p.vocab, dp, max_len);
    EncodeReport rv = encode_dataset(load_records(va), p.vocab, dp, max_len);
    if (rt.gold_truncated > 0) {
        fmt::print(stderr, "warning: {} training answers fall past max-len and are skipped\n", rt.gold_truncated);
    }
    p.train = std::move(rt.examples);
    p.val = std::move(rv.examples);
    p.inputs = {tr, va, vo};
    if (p.dict.given) p.inputs.emplace_back(*s.maybe_str("dict"));
    return p;
}

int cmd_train(Settings& s) {
    const std::uint64_t seed = s.seed();
    const auto out = s.output("out");
    const auto hist_path = s.maybe_output("history");
    const AblationVariant variant = ablation_from_string(s.str("variant", "FULL"));
    const long max_len = s.integer("max-len", kDefaultMaxLen);
    PreparedData data = prepare_training(s, static_cast<int>(max_len));
    const ModelConfig mc = model_config(s, data.vocab.size(), seed);
    const TrainConfig tc = train_config(s, seed);
    const auto stages = stage_configs(s);

    TrainedModel tm = train_model(mc, tc, stages, variant, data.train, data.val);
    const nlohmann::json extra = {{"variant", to_string(variant)},
                                  {"best_val_em", tm.history.best_em},
                                  {"steps", tm.history.total_steps}};
    save_checkpoint(out, tm.model, data.vocab, data.dict.given ? data.dict.dict.version() : "", seed, extra);
    fmt::print("{} steps, best val EM {:.2f}{} -> {}\n", tm.history.total_steps, tm.history.best_em,
               tm.history.early_stopped ? " (early stop)" : "", out.string());
    Manifest m{"train", data.inputs, {out}};
    if (hist_path) {
        write_text_file(*hist_path, tm.history.to_csv());
        m.outputs.push_back(*hist_path);
    }
    m.extra = {{"model", to_json(mc)}, {"train", to_json(tc)}};
    for (const auto& st : stages) m.extra["stages"].push_back(to_json(st));
    write_manifest(manifest_for(s, out), m, s);
    return 0;
}

std::vector<Example> load_eval_data(const fs::path& path, const Vocab& vocab, const LoadedDict& d, int max_len) {
    return encode_dataset(load_records(path), vocab, d.given ? &d.dict : nullptr, max_len).examples;
}

int cmd_eval(Settings& s) {
    s.seed();
    const auto ck_path = s.input("checkpoint");
    const auto data_path = s.input("data");
    const LoadedDict d = dictionary_setting(s);
    const AblationVariant variant = ablation_from_string(s.str("variant", "FULL"));
    const auto out = s.output("out");
    const auto pred_path = s.maybe_output("predictions");
    EvalOptions eo;
    eo.measure_latency = !s.boolean("no-latency", false);
    eo.max_answer_len = static_cast<int>(s.integer("max-answer-len", eo.max_answer_len));
    const std::string emb_kind = s.str("embedder", "model");

    const Checkpoint ck = load_checkpoint(ck_path);
    check_dictionary(ck, d);
    const auto data = load_eval_data(data_path, ck.vocab, d, ck.model.config().max_len);
    if (data.empty()) throw ValidationError(data_path.string() + ": no records");
    const Model variant_model = apply_ablation(ck.model, variant);
    const auto emb = make_embedder(emb_kind, &variant_model, ck.vocab);
    eo.embedder = emb.get();
    eo.dict = d.given ? &d.dict : nullptr;
    const EvalResult r = evaluate(ck.model, ck.vocab, data, variant, eo);

    write_text_file(out, to_json(r.report, eo.measure_latency).dump(2) + "\n");
    std::cout << format_metric_table({r.report});
    Manifest m{"eval", {ck_path, data_path}, {out}};
    if (d.given) m.inputs.emplace_back(*s.maybe_str("dict"));
    if (pred_path) {
        write_text_file(*pred_path, to_json(r.predictions).dump(2) + "\n");
        m.outputs.push_back(*pred_path);
    }
    write_manifest(manifest_for(s, out), m, s);
    return 0;
}

int cmd_ablate(Settings& s) {
    const std::uint64_t seed = s.seed();
    const auto data_path = s.input("data");
    const auto out = s.output("out");
    const bool train_first = s.boolean("train-first", false);
    EvalOptions eo;
    eo.measure_latency = !s.boolean("no-latency", false);
    const std::string emb_kind = s.str("embedder", "model");
    Manifest m{"ablate", {data_path}, {out}};

    AblationReport rep;
    if (!train_first) {
        const auto ck_path = s.input("checkpoint");
        const LoadedDict d = dictionary_setting(s);
        const Checkpoint ck = load_checkpoint(ck_path);
        check_dictionary(ck, d);
        const auto data = load_eval_data(data_path, ck.vocab, d, ck.model.config().max_len);
        if (data.empty()) throw ValidationError(data_path.string() + ": no records");
        eo.dict = d.given ? &d.dict : nullptr;
        for (AblationVariant v : kAllVariants) {
            const Model vm = apply_ablation(ck.model, v);
            const auto emb = make_embedder(emb_kind, &vm, ck.vocab);
            eo.embedder = emb.get();
            rep.reports.push_back(evaluate(ck.model, ck.vocab, data, v, eo).report);
        }
        m.inputs.push_back(ck_path);
        if (d.given) m.inputs.emplace_back(*s.maybe_str("dict"));
    } else {
        // One model per variant, same seed and data.
        const long max_len = s.integer("max-len", kDefaultMaxLen);
        PreparedData pd = prepare_training(s, static_cast<int>(max_len));
        const ModelConfig mc = model_config(s, pd.vocab.size(), seed);
        const TrainConfig tc = train_config(s, seed);
        const auto stages = stage_configs(s);
        const auto data = load_eval_data(data_path, pd.vocab, pd.dict, mc.max_len);
        if (data.empty()) throw ValidationError(data_path.string() + ": no records");
        eo.dict = pd.dict.given ? &pd.dict.dict : nullptr;
        for (AblationVariant v : kAllVariants) {
            TrainedModel tm = train_model(mc, tc, stages, v, pd.train, pd.val);
            const auto emb = make_embedder(emb_kind, &tm.model, pd.vocab);
            eo.embedder = emb.get();
            rep.reports.push_back(evaluate(tm.model, pd.vocab, data, v, eo).report);
            fmt::print(stderr, "{}: {} steps\n", to_string(v), tm.history.total_steps);
        }
        m.inputs.insert(m.inputs.end(), pd.inputs.begin(), pd.inputs.end());
    }
    nlohmann::json j = to_json(rep);
    for (const auto& r : rep.reports) j["details"].push_back(to_json(r, eo.measure_latency));
    write_text_file(out, j.dump(2) + "\n");
    std::cout << format_ablation_table(rep);
    write_manifest(manifest_for(s, out), m, s);
    return 0;
}

int cmd_predict(Settings& s) {
    s.seed();
    const auto ck_path = s.input("checkpoint");
    const LoadedDict d = dictionary_setting(s);
    const auto data_path = s.maybe_input("data");
    const auto question = s.maybe_str("question");
    const auto context = s.maybe_str("context");
    const auto out = s.maybe_output("out");
    const int max_answer = static_cast<int>(s.integer("max-answer-len", kDefaultMaxAnswerLen));
    if (data_path.has_value() == (question.has_value() || context.has_value())) {
        throw ValidationError("give either --data or both --question and --context");
    }
    if (!data_path && !(question && context)) throw ValidationError("--question and --context go together");

    const Checkpoint ck = load_checkpoint(ck_path);
    check_dictionary(ck, d);
    std::vector<QaRecord> recs;
    if (data_path) {
        recs = load_records(*data_path);
    } else {
        QaRecord r;
        r.id = "q0";
        r.question = *question;
        r.context = *context;
        recs.push_back(r);
    }
    nlohmann::json arr = nlohmann::json::array();
    for (const QaRecord& r : recs) {
        Example ex{r, encode_qa(r.question, r.context, ck.vocab, ck.model.config().max_len)};
        if (d.given) apply_dictionary(ex.tok, d.dict);
        const SpanLogits lg = ck.model.span_logits(ck.model.encode(ex.tok));
        const SpanPrediction p = predict_span(lg.start, lg.end, ex.tok, max_answer);
        arr.push_back({{"id", r.id},
                       {"answer", predicted_text(ex, {p.start, p.end})},
                       {"start", p.start},
                       {"end", p.end},
                       {"score", p.score}});
    }
    const std::string body = arr.dump(2) + "\n";
    if (out) {
        write_text_file(*out, body);
        Manifest m{"predict", {ck_path}, {*out}};
        if (data_path) m.inputs.push_back(*data_path);
        write_manifest(manifest_for(s, *out), m, s);
    } else {
        std::cout << body;
    }
    return 0;
}

int cmd_gradcheck(Settings& s, bool corrupt) {
    const std::uint64_t seed = s.seed();
    const long trials = s.integer("trials", 100);
    const double eps = s.real("epsilon", 1e-5);
    const double threshold = 1e-5;
    if (trials < 1) throw ValidationError("--trials must be >= 1");
    gating::BackwardFn bw = gating::gate_backward;
    if (corrupt) {
        bw = [](const Matrix& dr, const gating::GateCache& c, const gating::GateParams& p) {
            gating::GateGrads g = gating::gate_backward(dr, c, p);
            g.dw[0] += 0.01;
            return g;
        };
    }
    const auto r = gating::random_gradient_checks(seed, static_cast<int>(trials), eps, bw);
    const bool pass = r.worst_relative_error < threshold;
    fmt::print("{} trials, {} gradients, worst relative error {:.3e}: {}\n", r.trials, r.checked,
               r.worst_relative_error, pass ? "PASS" : "FAIL");
    if (auto out = s.maybe_output("out")) {
        const nlohmann::json j = {{"trials", r.trials},
                                  {"checked", r.checked},
                                  {"worst_relative_error", r.worst_relative_error},
                                  {"threshold", threshold},
                                  {"pass", pass}};
        write_text_file(*out, j.dump(2) + "\n");
        write_manifest(manifest_for(s, *out), {"gradcheck", {}, {*out}}, s);
    }
    return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concept-boosted extractive question answering"};
    app.set_version_flag("--version", std::string(cli::kToolVersion));
    app.require_subcommand(1);

    std::vector<std::pair<CLI::App*, std::unique_ptr<Settings>>> subs;
    auto make = [&](CLI::App* parent, const std::string& name, const std::string& desc) {
        CLI::App* a = parent->add_subcommand(name, desc);
        subs.emplace_back(a, std::make_unique<Settings>(a));
        return subs.back().second.get();
    };

    CLI::App* icd = app.add_subcommand("icd", "Concept dictionary");
    icd->require_subcommand(1);
    Settings* icd_build = make(icd, "build", "Build a dictionary from a corpus and a term list");
    icd_build->option("corpus", "Records (JSONL) whose contexts and questions are counted");
    icd_build->option("terms", "JSON list of terms, or {terms: [...]} with optional categories");
    icd_build->option("weights", "JSON object of scholarly weights in [0.8, 1.2]");
    icd_build->option("version", "Dictionary version tag");
    icd_build->option("out", "Output dictionary JSON");
    Settings* icd_show = make(icd, "show", "Print a dictionary");
    icd_show->option("dict", "Dictionary JSON");
    icd_show->flag("json", "Print JSON instead of a table");

    CLI::App* data = app.add_subcommand("data", "Dataset preparation");
    data->require_subcommand(1);
    Settings* ingest = make(data, "ingest", "Flatten and validate a SQuAD v1.1 file");
    ingest->option("input", "SQuAD v1.1 JSON");
    ingest->option("out", "Records JSONL");
    ingest->option("rejects", "Rejected-record report JSON");
    Settings* split = make(data, "split", "Seeded train/val/test split");
    split->option("input", "Records JSONL");
    split->option("ratios", "Three comma-separated ratios");
    split->option("out-dir", "Directory for train/val/test.jsonl");
    Settings* augment = make(data, "augment", "Synonym replacement outside answers and concept terms");
    augment->option("input", "Records JSONL");
    augment->option("synonyms", "Synonym table JSON");
    augment->option("dict", "Dictionary whose terms are never replaced");
    augment->option("rate", "Replacement probability per eligible word");
    augment->flag("replace-only", "Write only augmented records");
    augment->option("out", "Records JSONL");
    Settings* gen = make(data, "generate", "Synthetic planted-concept corpus");
    for (const char* k : {"count", "context-min", "context-max", "distractors", "answer-min", "answer-max",
                          "adjacency", "concept-answer-rate", "id-prefix"}) {
        gen->option(k, "Generator setting");
    }
    gen->option("format", "squad or jsonl");
    gen->option("out", "Output file");

    CLI::App* vocab = app.add_subcommand("vocab", "Subword vocabulary");
    vocab->require_subcommand(1);
    Settings* vtrain = make(vocab, "train", "Train a subword inventory");
    vtrain->list("input", "Records JSONL (repeatable)");
    vtrain->option("size", "Target inventory size");
    vtrain->option("out", "Vocabulary file");

    Settings* train = make(&app, "train", "Two-stage training");
    for (const char* k : {"train", "val", "vocab", "dict", "out", "history", "variant"}) {
        train->option(k, "Path or setting");
    }
    add_model_options(*train);
    add_train_options(*train);

    Settings* ev = make(&app, "eval", "Evaluate a checkpoint");
    for (const char* k : {"checkpoint", "data", "dict", "variant", "out", "predictions", "embedder", "max-answer-len"}) {
        ev->option(k, "Path or setting");
    }
    ev->flag("no-latency", "Skip latency measurement");

    Settings* abl = make(&app, "ablate", "FULL / NO_GATING / NO_ICD / NO_RESIDUAL report");
    for (const char* k : {"checkpoint", "data", "dict", "out", "embedder", "train", "val", "vocab"}) {
        abl->option(k, "Path or setting");
    }
    abl->flag("train-first", "Train one model per variant before evaluating");
    abl->flag("no-latency", "Skip latency measurement");
    add_model_options(*abl);
    add_train_options(*abl);

    Settings* pred = make(&app, "predict", "Answer spans from a checkpoint");
    for (const char* k : {"checkpoint", "dict", "data", "question", "context", "out", "max-answer-len"}) {
        pred->option(k, "Path or setting");
    }

    Settings* gc = make(&app, "gradcheck", "Finite-difference check of the gate backward pass");
    gc->option("trials", "Random instances");
    gc->option("epsilon", "Central-difference step");
    gc->option("out", "Result JSON");
    bool corrupt = false;
    gc->app()->add_flag("--corrupt-backward", corrupt, "Test hook: perturb the analytic gradient")->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        for (auto& [a, s] : subs) {
            if (!a->parsed()) continue;
            s->finalize();
            if (s.get() == icd_build) return cmd_icd_build(*s);
            if (s.get() == icd_show) return cmd_icd_show(*s);
            if (s.get() == ingest) return cmd_data_ingest(*s);
            if (s.get() == split) return cmd_data_split(*s);
            if (s.get() == augment) return cmd_data_augment(*s);
            if (s.get() == gen) return cmd_data_generate(*s);
            if (s.get() == vtrain) return cmd_vocab_train(*s);
            if (s.get() == train) return cmd_train(*s);
            if (s.get() == ev) return cmd_eval(*s);
            if (s.get() == abl) return cmd_ablate(*s);
            if (s.get() == pred) return cmd_predict(*s);
            if (s.get() == gc) return cmd_gradcheck(*s, corrupt);
        }
        throw std::logic_error("no command ran");
    } catch (const ValidationError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
}
