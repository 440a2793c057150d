// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures capped at 1.
//
//   acceptance [--cli PATH] [--only 1,4,7] [--work DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "json.hpp"
#include "oracles.h"

#include "cgra/concept_dictionary.h"
#include "cgra/dataset.h"
#include "cgra/evaluation.h"
#include "cgra/gating.h"
#include "cgra/json_util.h"
#include "cgra/model.h"
#include "cgra/rng.h"
#include "cgra/synth.h"
#include "cgra/training.h"

using namespace cgra;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kBoostTol = 0.005;
constexpr double kTableSeconds = 1.0;
constexpr double kGradTol = 1e-6;
constexpr double kGradEps = 1e-5;
constexpr double kGradSeconds = 10.0;
constexpr double kIdentityTol = 1e-12;
constexpr double kAblationTol = 1e-9;
constexpr double kLoraTol = 1e-12;
constexpr std::size_t kGateParams = 590592;
constexpr std::size_t kGateBudget = 1200000;
constexpr double kOverfitEm = 95.0;
constexpr long kOverfitSteps = 2000;
constexpr double kOverfitSeconds = 300.0;
constexpr double kMetricTol = 1e-9;
constexpr double kLatencyRatio = 1.15;

const fs::path kDict = CGRA_DATA_DIR "/icd_terms.json";

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double linf(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

std::vector<std::string> corpus_of(const std::vector<QaRecord>& recs) {
    std::vector<std::string> c;
    for (const auto& r : recs) {
        c.push_back(r.question);
        c.push_back(r.context);
    }
    return c;
}

// ---------------------------------------------------------------------------

Outcome concept_table() {
    // Published rows, transcribed by hand.
    struct Row {
        const char* term;
        double is, bf;
    };
    static const Row rows[] = {{"allah", 1.000, 3.00},   {"messenger", 0.705, 2.41}, {"hadith", 0.550, 2.10},
                               {"prophet", 0.370, 1.74},  {"prayer", 0.150, 1.30},    {"umar", 0.105, 1.21},
                               {"muslim", 0.045, 1.09},   {"ali", 0.035, 1.07},       {"muhammad", 0.035, 1.07},
                               {"paradise", 0.030, 1.06}, {"faith", 0.025, 1.05},     {"islam", 0.020, 1.04}};
    const auto t0 = std::chrono::steady_clock::now();
    const ConceptDictionary dict = load_dictionary(kDict);
    double worst = 0.0;
    int matched = 0;
    std::string missing;
    for (const Row& r : rows) {
        const ConceptEntry* e = dict.find(r.term);
        if (e == nullptr || e->importance_score != r.is) {
            missing += std::string(" ") + r.term;
            continue;
        }
        worst = std::max({worst, std::abs(boost_factor(e->importance_score) - r.bf),
                          std::abs(e->boost_factor - r.bf)});
        ++matched;
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = matched == 12 && dict.size() == 12 && worst <= kBoostTol && secs < kTableSeconds;
    o.detail = fmt::format("{}/12 entries, max |BF - published| = {:.4f} (tol {}), {:.3f}s{}", matched, worst,
                           kBoostTol, secs, missing.empty() ? "" : ", missing:" + missing);
    return o;
}

Outcome gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    const gating::RandomCheckSummary s = gating::random_gradient_checks(20240601, 100, kGradEps);
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = s.trials == 100 && s.worst_relative_error < kGradTol && secs < kGradSeconds;
    o.detail = fmt::format("{} instances, {} scalars, max rel err {:.3e} (tol {:.0e}), {:.2f}s", s.trials,
                           s.checked, s.worst_relative_error, kGradTol, secs);
    return o;
}

Outcome identities() {
    Rng rng(31);
    // (a) closed gate
    double worst_a = 0.0;
    for (int t = 0; t < 20; ++t) {
        const std::size_t L = 1 + rng.uniform_index(8), d = 1 + rng.uniform_index(16);
        gating::GateParams p = gating::GateParams::zeros(d);
        for (std::size_t i = 0; i < d; ++i) p.b[i] = -40.0;
        Matrix x(L, d);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
        std::vector<Real> m(L);
        for (Real& v : m) v = 1.0 + 2.0 * rng.uniform();
        worst_a = std::max(worst_a, linf(gating::gate_forward(x, m, p).r, x));
    }

    // (b) NO_ICD against FULL with an empty dictionary, (c) LoRA B = 0
    SynthConfig sc;
    sc.count = 12;
    sc.seed = 5;
    const auto recs = generate_synthetic(sc);
    const Vocab vocab = train_vocab(corpus_of(recs), 400);
    const ConceptDictionary dict = load_dictionary(kDict);
    const ConceptDictionary empty;
    const auto with = encode_dataset(recs, vocab, &dict, 384).examples;
    const auto without = encode_dataset(recs, vocab, &empty, 384).examples;
    ModelConfig mc;
    mc.vocab_size = static_cast<int>(vocab.size());
    mc.seed = 8;
    // Nonzero LoRA B so (b) exercises every path that is live in a trained model.
    Model trained(mc);
    for (Param* p : trained.parameters()) {
        if (p->group != ParamGroup::kFrozen) {
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                p->value[i] = static_cast<double>(static_cast<float>(0.05 * rng.normal()));
            }
        }
    }
    const Model no_icd = apply_ablation(trained, AblationVariant::kNoIcd);
    bool boosts_equal = true;
    double worst_b = 0.0;
    for (std::size_t i = 0; i < with.size(); ++i) {
        const auto b1 = no_icd.effective_boost(with[i].tok);
        const auto b2 = trained.effective_boost(without[i].tok);
        boosts_equal = boosts_equal && b1 == b2 && no_icd.effective_flags(with[i].tok) ==
                                                       trained.effective_flags(without[i].tok);
        worst_b = std::max(worst_b, linf(no_icd.encode(with[i].tok), trained.encode(without[i].tok)));
    }

    const Model fresh(mc);
    Model base = fresh;
    base.set_use_lora(false);
    double worst_c = 0.0;
    bool b_zero = true;
    for (const Param* p : fresh.parameters()) {
        if (p->group == ParamGroup::kLora && p->name.ends_with(".lora_b")) {
            for (std::size_t i = 0; i < p->value.size(); ++i) b_zero = b_zero && p->value[i] == 0.0;
        }
    }
    for (const auto& ex : with) worst_c = std::max(worst_c, linf(fresh.encode(ex.tok), base.encode(ex.tok)));

    Outcome o;
    o.pass = worst_a < kIdentityTol && boosts_equal && worst_b < kAblationTol && b_zero && worst_c < kLoraTol;
    o.detail = fmt::format("(a) |R-X| {:.2e}; (b) boosts {}, |dH| {:.2e}; (c) B=0 {}, |dH| {:.2e}", worst_a,
                           boosts_equal ? "identical" : "DIFFER", worst_b, b_zero ? "yes" : "no", worst_c);
    return o;
}

Outcome budget() {
    ModelConfig c;
    c.hidden = 768;
    c.heads = 12;
    c.layers = 12;
    c.vocab_size = 128100;
    c.max_len = 512;
    c.max_rel_distance = 256;
    c.gate_mode = GateMode::kShared;
    const ParameterReport r = count_parameters(c);
    Outcome o;
    o.pass = r.gates == kGateParams && r.gates < kGateBudget;
    o.detail = fmt::format("gating trainables {} (expected {}, budget {})", r.gates, kGateParams, kGateBudget);
    return o;
}

Outcome overfit() {
    const auto t0 = std::chrono::steady_clock::now();
    SynthConfig sc;
    sc.count = 64;
    sc.seed = 11;
    const auto recs = generate_synthetic(sc);
    const Vocab vocab = train_vocab(corpus_of(recs), 512);
    const ConceptDictionary dict = load_dictionary(kDict);
    const auto data = encode_dataset(recs, vocab, &dict, 384).examples;
    ModelConfig mc;  // 2 layers, d = 32, 4 heads
    mc.vocab_size = static_cast<int>(vocab.size());
    mc.seed = 3;
    Model model(mc);
    TrainConfig tc;
    tc.learning_rate = 3e-3;
    tc.warmup_steps = 100;
    tc.max_steps = kOverfitSteps;
    tc.max_epochs = 1000;
    tc.patience = 1000;
    tc.seed = 3;
    StageConfig st = StageConfig::specialization();
    st.epochs = 1000;
    const TrainOutcome out = train_two_stage(model, data, data, tc, {st});
    const SetScore s = score_examples(model, data, tc.max_answer_len);
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = vocab.size() <= 512 && out.history.total_steps <= kOverfitSteps && s.em >= kOverfitEm &&
             secs < kOverfitSeconds;
    o.detail = fmt::format("train EM {:.1f}% after {} steps (vocab {}), {:.0f}s", s.em, out.history.total_steps,
                           vocab.size(), secs);
    return o;
}

Outcome concept_sensitivity() {
    const ConceptDictionary dict = load_dictionary(kDict);
    const AblationVariant variants[] = {AblationVariant::kFull, AblationVariant::kNoGating, AblationVariant::kNoIcd};
    std::vector<double> em[3];
    const HashEmbedder embedder(16);
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SynthConfig sc;
        sc.count = 1000;
        sc.seed = 100 + seed;
        sc.context_words_min = 20;
        sc.context_words_max = 30;
        sc.distractor_clauses = 1;
        sc.answer_words_max = 1;
        const DatasetSplit split = split_dataset(generate_synthetic(sc), {0.8, 0.1, 0.1}, seed);
        const Vocab vocab = train_vocab(corpus_of(split.train), 512);
        const auto tr = encode_dataset(split.train, vocab, &dict, 384).examples;
        const auto va = encode_dataset(split.val, vocab, &dict, 384).examples;
        SynthConfig hc = sc;
        hc.seed = 900 + seed;
        hc.id_prefix = "ho";
        const auto te = encode_dataset(generate_synthetic(hc), vocab, &dict, 384).examples;
        per_seed += fmt::format(" s{}:", seed);
        for (int k = 0; k < 3; ++k) {
            ModelConfig mc;
            mc.vocab_size = static_cast<int>(vocab.size());
            mc.seed = seed;
            Model model = apply_ablation(Model(mc), variants[k]);
            TrainConfig tc;
            tc.learning_rate = 3e-3;
            tc.warmup_steps = 30;
            tc.patience = 1000;
            tc.seed = seed;
            StageConfig s1 = StageConfig::adaptation();
            s1.epochs = 1;
            StageConfig s2 = StageConfig::specialization();
            s2.epochs = 12;
            Trainer trainer(model, tr, va, tc);
            trainer.run_stage(s1);
            trainer.run_stage(s2);
            trainer.restore_best();
            EvalOptions eo;
            eo.measure_latency = false;
            eo.embedder = &embedder;
            em[k].push_back(evaluate(model, vocab, te, variants[k], eo).report.em);
            per_seed += fmt::format("{}{:.1f}", k == 0 ? "" : "/", em[k].back());
        }
    }
    const double full = median(em[0]), gating = median(em[1]), icd = median(em[2]);
    Outcome o;
    o.pass = full >= gating && full >= icd;
    o.detail = fmt::format("median held-out EM FULL {:.1f}, NO_GATING {:.1f}, NO_ICD {:.1f};{}", full, gating, icd,
                           per_seed);
    return o;
}

Outcome metric_oracles() {
    Rng rng(777);
    double worst_f1 = 0.0, worst_bleu = 0.0, worst_rouge = 0.0;
    for (int i = 0; i < 50; ++i) {
        const std::string p = oracle::random_answer(rng, 8), g = oracle::random_answer(rng, 8);
        worst_f1 = std::max(worst_f1, std::abs(token_f1(p, g) - oracle::token_f1(p, g)));
        worst_bleu = std::max(worst_bleu, std::abs(bleu(p, g) - oracle::bleu(p, g)));
        worst_rouge = std::max(worst_rouge, std::abs(rouge_l(p, g) - oracle::rouge_l(p, g)));
    }
    // Every length pair up to 8 over a 3-word alphabet.
    static const std::string alphabet[] = {"x", "y", "z"};
    int lcs_mismatch = 0, lcs_cases = 0;
    for (std::size_t la = 0; la <= 8; ++la) {
        for (std::size_t lb = 0; lb <= 8; ++lb) {
            for (int rep = 0; rep < 20; ++rep) {
                oracle::Tokens a(la), b(lb);
                for (auto& t : a) t = alphabet[rng.uniform_index(3)];
                for (auto& t : b) t = alphabet[rng.uniform_index(3)];
                ++lcs_cases;
                if (lcs_length(a, b) != oracle::lcs_exhaustive(a, b)) ++lcs_mismatch;
            }
        }
    }
    Outcome o;
    o.pass = worst_f1 < kMetricTol && worst_bleu < kMetricTol && worst_rouge < kMetricTol && lcs_mismatch == 0;
    o.detail = fmt::format("50 pairs: max diff F1 {:.1e}, BLEU {:.1e}, ROUGE-L {:.1e} (tol {:.0e}); LCS DP vs "
                           "exhaustive {}/{} agree",
                           worst_f1, worst_bleu, worst_rouge, kMetricTol, lcs_cases - lcs_mismatch, lcs_cases);
    return o;
}

Outcome overhead() {
    SynthConfig sc;
    sc.count = 50;
    sc.seed = 21;
    const auto recs = generate_synthetic(sc);
    const Vocab vocab = train_vocab(corpus_of(recs), 512);
    const ConceptDictionary dict = load_dictionary(kDict);
    const auto data = encode_dataset(recs, vocab, &dict, 384).examples;
    ModelConfig mc;
    mc.vocab_size = static_cast<int>(vocab.size());
    const Model model(mc);
    const Model full = apply_ablation(model, AblationVariant::kFull);
    const Model plain = apply_ablation(model, AblationVariant::kNoGating);
    for (int w = 0; w < 3; ++w) {  // warm caches
        measure_latency_ms(full, data[0].tok, 1);
        measure_latency_ms(plain, data[0].tok, 1);
    }
    std::vector<double> tf, tp;
    for (const auto& ex : data) {  // interleaved so drift hits both alike
        tf.push_back(measure_latency_ms(full, ex.tok, 7));
        tp.push_back(measure_latency_ms(plain, ex.tok, 7));
    }
    const double mf = median(tf), mp = median(tp), ratio = mf / mp;
    Outcome o;
    o.pass = ratio <= kLatencyRatio;
    o.detail = fmt::format("median forward over {} sequences: FULL {:.3f} ms, NO_GATING {:.3f} ms, ratio {:.3f} "
                           "(limit {})",
                           data.size(), mf, mp, ratio, kLatencyRatio);
    return o;
}

int run(const std::string& cmd) {
    const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
    return rc;
}

std::string pipeline(const std::string& cli, const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string d = dir.string();
    const std::string dict = kDict.string();
    const std::vector<std::string> steps = {
        fmt::format("{} data generate --seed 17 --count 80 --context-min 20 --context-max 30 --distractors 1 "
                    "--answer-max 1 --format squad --out {}/raw.json",
                    cli, d),
        fmt::format("{} data ingest --input {}/raw.json --out {}/records.jsonl", cli, d, d),
        fmt::format("{} data split --seed 4 --input {}/records.jsonl --ratios 0.8,0.1,0.1 --out-dir {}/split", cli, d,
                    d),
        fmt::format("{} vocab train --input {}/split/train.jsonl --size 300 --out {}/vocab.txt", cli, d, d),
        fmt::format("{} train --seed 6 --train {}/split/train.jsonl --val {}/split/val.jsonl --vocab {}/vocab.txt "
                    "--dict {} --layers 1 --hidden 16 --heads 2 --max-len 128 --lr 3e-3 --warmup 4 "
                    "--stage1-epochs 1 --stage2-epochs 2 --out {}/model.ckpt --history {}/history.csv",
                    cli, d, d, d, dict, d, d),
        fmt::format("{} eval --checkpoint {}/model.ckpt --data {}/split/test.jsonl --dict {} --embedder model "
                    "--no-latency --out {}/report.json --predictions {}/predictions.json",
                    cli, d, d, dict, d, d),
    };
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (run(steps[i]) != 0) return fmt::format("step {} failed: {}", i + 1, steps[i]);
    }
    return "";
}

std::string work_dir = (fs::temp_directory_path() / "cgra_acceptance").string();
std::string cli_path;

Outcome determinism() {
    Outcome o;
    if (cli_path.empty() || !fs::exists(cli_path)) {
        o.detail = "CLI binary not given (--cli)";
        return o;
    }
    const fs::path a = fs::path(work_dir) / "run_a", b = fs::path(work_dir) / "run_b";
    for (const fs::path& dir : {a, b}) {
        const std::string err = pipeline(cli_path, dir);
        if (!err.empty()) {
            o.detail = err;
            return o;
        }
    }
    std::vector<std::string> differ;
    for (const char* f : {"model.ckpt", "report.json", "predictions.json", "history.csv", "records.jsonl",
                          "split/test.jsonl", "vocab.txt"}) {
        if (read_text_file(a / f) != read_text_file(b / f)) differ.push_back(f);
    }
    const auto report = nlohmann::json::parse(read_text_file(a / "report.json"));
    o.pass = differ.empty() && !report.contains("mean_latency_ms");
    std::string list;
    for (const auto& f : differ) list += " " + f;
    o.detail = differ.empty()
                   ? fmt::format("checkpoints ({} bytes), reports and predictions identical; EM {:.1f}",
                                 fs::file_size(a / "model.ckpt"), report.value("em", -1.0))
                   : "differs:" + list;
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--cli" && i + 1 < argc) {
            cli_path = argv[++i];
        } else if (a == "--work" && i + 1 < argc) {
            work_dir = argv[++i];
        } else if (a == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            std::string tok;
            while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
        } else {
            std::fprintf(stderr, "usage: %s [--cli PATH] [--work DIR] [--only 1,2,...]\n", argv[0]);
            return 2;
        }
    }
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"concept table boost factors", concept_table},
        {"gate gradient check", gradients},
        {"identity and ablation coherence", identities},
        {"gating parameter budget", budget},
        {"learning sanity (64 pairs)", overfit},
        {"directional concept sensitivity", concept_sensitivity},
        {"metric oracle equivalence", metric_oracles},
        {"gating latency overhead", overhead},
        {"pipeline determinism", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i) + 1;
        if (!only.empty() && !only.contains(n)) continue;
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        if (!o.pass) ++failures;
        std::printf("%s [%d] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
