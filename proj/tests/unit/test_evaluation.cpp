#include <cmath>

#include "doctest.h"
#include "oracles.h"

#include "cgra/concept_dictionary.h"
#include "cgra/dataset.h"
#include "cgra/error.h"
#include "cgra/evaluation.h"
#include "cgra/synth.h"

using namespace cgra;

TEST_CASE("answer normalization") {
    CHECK(normalize_answer("The Prophet.") == std::vector<std::string>{"prophet"});
    CHECK(normalize_answer("  an   Apple,  a day ") == std::vector<std::string>{"apple", "day"});
    CHECK(normalize_answer("").empty());
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const std::string s = oracle::random_answer(rng, 8);
        const auto once = normalize_answer(s);
        std::string joined;
        for (const auto& w : once) joined += w + " ";
        CHECK(normalize_answer(joined) == once);
        CHECK(once == oracle::normalize(s));
    }
}

TEST_CASE("exact match") {
    CHECK(exact_match({{"Five", "five."}}) == 100.0);
    CHECK(exact_match({{"a", "a"}, {"b", "b"}, {"c", "c"}, {"d", "x"}}) == 75.0);
    CHECK_THROWS_AS(exact_match({}), std::invalid_argument);
}

TEST_CASE("token F1 hand cases") {
    CHECK(token_f1("be kind", "be kind") == 1.0);
    // p = 2/3, r = 1
    CHECK(token_f1("be kind always", "be kind") == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(token_f1("", "") == 1.0);
    CHECK(token_f1("x", "") == 0.0);
    CHECK(token_f1("x y", "z") == 0.0);
}

TEST_CASE("BLEU hand cases") {
    CHECK(bleu("one two three four", "one two three four") == doctest::Approx(1.0));
    const BleuParts bp = bleu_parts("one two three four", "one two three four five six seven eight");
    CHECK(bp.brevity_penalty == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(bp.score == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(bleu("", "gold") == 0.0);
    // no bigram overlap: p2 smoothed to 1e-9
    const double s = bleu("x y", "y x", 2);
    CHECK(s == doctest::Approx(std::sqrt(1.0 * 1e-9)).epsilon(1e-9));
    CHECK_THROWS_AS(bleu("a", "a", 0), std::invalid_argument);
}

TEST_CASE("ROUGE-L hand case") {
    // LCS 3 of 4 both ways
    CHECK(rouge_l("w x y z", "w y z q") == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(rouge_l("", "") == 1.0);
    CHECK(rouge_l("a", "") == 1.0);  // both normalize to empty
    CHECK(rouge_l("x", "y") == 0.0);
}

TEST_CASE("metrics agree with brute-force oracles") {
    Rng rng(2024);
    for (int i = 0; i < 300; ++i) {
        const std::string p = oracle::random_answer(rng, 8);
        const std::string g = oracle::random_answer(rng, 8);
        CAPTURE(p);
        CAPTURE(g);
        CHECK(std::abs(token_f1(p, g) - oracle::token_f1(p, g)) < 1e-12);
        CHECK(std::abs(bleu(p, g) - oracle::bleu(p, g)) < 1e-12);
        CHECK(std::abs(rouge_l(p, g) - oracle::rouge_l(p, g)) < 1e-12);
        const auto a = normalize_answer(p), b = normalize_answer(g);
        CHECK(lcs_length(a, b) == oracle::lcs_exhaustive(a, b));
        CHECK(lcs_length(a, b) == lcs_length(b, a));
    }
}

namespace {

// Fixed vectors for a handful of words so cosines are known.
class TableEmbedder : public TokenEmbedder {
public:
    std::size_t dim() const override { return 2; }
    Matrix embed(const std::vector<std::string>& tokens) const override {
        Matrix m(tokens.size(), 2);
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (tokens[i] == "east") {
                m(i, 0) = 1.0;
            } else if (tokens[i] == "north") {
                m(i, 1) = 1.0;
            } else {
                m(i, 0) = 1.0;
                m(i, 1) = 1.0;
            }
        }
        return m;
    }
};

}  // namespace

TEST_CASE("embedding similarity") {
    const TableEmbedder e;
    CHECK(embed_score_single("east", "east", e) == doctest::Approx(1.0));
    CHECK(embed_score_single("east", "north", e) == doctest::Approx(0.0));
    // pred {east, mid}: best cos 1 and 1/sqrt2 -> P = (1 + 1/sqrt2)/2; gold {east}: R = 1
    const double c = 1.0 / std::sqrt(2.0);
    const double prec = (1.0 + c) / 2.0;
    CHECK(embed_score_single("east mid", "east", e) == doctest::Approx(2.0 * prec / (prec + 1.0)).epsilon(1e-14));
    const HashEmbedder h(16);
    CHECK(embed_score_single("mercy night", "mercy night", h) == doctest::Approx(1.0));
    CHECK(embed_score({{"x", "x"}, {"", "y"}}, h) == doctest::Approx(0.5));
}

TEST_CASE("evaluation report agrees with the per-prediction metrics") {
    const auto dict = load_dictionary(CGRA_DATA_DIR "/icd_terms.json");
    SynthConfig c;
    c.count = 10;
    c.context_words_min = 20;
    c.context_words_max = 30;
    auto recs = generate_synthetic(c);
    recs[0].answers.push_back("and");  // an extra reference only adds matches
    std::vector<std::string> corpus;
    for (const auto& r : recs) corpus.push_back(r.question + " " + r.context);
    const Vocab v = train_vocab(corpus, 150);
    const auto data = encode_dataset(recs, v, &dict, 96).examples;
    ModelConfig mc;
    mc.hidden = 16;
    mc.max_len = 96;
    mc.vocab_size = static_cast<int>(v.size());
    const Model model(mc);
    const HashEmbedder h(8);
    EvalOptions eo;
    eo.measure_latency = false;
    eo.dict = &dict;
    eo.embedder = &h;
    const EvalResult res = evaluate(model, v, data, AblationVariant::kFull, eo);
    REQUIRE(res.predictions.size() == 10);
    CHECK(res.report.n_examples == 10);
    CHECK(res.report.mean_latency_ms == 0.0);
    double em = 0.0, f1 = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        double e = 0.0, f = 0.0;
        for (const auto& g : data[i].record.answers) {
            e = std::max(e, exact_match_single(res.predictions[i].pred_text, g) ? 100.0 : 0.0);
            f = std::max(f, 100.0 * token_f1(res.predictions[i].pred_text, g));
        }
        em += e / 10.0;
        f1 += f / 10.0;
    }
    CHECK(res.report.em == doctest::Approx(em));
    CHECK(res.report.f1 == doctest::Approx(f1));
    CHECK(evaluate(model, v, data, AblationVariant::kFull, eo).report.f1 == res.report.f1);
    CHECK_THROWS_AS(evaluate(model, v, {}, AblationVariant::kFull, eo), ValidationError);

    const AblationReport ab = run_ablation(model, v, data, eo);
    REQUIRE(ab.reports.size() == 4);
    CHECK(ab.reports[1].variant == "NO_GATING");
    const std::string table = format_ablation_table(ab);
    CHECK(table.rfind("Variant", 0) == 0);
    CHECK(table.find("BERTScore") != std::string::npos);
    const auto j = to_json(ab);
    CHECK(j["columns"] == nlohmann::json({"EM", "F1", "BERTScore"}));
}

TEST_CASE("variant names") {
    for (AblationVariant v : kAllVariants) CHECK(ablation_from_string(to_string(v)) == v);
    CHECK_THROWS(ablation_from_string("BOGUS"));
}
