#include <cmath>
#include <set>

#include "doctest.h"

#include "cgra/concept_dictionary.h"
#include "cgra/dataset.h"
#include "cgra/error.h"
#include "cgra/synth.h"
#include "cgra/text.h"
#include "cgra/training.h"

using namespace cgra;

namespace {

struct ToyTask {
    ConceptDictionary dict;
    Vocab vocab;
    std::vector<Example> train, val;
};

ToyTask toy_task() {
    ToyTask t;
    t.dict = load_dictionary(CGRA_DATA_DIR "/icd_terms.json");
    SynthConfig c;
    c.count = 12;
    c.seed = 4;
    c.context_words_min = 20;
    c.context_words_max = 24;
    c.distractor_clauses = 1;
    c.answer_words_max = 1;
    const auto recs = generate_synthetic(c);
    std::vector<std::string> corpus;
    for (const auto& r : recs) corpus.push_back(r.question + " " + r.context);
    t.vocab = train_vocab(corpus, 400);
    auto enc = encode_dataset(recs, t.vocab, &t.dict, 96).examples;
    t.train.assign(enc.begin(), enc.begin() + 8);
    t.val.assign(enc.begin() + 8, enc.end());
    return t;
}

ModelConfig toy_model(const ToyTask& t) {
    ModelConfig m;
    m.layers = 1;
    m.hidden = 16;
    m.heads = 2;
    m.max_len = 96;
    m.vocab_size = static_cast<int>(t.vocab.size());
    m.seed = 9;
    return m;
}

TrainConfig toy_train() {
    TrainConfig c;
    c.learning_rate = 1e-2;
    c.warmup_steps = 1;
    c.patience = 100;
    c.seed = 2;
    return c;
}

std::vector<Matrix> values_in(Model& m, ParamGroup g) {
    std::vector<Matrix> out;
    for (Param* p : m.parameters()) {
        if (p->group == g) out.push_back(p->value);
    }
    return out;
}

}  // namespace

TEST_CASE("warmup then linear decay") {
    CHECK(lr_schedule(0, 2e-5, 500, 1000) == 0.0);
    CHECK(lr_schedule(250, 2e-5, 500, 1000) == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(lr_schedule(500, 2e-5, 500, 1000) == doctest::Approx(2e-5).epsilon(1e-12));
    CHECK(lr_schedule(750, 2e-5, 500, 1000) == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(lr_schedule(1000, 2e-5, 500, 1000) == 0.0);
    CHECK_THROWS_AS(lr_schedule(0, 2e-5, 500, 500), ValidationError);
    CHECK_THROWS_AS(lr_schedule(1001, 2e-5, 500, 1000), std::invalid_argument);
    TrainConfig c;
    CHECK(lr_schedule(500, c, 2000) == doctest::Approx(c.learning_rate));
}

TEST_CASE("adamw_update matches a scalar oracle") {
    TrainConfig cfg;
    cfg.weight_decay = 0.01;
    Matrix p(1, 1), g(1, 1);
    p[0] = 0.7;
    AdamMoments st;
    double op = 0.7, m = 0.0, v = 0.0;
    const double lr = 1e-2;
    for (long t = 1; t <= 10; ++t) {
        const double grad = std::sin(static_cast<double>(t)) - 0.3 * op;
        g[0] = grad;
        adamw_update(p, g, st, t, lr, cfg);
        m = 0.9 * m + 0.1 * grad;
        v = 0.999 * v + 0.001 * grad * grad;
        const double mh = m / (1.0 - std::pow(0.9, static_cast<double>(t)));
        const double vh = v / (1.0 - std::pow(0.999, static_cast<double>(t)));
        op -= lr * (mh / (std::sqrt(vh) + 1e-8) + 0.01 * op);
        CHECK(std::abs(p[0] - op) < 1e-15);
    }
}

TEST_CASE("adamw zero gradient: unchanged without decay, shrunk with it") {
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    Matrix p(2, 2), g(2, 2);
    for (std::size_t i = 0; i < 4; ++i) p[i] = 0.25 * static_cast<double>(i + 1);
    const Matrix before = p;
    AdamMoments st;
    adamw_update(p, g, st, 1, 1e-3, cfg);
    CHECK(p == before);
    cfg.weight_decay = 0.01;
    AdamMoments st2;
    adamw_update(p, g, st2, 1, 1e-3, cfg);
    for (std::size_t i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(before[i] * (1.0 - 1e-3 * 0.01)).epsilon(1e-14));
    CHECK_THROWS_AS(adamw_update(p, Matrix(1, 2), st2, 2, 1e-3, cfg), std::invalid_argument);
}

TEST_CASE("patience counts evaluations without improvement") {
    CHECK(early_stop_index({50, 50, 50, 50}, 3) == std::optional<std::size_t>(3));
    CHECK(early_stop_index({10, 20, 30, 40}, 3) == std::nullopt);
    CHECK(early_stop_index({10, 20, 15, 20, 19, 25, 24, 23, 22}, 3) == std::optional<std::size_t>(4));
    CHECK_THROWS_AS(early_stop_index({1}, 0), std::invalid_argument);
}

TEST_CASE("kfold folds are disjoint and cover every index") {
    const auto folds = kfold_split(10, 5, 3);
    REQUIRE(folds.size() == 5);
    std::set<std::size_t> seen;
    for (const auto& f : folds) {
        CHECK(f.val.size() == 2);
        CHECK(f.train.size() == 8);
        for (auto i : f.val) CHECK(seen.insert(i).second);
        std::set<std::size_t> both(f.train.begin(), f.train.end());
        for (auto i : f.val) CHECK_FALSE(both.contains(i));
    }
    CHECK(seen.size() == 10);
    const auto uneven = kfold_split(11, 5, 3);
    std::size_t total = 0;
    for (const auto& f : uneven) {
        CHECK(f.val.size() >= 2);
        CHECK(f.val.size() <= 3);
        total += f.val.size();
    }
    CHECK(total == 11);
    CHECK(kfold_split(10, 5, 4)[0].val != folds[0].val);
    CHECK_THROWS_AS(kfold_split(10, 1, 3), ValidationError);
    CHECK_THROWS_AS(kfold_split(3, 5, 3), ValidationError);
}

TEST_CASE("synonym augmentation never touches concepts or answers") {
    const auto dict = load_dictionary(CGRA_DATA_DIR "/icd_terms.json");
    QaRecord r;
    r.id = "a";
    r.question = "What did he say?";
    r.context = "The Prophet said kindness to the people and the people listened";
    r.answer_text = "kindness";
    r.answer_start = r.context.find("kindness");
    r.answers = {r.answer_text};

    CHECK(augment_synonym(r, SynonymTable{}, dict, 1.0, 1).record == r);
    CHECK_THROWS_AS(SynonymTable({{"prophet", {"seer"}}}, dict), ValidationError);
    CHECK_THROWS_AS(SynonymTable({{"people", {"muslim folk"}}}, dict), ValidationError);

    const SynonymTable table({{"people", {"folk", "crowd"}}, {"kindness", {"care"}}, {"listened", {"heard"}}},
                             dict);
    const AugmentResult res = augment_synonym(r, table, dict, 1.0, 1);
    CHECK(res.eligible == 3);  // two "people" and "listened"; the answer word is skipped
    CHECK(res.replaced == 3);
    CHECK(res.record.context.find("Prophet") != std::string::npos);
    CHECK(res.record.context.compare(res.record.answer_start, 8, "kindness") == 0);
    CHECK(res.record.context.find("listened") == std::string::npos);
    CHECK_THROWS_AS(augment_synonym(r, table, dict, 1.5, 1), std::invalid_argument);
}

TEST_CASE("augmentation rate is honored on average") {
    const auto dict = load_dictionary(CGRA_DATA_DIR "/icd_terms.json");
    QaRecord r;
    r.id = "b";
    r.question = "q";
    r.answer_text = "end";
    for (int i = 0; i < 1000; ++i) r.context += "river ";
    r.answer_start = r.context.size();
    r.context += "end";
    r.answers = {"end"};
    const SynonymTable table({{"river", {"stream"}}}, dict);
    const AugmentResult res = augment_synonym(r, table, dict, 0.5, 77);
    CHECK(res.eligible == 1000);
    const double frac = static_cast<double>(res.replaced) / 1000.0;
    CHECK(frac > 0.45);
    CHECK(frac < 0.55);
    CHECK(augment_synonym(r, table, dict, 0.5, 77).record == res.record);
}

TEST_CASE("adaptation stage leaves gates and frozen weights untouched") {
    const ToyTask t = toy_task();
    Model model(toy_model(t));
    const auto gates0 = values_in(model, ParamGroup::kGates);
    const auto frozen0 = values_in(model, ParamGroup::kFrozen);
    const auto heads0 = values_in(model, ParamGroup::kHeads);
    const auto domain0 = values_in(model, ParamGroup::kEmbedDomain);
    Trainer tr(model, t.train, t.val, toy_train());
    StageConfig s1 = StageConfig::adaptation();
    s1.epochs = 2;
    tr.run_stage(s1);
    CHECK(tr.steps() == 4);
    CHECK(values_in(model, ParamGroup::kGates) == gates0);
    CHECK(values_in(model, ParamGroup::kFrozen) == frozen0);
    CHECK(values_in(model, ParamGroup::kEmbedDomain) == domain0);
    CHECK(values_in(model, ParamGroup::kHeads) != heads0);

    StageConfig s2 = StageConfig::specialization();
    s2.epochs = 1;
    tr.run_stage(s2);
    CHECK(values_in(model, ParamGroup::kGates) != gates0);
    CHECK(values_in(model, ParamGroup::kFrozen) == frozen0);
    CHECK(tr.history().records.size() == 3);
    CHECK(tr.history().records[0].stage == to_string(Stage::kAdaptation));
    CHECK(tr.history().records[2].stage == to_string(Stage::kSpecialization));
}

TEST_CASE("training with a fixed seed is reproducible") {
    const ToyTask t = toy_task();
    auto run = [&] {
        Model model(toy_model(t));
        StageConfig s1 = StageConfig::adaptation();
        s1.epochs = 1;
        StageConfig s2 = StageConfig::specialization();
        s2.epochs = 2;
        TrainOutcome out = train_two_stage(model, t.train, t.val, toy_train(), {s1, s2});
        return std::make_pair(out.history, model.parameters()[0]->value);
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    CHECK(a.first.total_steps == 6);
    CHECK(a.first.best_index.has_value());
}

TEST_CASE("a model built without concepts stays without them") {
    const ToyTask t = toy_task();
    ModelConfig mc = toy_model(t);
    mc.use_concepts = false;
    Model model(mc);
    Trainer tr(model, t.train, t.val, toy_train());
    StageConfig s2 = StageConfig::specialization();
    s2.epochs = 1;
    tr.run_stage(s2);
    CHECK_FALSE(model.config().use_concepts);
    const auto boost = model.effective_boost(t.train[0].tok);
    CHECK(boost == std::vector<Real>(boost.size(), 1.0));
}

TEST_CASE("max_steps caps training") {
    const ToyTask t = toy_task();
    Model model(toy_model(t));
    TrainConfig c = toy_train();
    c.max_steps = 3;
    StageConfig s = StageConfig::specialization();
    s.epochs = 5;
    const TrainOutcome out = train_two_stage(model, t.train, t.val, c, {s});
    CHECK(out.history.total_steps == 3);
}

TEST_CASE("config validation") {
    TrainConfig c;
    c.effective_batch = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    StageConfig s;
    s.epochs = -1;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    const TrainConfig round = train_config_from_json(to_json(TrainConfig{}));
    CHECK(to_json(round) == to_json(TrainConfig{}));
}
