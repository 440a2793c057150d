#include "cgra/synth.h"

#include <stdexcept>

#include "cgra/rng.h"

namespace cgra {

namespace {

using Words = std::vector<std::string>;

const Words kNarrators = {"zaid",   "bilal",  "anas",    "khalid",  "hassan", "salman", "jabir",
                          "abdullah", "malik", "sufyan", "ibrahim", "yusuf",  "harun",  "talha",
                          "zubair", "saad",   "musa",    "nafi",    "qatada", "awf",    "thabit",
                          "ubayy",  "muadh",  "amr",     "hudhayfa", "layth", "sahl",   "rafi"};

const Words kSaying = {"kindness", "charity",  "patience",  "truth",    "mercy",   "honesty",
                       "neighbors", "orphans", "water",     "bread",    "dates",   "travel",
                       "knowledge", "night",   "dawn",      "fasting",  "family",  "guests",
                       "trade",    "justice",  "humility",  "gratitude", "forgiveness", "modesty",
                       "silence",  "speech",   "wealth",    "poverty",  "health",  "sleep",
                       "deeds",    "markets",  "wells",     "gardens",  "rain",    "seeds",
                       "camels",   "gold",     "brothers",  "elders",   "widows",  "debts"};

const Words kSayingConcepts = {"prayer", "faith", "paradise", "islam", "muslim"};

const Words kClosings[] = {{"and", "the", "people", "listened"},
                           {"and", "they", "remembered", "it"},
                           {"and", "it", "was", "written", "down"},
                           {"and", "the", "companions", "agreed"},
                           {"and", "nobody", "disputed", "this"}};

const Words kFiller[] = {{"it", "was", "narrated", "from", "@", "from", "@", "that"},
                         {"in", "the", "time", "of", "the", "early", "community"},
                         {"after", "the", "prayer", "in", "the", "mosque", "of", "medina"},
                         {"the", "muslim", "people", "gathered", "near", "the", "well"},
                         {"this", "report", "came", "through", "@", "who", "heard", "it", "from", "@"},
                         {"on", "a", "journey", "between", "mecca", "and", "medina"},
                         {"during", "the", "month", "of", "fasting", "in", "that", "year"},
                         {"people", "of", "faith", "from", "the", "valley", "came", "to", "listen"},
                         {"in", "a", "gathering", "at", "the", "house", "of", "@"}};

const Words kQuestionA[] = {{"according", "to", "this", "narration", "here"},
                            {"in", "the", "report", "given", "here"},
                            {"based", "on", "the", "chain", "above"},
                            {"as", "told", "in", "this", "account"}};
const Words kQuestionB[] = {{"what", "did", "the", "honored", "one"},
                            {"which", "words", "did", "the", "revered"},
                            {"what", "was", "declared", "by", "the"},
                            {"what", "teaching", "did", "the", "noble"}};
const Words kQuestionC[] = {{"speaker", "convey", "to", "the", "listeners"},
                            {"figure", "pass", "on", "to", "them"},
                            {"authority", "give", "in", "that", "gathering"},
                            {"source", "tell", "the", "gathered", "people"}};

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
    return v[static_cast<std::size_t>(rng.uniform_index(v.size()))];
}

template <typename T, std::size_t N>
const T& pick(Rng& rng, const T (&v)[N]) {
    return v[static_cast<std::size_t>(rng.uniform_index(N))];
}

struct Clause {
    Words words;
    std::size_t answer_begin = 0;  // word index of the saying, concept clause only
    std::size_t answer_len = 0;
    bool is_concept = false;
};

Clause make_clause(Rng& rng, const SynthConfig& cfg, const std::string& speaker, bool planted) {
    Clause c;
    c.is_concept = planted;
    c.words = {speaker, "said"};
    const auto span = static_cast<std::uint64_t>(cfg.answer_words_max - cfg.answer_words_min + 1);
    const std::size_t n = static_cast<std::size_t>(cfg.answer_words_min) + rng.uniform_index(span);
    c.answer_begin = c.words.size();
    c.answer_len = n;
    for (std::size_t i = 0; i < n; ++i) {
        const bool use_concept = rng.uniform() < cfg.concept_in_answer_rate;
        c.words.push_back(use_concept ? pick(rng, kSayingConcepts) : pick(rng, kSaying));
    }
    const Words& close = pick(rng, kClosings);
    c.words.insert(c.words.end(), close.begin(), close.end());
    return c;
}

Words make_filler(Rng& rng) {
    Words w = pick(rng, kFiller);
    for (std::string& s : w) {
        if (s == "@") s = pick(rng, kNarrators);
    }
    return w;
}

}  // namespace

const std::vector<std::string>& synthetic_concept_speakers() {
    static const std::vector<std::string> v = {"prophet", "messenger", "umar", "ali", "muhammad",
                                               "allah"};
    return v;
}

std::vector<QaRecord> generate_synthetic(const SynthConfig& cfg) {
    if (cfg.context_words_min < 1 || cfg.context_words_max < cfg.context_words_min) {
        throw std::invalid_argument("synthetic: bad context length range");
    }
    if (cfg.answer_words_min < 1 || cfg.answer_words_max < cfg.answer_words_min) {
        throw std::invalid_argument("synthetic: bad answer length range");
    }
    if (cfg.distractor_clauses < 0) throw std::invalid_argument("synthetic: negative distractors");

    Rng rng(cfg.seed);
    std::vector<QaRecord> out;
    out.reserve(cfg.count);
    for (std::size_t n = 0; n < cfg.count; ++n) {
        std::vector<Clause> clauses;
        clauses.push_back(make_clause(rng, cfg, pick(rng, synthetic_concept_speakers()), true));
        for (int d = 0; d < cfg.distractor_clauses; ++d) {
            clauses.push_back(make_clause(rng, cfg, pick(rng, kNarrators), false));
        }
        rng.shuffle(clauses);
        // Optionally pin the concept clause right after a distractor.
        const bool adjacent = clauses.size() > 1 && rng.uniform() < cfg.answer_adjacency;
        if (adjacent && clauses[0].is_concept) std::swap(clauses[0], clauses[1]);

        const auto range = static_cast<std::uint64_t>(cfg.context_words_max - cfg.context_words_min + 1);
        const std::size_t target = static_cast<std::size_t>(cfg.context_words_min) + rng.uniform_index(range);
        std::size_t used = 0;
        for (const Clause& c : clauses) used += c.words.size();

        // Filler goes into the gaps before, between and after clauses, but
        // never between a distractor and an adjacent concept clause.
        std::vector<Words> gaps(clauses.size() + 1);
        while (used < target) {
            Words f = make_filler(rng);
            if (f.size() > target - used) f.resize(target - used);
            std::size_t g = static_cast<std::size_t>(rng.uniform_index(gaps.size()));
            if (adjacent && g > 0 && g < clauses.size() && clauses[g].is_concept) {
                g = g + 1;
            }
            used += f.size();
            gaps[g].insert(gaps[g].end(), f.begin(), f.end());
        }

        QaRecord r;
        r.id = cfg.id_prefix + "-" + std::to_string(cfg.seed) + "-" + std::to_string(n);
        std::string ctx;
        auto append = [&](const std::string& w) {
            if (!ctx.empty()) ctx += ' ';
            ctx += w;
        };
        for (std::size_t i = 0; i <= clauses.size(); ++i) {
            for (const std::string& w : gaps[i]) append(w);
            if (i == clauses.size()) break;
            const Clause& c = clauses[i];
            for (std::size_t k = 0; k < c.words.size(); ++k) {
                if (c.is_concept && k == c.answer_begin) {
                    r.answer_start = ctx.empty() ? 0 : ctx.size() + 1;
                }
                append(c.words[k]);
                if (c.is_concept && k + 1 == c.answer_begin + c.answer_len) {
                    r.answer_text = ctx.substr(r.answer_start);
                }
            }
        }
        r.context = std::move(ctx);
        r.answers = {r.answer_text};

        Words q;
        for (const auto* part : {&pick(rng, kQuestionA), &pick(rng, kQuestionB), &pick(rng, kQuestionC)}) {
            q.insert(q.end(), part->begin(), part->end());
        }
        if (rng.uniform() < cfg.long_question_rate) q.push_back("exactly");
        for (const std::string& w : q) {
            if (!r.question.empty()) r.question += ' ';
            r.question += w;
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace cgra
