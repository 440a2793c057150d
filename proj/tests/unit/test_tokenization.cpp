#include <set>

#include "doctest.h"

#include "cgra/concept_dictionary.h"
#include "cgra/error.h"
#include "cgra/rng.h"
#include "cgra/synth.h"
#include "cgra/text.h"
#include "cgra/tokenizer.h"

using namespace cgra;

namespace {

Vocab word_vocab(std::vector<std::string> words) {
    std::vector<std::string> p = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
    p.insert(p.end(), words.begin(), words.end());
    return Vocab(p);
}

std::vector<std::string> synthetic_texts(std::size_t n, std::uint64_t seed) {
    SynthConfig c;
    c.count = n;
    c.seed = seed;
    std::vector<std::string> out;
    for (const auto& r : generate_synthetic(c)) {
        out.push_back(r.question);
        out.push_back(r.context);
    }
    return out;
}

int count_segment(const TokenizedExample& ex, Segment s) {
    int n = 0;
    for (Segment x : ex.segments) n += x == s ? 1 : 0;
    return n;
}

}  // namespace

TEST_CASE("text normalization") {
    CHECK(text::normalize("The  Prophet, said!") == "the prophet said");
    CHECK(text::normalize("Ṣaḥīḥ") == "sahih");
    CHECK(text::normalize("Mohammed") == "muhammad");
    const std::string s = "  Abū Hurayra's   report: ‘Umar ";
    CHECK(text::normalize(text::normalize(s)) == text::normalize(s));
    const auto w = text::split_words("ab, cd");
    REQUIRE(w.size() == 2);
    CHECK(w[1].begin == 4);
    CHECK(w[1].end == 6);
}

TEST_CASE("train_vocab merges a repeated string into one piece") {
    const Vocab v = train_vocab({"aaab aaab"}, 64);
    REQUIRE(v.id_of("aaab").has_value());
    CHECK(v.tokenize("aaab") == std::vector<int>{*v.id_of("aaab")});
    CHECK(train_vocab({"aaab aaab"}, 64) == v);
}

TEST_CASE("train_vocab is deterministic and round-trips its corpus") {
    const auto corpus = synthetic_texts(40, 3);
    const Vocab a = train_vocab(corpus, 300);
    const Vocab b = train_vocab(corpus, 300);
    CHECK(a == b);
    CHECK(a.size() <= 300);
    for (const auto& doc : corpus) CHECK(a.detokenize(a.tokenize(doc)) == text::normalize(doc));
}

TEST_CASE("vocab file round trip and validation") {
    const Vocab v = train_vocab(synthetic_texts(5, 1), 120);
    const auto tmp = std::filesystem::temp_directory_path() / "cgra_vocab.txt";
    v.save(tmp);
    CHECK(Vocab::load(tmp) == v);
    std::filesystem::remove(tmp);
    CHECK_THROWS_AS(Vocab({"[PAD]", "[CLS]", "[UNK]", "[SEP]"}), ValidationError);
    CHECK_THROWS_AS(Vocab({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "a", "a"}), ValidationError);
}

TEST_CASE("unknown characters become a single [UNK]") {
    const Vocab v = word_vocab({"a", "##b"});
    CHECK(v.tokenize_word("ab") == std::vector<int>{4, 5});
    CHECK(v.tokenize_word("az") == std::vector<int>{v.unk_id()});
}

TEST_CASE("encode_qa layout") {
    const Vocab v = word_vocab({"a", "b", "c", "d", "e"});
    const TokenizedExample ex = encode_qa("a b c", "a b c d e", v, 384);
    CHECK(ex.size() == 11);
    CHECK(count_segment(ex, Segment::kSpecial) == 3);
    CHECK(count_segment(ex, Segment::kQuestion) == 3);
    CHECK(count_segment(ex, Segment::kContext) == 5);
    CHECK(ex.token_ids.front() == v.cls_id());
    CHECK(ex.token_ids[4] == v.sep_id());
    CHECK(ex.token_ids.back() == v.sep_id());
    CHECK_FALSE(ex.truncated);
    CHECK(ex.boost == std::vector<double>(11, 1.0));
}

TEST_CASE("long contexts are cut to max_len") {
    const Vocab v = word_vocab({"a", "b", "x"});
    std::string ctx;
    for (int i = 0; i < 1000; ++i) ctx += i % 2 ? "x " : "a ";
    const TokenizedExample ex = encode_qa("b b", ctx, v, 384);
    CHECK(ex.size() == 384);
    CHECK(ex.truncated);
    CHECK(ex.token_ids.back() == v.sep_id());
    CHECK_THROWS_AS(encode_qa("", ctx, v), ValidationError);
}

TEST_CASE("align_answer_span") {
    const Vocab v = word_vocab({"a", "b", "c", "d", "e", "q"});
    SUBCASE("first context word") {
        const std::string ctx = "a b c d e";
        const auto ex = encode_qa("q q", ctx, v);
        const auto sp = align_answer_span(ctx, "a", 0, ex);
        REQUIRE(sp);
        CHECK(sp->start == 4);
        CHECK(sp->end == 4);
        CHECK(ex.segments[3] == Segment::kSpecial);
        CHECK(ex.segments[4] == Segment::kContext);
    }
    SUBCASE("answer past the cut") {
        std::string ctx;
        for (int i = 0; i < 500; ++i) ctx += "a ";
        const std::size_t at = ctx.size();
        ctx += "e";
        const auto ex = encode_qa("q", ctx, v, 384);
        CHECK_FALSE(align_answer_span(ctx, "e", at, ex).has_value());
    }
    SUBCASE("offset inconsistent with text") {
        const auto ex = encode_qa("q", "a b", v);
        CHECK_THROWS_AS(align_answer_span("a b", "b", 0, ex), ValidationError);
    }
}

TEST_CASE("aligned spans detokenize to the answer on 200 random substrings") {
    const auto corpus = synthetic_texts(30, 9);
    const Vocab v = train_vocab(corpus, 256);
    Rng rng(77);
    int checked = 0;
    for (int t = 0; t < 200; ++t) {
        const std::string& ctx = corpus[2 * rng.uniform_index(corpus.size() / 2) + 1];
        const auto words = text::split_words(ctx);
        const std::size_t a = rng.uniform_index(words.size());
        const std::size_t b = std::min(words.size() - 1, a + rng.uniform_index(4));
        const std::string answer = ctx.substr(words[a].begin, words[b].end - words[a].begin);
        const auto ex = encode_qa("what was said", ctx, v);
        const auto sp = align_answer_span(ctx, answer, words[a].begin, ex);
        REQUIRE(sp);
        CHECK(text::normalize(span_text(ex, v, *sp)) == text::normalize(answer));
        ++checked;
    }
    CHECK(checked == 200);
}

TEST_CASE("boost vector from the concept table") {
    const ConceptDictionary dict = load_dictionary(CGRA_DATA_DIR "/icd_terms.json");
    SUBCASE("one piece per word") {
        const Vocab v = word_vocab({"the", "prophet", "said", "who"});
        TokenizedExample ex = encode_qa("who", "the prophet said", v);
        apply_dictionary(ex, dict);
        // [CLS] who [SEP] the prophet said [SEP]
        const std::vector<double> want = {1.0, 1.0, 1.0, 1.0, 1.74, 1.0, 1.0};
        REQUIRE(ex.boost.size() == want.size());
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(ex.boost[i] == doctest::Approx(want[i]).epsilon(1e-12));
        CHECK(ex.concept_flags == std::vector<std::uint8_t>{0, 0, 0, 0, 1, 0, 0});
    }
    SUBCASE("no dictionary words") {
        const Vocab v = word_vocab({"the", "said", "who"});
        TokenizedExample ex = encode_qa("who", "the said", v);
        apply_dictionary(ex, dict);
        CHECK(ex.boost == std::vector<double>(ex.size(), 1.0));
    }
    SUBCASE("a concept split into two pieces shares the excess") {
        const Vocab v = word_vocab({"messen", "##ger", "who"});
        TokenizedExample ex = encode_qa("who", "messenger", v);
        apply_dictionary(ex, dict);
        REQUIRE(ex.size() == 6);
        CHECK(ex.boost[3] == doctest::Approx(1.705).epsilon(1e-12));
        CHECK(ex.boost[4] == doctest::Approx(1.705).epsilon(1e-12));
        CHECK(ex.concept_flags[3] == 1);
        CHECK(ex.concept_flags[4] == 1);
    }
}

TEST_CASE("tokenized example JSON round trip") {
    const Vocab v = word_vocab({"a", "b"});
    TokenizedExample ex = encode_qa("a", "b a", v);
    ex.gold_span = TokenSpan{3, 4};
    CHECK(tokenized_from_json(to_json(ex)) == ex);
}
