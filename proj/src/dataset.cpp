#include "cgra/dataset.h"

#include <cmath>
#include <set>
#include <sstream>

#include "cgra/error.h"
#include "cgra/json_util.h"
#include "cgra/rng.h"
#include "cgra/text.h"

namespace cgra {

using nlohmann::json;

json to_json(const QaRecord& r) {
    return {{"id", r.id},
            {"question", r.question},
            {"context", r.context},
            {"answer_text", r.answer_text},
            {"answer_start", r.answer_start},
            {"answers", r.answers}};
}

QaRecord record_from_json(const json& j) {
    QaRecord r;
    try {
        r.id = j.at("id").get<std::string>();
        r.question = j.at("question").get<std::string>();
        r.context = j.at("context").get<std::string>();
        r.answer_text = j.at("answer_text").get<std::string>();
        r.answer_start = j.at("answer_start").get<std::size_t>();
        r.answers = j.value("answers", std::vector<std::string>{r.answer_text});
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad record: ") + e.what());
    }
    if (r.context.compare(std::min(r.answer_start, r.context.size()), r.answer_text.size(),
                          r.answer_text) != 0) {
        throw ValidationError("record " + r.id + ": answer_start inconsistent with answer_text");
    }
    return r;
}

DatasetStats dataset_stats(const std::vector<QaRecord>& records) {
    DatasetStats s;
    s.count = records.size();
    if (records.empty()) return s;
    for (const QaRecord& r : records) {
        s.mean_context_words += static_cast<double>(text::split_words(r.context).size());
        s.mean_question_words += static_cast<double>(text::split_words(r.question).size());
        s.mean_answer_words += static_cast<double>(text::split_words(r.answer_text).size());
    }
    const auto n = static_cast<double>(records.size());
    s.mean_context_words /= n;
    s.mean_question_words /= n;
    s.mean_answer_words /= n;
    return s;
}

json to_json(const DatasetStats& s) {
    return {{"count", s.count},
            {"mean_context_words", s.mean_context_words},
            {"mean_question_words", s.mean_question_words},
            {"mean_answer_words", s.mean_answer_words}};
}

std::size_t byte_offset_of_codepoint(std::string_view s, std::size_t cp) {
    std::size_t seen = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if ((static_cast<unsigned char>(s[i]) & 0xC0) == 0x80) continue;
        if (seen == cp) return i;
        ++seen;
    }
    if (seen == cp) return s.size();
    throw ValidationError("code point index " + std::to_string(cp) + " past end of text");
}

std::size_t codepoint_index_of_byte(std::string_view s, std::size_t byte) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < byte && i < s.size(); ++i) {
        if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) ++n;
    }
    return n;
}

IngestReport ingest_squad_text(std::string_view text, const std::string& source) {
    const json doc = parse_json_text(text, source);
    IngestReport rep;
    rep.source = source;
    rep.content_hash = sha256_hex(text);
    if (!doc.is_object() || !doc.contains("data") || !doc.at("data").is_array()) {
        throw ValidationError(source + ": not SQuAD v1.1 (missing data array)");
    }
    std::set<std::string> ids;
    std::size_t anon = 0;
    for (const json& article : doc.at("data")) {
        for (const json& para : article.value("paragraphs", json::array())) {
            const std::string context = para.value("context", std::string());
            for (const json& qa : para.value("qas", json::array())) {
                ++rep.total;
                std::string id = qa.value("id", std::string());
                if (id.empty()) id = "<missing-" + std::to_string(anon++) + ">";
                auto reject = [&](const std::string& why) { rep.rejected.push_back({id, why}); };
                if (!ids.insert(id).second) {
                    reject("duplicate id");
                    continue;
                }
                const std::string question = qa.value("question", std::string());
                const json answers = qa.value("answers", json::array());
                if (question.empty() || context.empty()) {
                    reject("empty question or context");
                    continue;
                }
                if (!answers.is_array() || answers.empty()) {
                    reject("no answers");
                    continue;
                }
                QaRecord r;
                r.id = id;
                r.question = question;
                r.context = context;
                bool ok = true;
                for (std::size_t a = 0; a < answers.size() && ok; ++a) {
                    const json& ans = answers[a];
                    if (!ans.contains("text") || !ans.contains("answer_start") ||
                        !ans.at("text").is_string() || !ans.at("answer_start").is_number_integer()) {
                        reject("malformed answer " + std::to_string(a));
                        ok = false;
                        break;
                    }
                    const auto t = ans.at("text").get<std::string>();
                    const auto cp = ans.at("answer_start").get<long long>();
                    std::size_t byte = 0;
                    bool in_range = cp >= 0;
                    if (in_range) {
                        try {
                            byte = byte_offset_of_codepoint(context, static_cast<std::size_t>(cp));
                        } catch (const ValidationError&) {
                            in_range = false;
                        }
                    }
                    if (t.empty() || !in_range || context.compare(byte, t.size(), t) != 0) {
                        reject("answer " + std::to_string(a) + " text does not match context at offset " +
                               std::to_string(cp));
                        ok = false;
                        break;
                    }
                    if (a == 0) {
                        r.answer_text = t;
                        r.answer_start = byte;
                    }
                    r.answers.push_back(t);
                }
                if (ok) rep.records.push_back(std::move(r));
            }
        }
    }
    rep.stats = dataset_stats(rep.records);
    return rep;
}

IngestReport ingest_squad(const std::filesystem::path& path) {
    return ingest_squad_text(read_text_file(path), path.string());
}

std::string to_squad_json(const std::vector<QaRecord>& records, const std::string& title) {
    json paragraphs = json::array();
    for (const QaRecord& r : records) {
        json answers = json::array();
        answers.push_back({{"text", r.answer_text},
                           {"answer_start", codepoint_index_of_byte(r.context, r.answer_start)}});
        for (std::size_t a = 1; a < r.answers.size(); ++a) {
            const std::size_t at = r.context.find(r.answers[a]);
            if (at == std::string::npos) continue;
            answers.push_back({{"text", r.answers[a]},
                               {"answer_start", codepoint_index_of_byte(r.context, at)}});
        }
        paragraphs.push_back(
            {{"context", r.context},
             {"qas", json::array({{{"id", r.id}, {"question", r.question}, {"answers", answers}}})}});
    }
    json doc = {{"version", "1.1"},
                {"data", json::array({{{"title", title}, {"paragraphs", paragraphs}}})}};
    return doc.dump(1);
}

void save_records(const std::filesystem::path& path, const std::vector<QaRecord>& records) {
    std::string out;
    for (const QaRecord& r : records) {
        out += to_json(r).dump();
        out += '\n';
    }
    write_text_file(path, out);
}

std::vector<QaRecord> load_records(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    std::vector<QaRecord> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw ParseError(path.string() + ": " + e.what(), lineno);
        }
    }
    return out;
}

DatasetSplit split_dataset(const std::vector<QaRecord>& records, std::array<double, 3> ratios,
                           std::uint64_t seed) {
    if (records.size() < 3) {
        throw ValidationError("split_dataset needs at least 3 records, got " +
                              std::to_string(records.size()));
    }
    for (double r : ratios) {
        if (!(r >= 0.0)) throw ValidationError("split ratios must be non-negative");
    }
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
        throw ValidationError("split ratios must sum to 1");
    }
    std::set<std::string> ids;
    for (const QaRecord& r : records) {
        if (!ids.insert(r.id).second) throw ValidationError("duplicate record id " + r.id);
    }
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);

    const auto n = static_cast<double>(records.size());
    // A tiny epsilon keeps ⌊n·0.1⌋ from dropping to n/10 − 1 through rounding.
    const auto n_val = static_cast<std::size_t>(std::floor(n * ratios[1] + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(n * ratios[2] + 1e-9));
    const std::size_t n_train = records.size() - n_val - n_test;

    DatasetSplit s;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const QaRecord& r = records[order[i]];
        if (i < n_train) {
            s.train.push_back(r);
        } else if (i < n_train + n_val) {
            s.val.push_back(r);
        } else {
            s.test.push_back(r);
        }
    }
    return s;
}

EncodeReport encode_dataset(const std::vector<QaRecord>& records, const Vocab& vocab,
                            const ConceptDictionary* dict, int max_len) {
    EncodeReport rep;
    rep.examples.reserve(records.size());
    for (const QaRecord& r : records) {
        Example ex{r, encode_qa(r.question, r.context, vocab, max_len)};
        ex.tok.id = r.id;
        ex.tok.gold_span = align_answer_span(r.context, r.answer_text, r.answer_start, ex.tok);
        if (!ex.tok.gold_span) ++rep.gold_truncated;
        if (dict != nullptr) apply_dictionary(ex.tok, *dict);
        rep.examples.push_back(std::move(ex));
    }
    return rep;
}

std::string predicted_text(const Example& ex, TokenSpan span) {
    const TokenizedExample& t = ex.tok;
    if (span.start < 0 || span.end < span.start || static_cast<std::size_t>(span.end) >= t.size()) {
        throw std::invalid_argument("predicted_text: span outside sequence");
    }
    const int first = t.word_index[static_cast<std::size_t>(span.start)] - t.question_words;
    const int last = t.word_index[static_cast<std::size_t>(span.end)] - t.question_words;
    if (first < 0 || last < first) throw std::invalid_argument("predicted_text: span not in context");
    const auto words = text::split_words(ex.record.context);
    const auto& a = words.at(static_cast<std::size_t>(first));
    const auto& b = words.at(static_cast<std::size_t>(last));
    return ex.record.context.substr(a.begin, b.end - a.begin);
}

}  // namespace cgra
