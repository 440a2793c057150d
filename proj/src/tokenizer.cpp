#include "cgra/tokenizer.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "cgra/error.h"
#include "cgra/json_util.h"
#include "cgra/text.h"

namespace cgra {

namespace {

bool is_continuation(std::string_view p) { return p.starts_with(kContinuation); }

std::string_view strip_continuation(std::string_view p) {
    return is_continuation(p) ? p.substr(kContinuation.size()) : p;
}

}  // namespace

Vocab::Vocab(std::vector<std::string> pieces) : pieces_(std::move(pieces)) {
    const std::string_view specials[] = {kPad, kUnk, kCls, kSep};
    if (pieces_.size() < 4) throw ValidationError("vocab: missing special pieces");
    for (int i = 0; i < 4; ++i) {
        if (pieces_[static_cast<std::size_t>(i)] != specials[i]) {
            throw ValidationError("vocab: id " + std::to_string(i) + " must be " +
                                  std::string(specials[i]));
        }
    }
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
        if (pieces_[i].empty()) throw ValidationError("vocab: empty piece at id " + std::to_string(i));
        if (!ids_.emplace(pieces_[i], static_cast<int>(i)).second) {
            throw ValidationError("vocab: duplicate piece '" + pieces_[i] + "'");
        }
        longest_piece_ = std::max(longest_piece_, strip_continuation(pieces_[i]).size());
    }
}

std::optional<int> Vocab::id_of(std::string_view piece) const {
    auto it = ids_.find(std::string(piece));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

std::vector<int> Vocab::tokenize_word(std::string_view word) const {
    std::vector<int> out;
    std::size_t pos = 0;
    std::string key;
    while (pos < word.size()) {
        std::size_t len = std::min(longest_piece_, word.size() - pos);
        int found = -1;
        std::size_t found_len = 0;
        for (; len > 0; --len) {
            key.assign(pos == 0 ? "" : std::string(kContinuation));
            key.append(word.substr(pos, len));
            if (auto it = ids_.find(key); it != ids_.end() && it->second >= 4) {
                found = it->second;
                found_len = len;
                break;
            }
        }
        if (found < 0) return {unk_id()};
        out.push_back(found);
        pos += found_len;
    }
    return out;
}

std::vector<int> Vocab::tokenize(std::string_view text) const {
    std::vector<int> out;
    for (const auto& w : text::normalized_words(text)) {
        auto ids = tokenize_word(w);
        out.insert(out.end(), ids.begin(), ids.end());
    }
    return out;
}

std::string Vocab::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == pad_id() || id == cls_id() || id == sep_id()) continue;
        const std::string& p = piece(id);
        if (is_continuation(p) && !out.empty()) {
            out += strip_continuation(p);
        } else {
            if (!out.empty()) out += ' ';
            out += strip_continuation(p);
        }
    }
    return out;
}

void Vocab::save(const std::filesystem::path& path) const {
    std::string body;
    for (const auto& p : pieces_) body += p + "\n";
    write_text_file(path, body);
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open vocab " + path.string());
    std::vector<std::string> pieces;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        pieces.push_back(line);
    }
    return Vocab(std::move(pieces));
}

Vocab train_vocab(const std::vector<std::string>& corpus, std::size_t target_size) {
    std::map<std::string, long> word_counts;
    for (const auto& doc : corpus) {
        for (auto& w : text::normalized_words(doc)) ++word_counts[w];
    }
    if (word_counts.empty()) throw ValidationError("train_vocab: empty corpus");

    struct Word {
        std::vector<std::string> symbols;
        long count;
    };
    std::vector<Word> words;
    std::set<std::string> base;
    for (const auto& [w, c] : word_counts) {
        Word word{{}, c};
        bool first = true;
        for (auto& ch : text::utf8_chars(w)) {
            word.symbols.push_back(first ? ch : std::string(kContinuation) + ch);
            first = false;
        }
        base.insert(word.symbols.begin(), word.symbols.end());
        words.push_back(std::move(word));
    }
    if (target_size < base.size() + 4) {
        throw ValidationError("train_vocab: target size " + std::to_string(target_size) +
                              " below " + std::to_string(base.size() + 4) +
                              " (alphabet + specials)");
    }

    std::vector<std::string> pieces = {std::string(kPad), std::string(kUnk), std::string(kCls),
                                       std::string(kSep)};
    pieces.insert(pieces.end(), base.begin(), base.end());
    std::set<std::string> present(pieces.begin(), pieces.end());

    while (pieces.size() < target_size) {
        std::map<std::pair<std::string, std::string>, long> pairs;
        for (const auto& w : words) {
            for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
                pairs[{w.symbols[i], w.symbols[i + 1]}] += w.count;
            }
        }
        if (pairs.empty()) break;
        // std::map iterates in lexicographic order; strict > keeps the first
        // (smallest) pair among equal counts.
        auto best = pairs.begin();
        for (auto it = pairs.begin(); it != pairs.end(); ++it) {
            if (it->second > best->second) best = it;
        }
        const auto [left, right] = best->first;
        const std::string merged = left + std::string(strip_continuation(right));
        for (auto& w : words) {
            std::vector<std::string> next;
            next.reserve(w.symbols.size());
            for (std::size_t i = 0; i < w.symbols.size(); ++i) {
                if (i + 1 < w.symbols.size() && w.symbols[i] == left && w.symbols[i + 1] == right) {
                    next.push_back(merged);
                    ++i;
                } else {
                    next.push_back(w.symbols[i]);
                }
            }
            w.symbols = std::move(next);
        }
        if (present.insert(merged).second) pieces.push_back(merged);
    }
    return Vocab(std::move(pieces));
}

TokenizedExample encode_qa(std::string_view question, std::string_view context, const Vocab& vocab,
                           int max_len) {
    const auto q_words = text::normalized_words(question);
    if (q_words.empty()) throw ValidationError("encode_qa: empty question");
    if (max_len < 8) throw ValidationError("encode_qa: max_len too small");

    TokenizedExample ex;
    std::vector<std::vector<int>> q_pieces;
    std::size_t q_total = 0;
    for (const auto& w : q_words) {
        q_pieces.push_back(vocab.tokenize_word(w));
        q_total += q_pieces.back().size();
    }
    if (q_total > static_cast<std::size_t>(max_len / 2)) {
        throw ValidationError("question too long: " + std::to_string(q_total) + " pieces > " +
                              std::to_string(max_len / 2));
    }

    auto push = [&](int id, Segment seg, int word) {
        ex.token_ids.push_back(id);
        ex.segments.push_back(seg);
        ex.word_index.push_back(word);
    };

    push(vocab.cls_id(), Segment::kSpecial, -1);
    for (std::size_t w = 0; w < q_words.size(); ++w) {
        ex.words.push_back(q_words[w]);
        for (int id : q_pieces[w]) push(id, Segment::kQuestion, static_cast<int>(w));
    }
    push(vocab.sep_id(), Segment::kSpecial, -1);
    ex.question_words = static_cast<int>(q_words.size());

    const std::size_t limit = static_cast<std::size_t>(max_len) - 1;  // room for final SEP
    for (const auto& w : text::normalized_words(context)) {
        const auto pieces = vocab.tokenize_word(w);
        if (ex.token_ids.size() + pieces.size() > limit) {
            const int word = static_cast<int>(ex.words.size());
            bool kept_any = false;
            for (int id : pieces) {
                if (ex.token_ids.size() >= limit) break;
                push(id, Segment::kContext, word);
                kept_any = true;
            }
            if (kept_any) ex.words.push_back(w);
            ex.truncated = true;
            break;
        }
        const int word = static_cast<int>(ex.words.size());
        ex.words.push_back(w);
        for (int id : pieces) push(id, Segment::kContext, word);
        ++ex.complete_context_words;
    }
    push(vocab.sep_id(), Segment::kSpecial, -1);
    ex.boost.assign(ex.token_ids.size(), 1.0);
    ex.concept_flags.assign(ex.token_ids.size(), 0);
    return ex;
}

std::optional<TokenSpan> align_answer_span(std::string_view context, std::string_view answer_text,
                                           std::size_t answer_char_start,
                                           const TokenizedExample& example) {
    if (answer_text.empty() || answer_char_start > context.size() ||
        context.substr(answer_char_start, answer_text.size()) != answer_text) {
        throw ValidationError("span mismatch");
    }
    const std::size_t a_begin = answer_char_start;
    const std::size_t a_end = answer_char_start + answer_text.size();
    const auto words = text::split_words(context);
    int first = -1, last = -1;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (words[i].end > a_begin && words[i].begin < a_end) {
            if (first < 0) first = static_cast<int>(i);
            last = static_cast<int>(i);
        }
    }
    if (first < 0) throw ValidationError("span mismatch");
    if (last >= example.complete_context_words) return std::nullopt;

    const int first_word = example.question_words + first;
    const int last_word = example.question_words + last;
    TokenSpan span{-1, -1};
    for (std::size_t t = 0; t < example.size(); ++t) {
        if (example.segments[t] != Segment::kContext) continue;
        if (example.word_index[t] == first_word && span.start < 0) span.start = static_cast<int>(t);
        if (example.word_index[t] == last_word) span.end = static_cast<int>(t);
    }
    if (span.start < 0 || span.end < 0) return std::nullopt;
    return span;
}

BoostVector build_boost_vector(const TokenizedExample& ex, const ConceptDictionary& dict) {
    BoostVector m(ex.size(), 1.0);
    std::vector<int> pieces_per_word(ex.words.size(), 0);
    for (int w : ex.word_index) {
        if (w >= 0) ++pieces_per_word[static_cast<std::size_t>(w)];
    }
    for (std::size_t t = 0; t < ex.size(); ++t) {
        const int w = ex.word_index[t];
        if (w < 0) continue;
        const auto* entry = dict.find(ex.words[static_cast<std::size_t>(w)]);
        if (entry == nullptr) continue;
        m[t] = 1.0 + (entry->boost_factor - 1.0) / pieces_per_word[static_cast<std::size_t>(w)];
    }
    return m;
}

std::vector<std::uint8_t> build_concept_flags(const TokenizedExample& ex,
                                              const ConceptDictionary& dict) {
    std::vector<std::uint8_t> flags(ex.size(), 0);
    for (std::size_t t = 0; t < ex.size(); ++t) {
        const int w = ex.word_index[t];
        if (w >= 0 && dict.contains(ex.words[static_cast<std::size_t>(w)])) flags[t] = 1;
    }
    return flags;
}

void apply_dictionary(TokenizedExample& ex, const ConceptDictionary& dict) {
    ex.boost = build_boost_vector(ex, dict);
    ex.concept_flags = build_concept_flags(ex, dict);
}

std::string span_text(const TokenizedExample& ex, const Vocab& vocab, TokenSpan span) {
    std::vector<int> ids;
    for (int t = span.start; t <= span.end; ++t) ids.push_back(ex.token_ids[static_cast<std::size_t>(t)]);
    return vocab.detokenize(ids);
}

nlohmann::json to_json(const TokenizedExample& ex) {
    nlohmann::json j;
    j["id"] = ex.id;
    j["token_ids"] = ex.token_ids;
    std::vector<int> segs;
    for (auto s : ex.segments) segs.push_back(static_cast<int>(s));
    j["segments"] = segs;
    j["word_index"] = ex.word_index;
    j["words"] = ex.words;
    j["question_words"] = ex.question_words;
    j["complete_context_words"] = ex.complete_context_words;
    j["boost"] = ex.boost;
    j["concept_flags"] = ex.concept_flags;
    if (ex.gold_span) {
        j["gold_span"] = {ex.gold_span->start, ex.gold_span->end};
    } else {
        j["gold_span"] = nullptr;
    }
    j["truncated"] = ex.truncated;
    return j;
}

TokenizedExample tokenized_from_json(const nlohmann::json& j) {
    TokenizedExample ex;
    try {
        ex.id = j.at("id").get<std::string>();
        ex.token_ids = j.at("token_ids").get<std::vector<int>>();
        for (int s : j.at("segments").get<std::vector<int>>()) {
            if (s < 0 || s > 2) throw ValidationError("encoded example: bad segment flag");
            ex.segments.push_back(static_cast<Segment>(s));
        }
        ex.word_index = j.at("word_index").get<std::vector<int>>();
        ex.words = j.at("words").get<std::vector<std::string>>();
        ex.question_words = j.at("question_words").get<int>();
        ex.complete_context_words = j.at("complete_context_words").get<int>();
        ex.boost = j.at("boost").get<std::vector<double>>();
        ex.concept_flags = j.at("concept_flags").get<std::vector<std::uint8_t>>();
        if (!j.at("gold_span").is_null()) {
            const auto s = j.at("gold_span").get<std::vector<int>>();
            if (s.size() != 2) throw ValidationError("encoded example: gold_span needs 2 entries");
            ex.gold_span = TokenSpan{s[0], s[1]};
        }
        ex.truncated = j.at("truncated").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("encoded example malformed: ") + e.what());
    }
    const std::size_t n = ex.token_ids.size();
    if (ex.segments.size() != n || ex.word_index.size() != n || ex.boost.size() != n ||
        ex.concept_flags.size() != n) {
        throw ValidationError("encoded example '" + ex.id + "': per-token arrays differ in length");
    }
    return ex;
}

}  // namespace cgra
