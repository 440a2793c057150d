#include <stdexcept>

#include "cgra/error.h"
#include "cgra/json_util.h"
#include "cgra/rng.h"
#include "cgra/text.h"
#include "cgra/training.h"

namespace cgra {

namespace {

bool mentions_concept(std::string_view s, const ConceptDictionary& dict) {
    for (const std::string& w : text::normalized_words(s)) {
        if (dict.contains(w)) return true;
    }
    return false;
}

}  // namespace

SynonymTable::SynonymTable(std::map<std::string, std::vector<std::string>> table,
                           const ConceptDictionary& dict) {
    for (auto& [key, values] : table) {
        const std::string norm = text::normalize(key);
        if (norm.empty() || norm.find(' ') != std::string::npos) {
            throw ValidationError("synonym key '" + key + "' must be a single word");
        }
        if (dict.contains(norm)) throw ValidationError("synonym key '" + key + "' is a dictionary term");
        std::vector<std::string> kept;
        for (const std::string& v : values) {
            if (text::normalize(v).empty()) throw ValidationError("empty synonym for '" + key + "'");
            if (mentions_concept(v, dict)) {
                throw ValidationError("synonym '" + v + "' for '" + key + "' contains a dictionary term");
            }
            kept.push_back(v);
        }
        if (!kept.empty()) table_[norm] = std::move(kept);
    }
}

const std::vector<std::string>* SynonymTable::candidates(const std::string& word) const {
    auto it = table_.find(word);
    return it == table_.end() ? nullptr : &it->second;
}

SynonymTable SynonymTable::load(const std::filesystem::path& path, const ConceptDictionary& dict) {
    const nlohmann::json j = parse_json_file(path);
    if (!j.is_object()) throw ValidationError(path.string() + ": synonym table must be an object");
    std::map<std::string, std::vector<std::string>> table;
    try {
        for (const auto& [k, v] : j.items()) table[k] = v.get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return SynonymTable(std::move(table), dict);
}

AugmentResult augment_synonym(const QaRecord& rec, const SynonymTable& table,
                              const ConceptDictionary& dict, double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("augment_synonym: rate outside [0, 1]");
    AugmentResult res;
    res.record = rec;
    if (table.empty()) return res;

    const std::size_t a_begin = rec.answer_start;
    const std::size_t a_end = rec.answer_start + rec.answer_text.size();
    Rng rng(seed);
    std::string out;
    std::size_t copied = 0;
    std::size_t new_start = rec.answer_start;
    for (const text::WordSpan& w : text::split_words(rec.context)) {
        if (dict.contains(w.norm)) continue;
        if (w.end > a_begin && w.begin < a_end) continue;  // would corrupt the gold answer
        const auto* cands = table.candidates(w.norm);
        if (cands == nullptr) continue;
        ++res.eligible;
        if (rng.uniform() >= rate) continue;
        const std::string& rep = (*cands)[static_cast<std::size_t>(rng.uniform_index(cands->size()))];
        out.append(rec.context, copied, w.begin - copied);
        out += rep;
        copied = w.end;
        if (w.end <= a_begin) new_start = new_start + rep.size() - (w.end - w.begin);
        ++res.replaced;
    }
    out.append(rec.context, copied, std::string::npos);
    res.record.context = std::move(out);
    res.record.answer_start = new_start;
    if (res.record.context.compare(new_start, rec.answer_text.size(), rec.answer_text) != 0) {
        throw std::logic_error("augment_synonym: answer offset lost");
    }
    return res;
}

}  // namespace cgra
