#include "cgra/concept_dictionary.h"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "cgra/error.h"
#include "cgra/json_util.h"
#include "cgra/text.h"

namespace cgra {

using nlohmann::json;

ScholarWeights::ScholarWeights(std::map<std::string, double> weights) {
    for (auto& [term, w] : weights) {
        if (!(w >= 0.8 && w <= 1.2)) {
            throw ValidationError("scholar weight for '" + term + "' outside [0.8, 1.2]: " +
                                  std::to_string(w));
        }
        weights_[text::normalize(term)] = w;
    }
}

double ScholarWeights::weight(std::string_view term) const {
    auto it = weights_.find(std::string(term));
    return it == weights_.end() ? 1.0 : it->second;
}

ScholarWeights ScholarWeights::load(const std::filesystem::path& path) {
    const json j = parse_json_file(path);
    if (!j.is_object()) throw ValidationError(path.string() + ": weights must be a JSON object");
    std::map<std::string, double> w;
    for (auto& [k, v] : j.items()) {
        if (!v.is_number()) throw ValidationError(path.string() + ": weight for '" + k + "' is not a number");
        w[k] = v.get<double>();
    }
    return ScholarWeights(std::move(w));
}

ImportanceResult compute_importance(const std::map<std::string, long>& term_freqs,
                                    const ScholarWeights& weights) {
    if (term_freqs.empty()) throw ValidationError("empty corpus");
    double max_log = 0.0;
    for (const auto& [term, count] : term_freqs) {
        if (count < 1) throw ValidationError("term '" + term + "' has count < 1");
        max_log = std::max(max_log, std::log(static_cast<double>(count) + 1.0));
    }
    ImportanceResult result;
    for (const auto& [term, count] : term_freqs) {
        double is = std::log(static_cast<double>(count) + 1.0) / max_log * weights.weight(term);
        if (is > 1.0) {
            is = 1.0;
            ++result.clamped;
        }
        result.scores[term] = std::max(0.0, is);
    }
    return result;
}

double boost_factor(double importance) {
    if (!(importance >= 0.0 && importance <= 1.0)) {
        throw ValidationError("importance out of range: " + std::to_string(importance));
    }
    return 2.0 * importance + 1.0;
}

ConceptDictionary::ConceptDictionary(std::vector<ConceptEntry> entries, std::string version)
    : version_(std::move(version)) {
    for (auto& e : entries) {
        e.term = text::normalize(e.term);
        if (e.term.empty() || e.term.find(' ') != std::string::npos) {
            throw ValidationError("concept term must be a single word: '" + e.term + "'");
        }
        if (!(e.importance_score >= 0.0 && e.importance_score <= 1.0)) {
            throw ValidationError("term '" + e.term + "': importance_score outside [0,1]");
        }
        if (!(e.boost_factor >= 1.0 && e.boost_factor <= 3.0)) {
            throw ValidationError("term '" + e.term + "': boost_factor outside [1,3]");
        }
        if (std::abs(e.boost_factor - (2.0 * e.importance_score + 1.0)) > kBoostTolerance + 1e-12) {
            throw ValidationError("term '" + e.term + "': boost_factor " +
                                  std::to_string(e.boost_factor) + " violates BF = 2*IS + 1 (IS " +
                                  std::to_string(e.importance_score) + ")");
        }
        if (!(e.corpus_frequency >= 0.0 && e.corpus_frequency <= 1.0)) {
            throw ValidationError("term '" + e.term + "': corpus_frequency outside [0,1]");
        }
        std::string key = e.term;
        if (!entries_.emplace(key, std::move(e)).second) {
            throw ValidationError("duplicate concept term '" + key + "'");
        }
    }
}

const ConceptEntry* ConceptDictionary::find(std::string_view normalized_term) const {
    auto it = entries_.find(normalized_term);
    return it == entries_.end() ? nullptr : &it->second;
}

DictionaryBuild build_dictionary(const std::vector<std::string>& corpus,
                                 const std::vector<std::string>& term_list,
                                 const ScholarWeights& weights, std::string version,
                                 const std::map<std::string, std::string>& categories) {
    if (corpus.empty()) throw ValidationError("empty corpus");
    if (term_list.empty()) throw ValidationError("empty term list");

    std::vector<std::string> terms;
    std::unordered_map<std::string, long> counts;
    std::unordered_map<std::string, long> doc_hits;
    for (const auto& t : term_list) {
        std::string norm = text::normalize(t);
        if (norm.empty() || norm.find(' ') != std::string::npos) {
            throw ValidationError("concept term must be a single word: '" + t + "'");
        }
        if (counts.emplace(norm, 0).second) terms.push_back(norm);
        doc_hits.emplace(norm, 0);
    }

    for (const auto& doc : corpus) {
        std::unordered_map<std::string, bool> seen;
        for (const auto& w : text::normalized_words(doc)) {
            auto it = counts.find(w);
            if (it == counts.end()) continue;
            ++it->second;
            if (!seen[w]) {
                seen[w] = true;
                ++doc_hits[w];
            }
        }
    }

    DictionaryBuild out;
    std::map<std::string, long> observed;
    for (const auto& t : terms) {
        if (counts[t] > 0) observed[t] = counts[t];
    }
    std::map<std::string, double> scores;
    if (!observed.empty()) {
        auto importance = compute_importance(observed, weights);
        scores = std::move(importance.scores);
        out.clamped = importance.clamped;
    }

    std::vector<ConceptEntry> entries;
    for (const auto& t : terms) {
        ConceptEntry e;
        e.term = t;
        auto it = scores.find(t);
        if (it == scores.end()) {
            out.warnings.push_back("term '" + t + "' never occurs in the corpus; boost 1.0");
            e.importance_score = 0.0;
        } else {
            e.importance_score = it->second;
        }
        e.boost_factor = boost_factor(e.importance_score);
        e.corpus_frequency = static_cast<double>(doc_hits[t]) / static_cast<double>(corpus.size());
        if (auto c = categories.find(t); c != categories.end()) e.category = c->second;
        entries.push_back(std::move(e));
    }
    out.dictionary = ConceptDictionary(std::move(entries), std::move(version));
    return out;
}

std::string dictionary_to_json(const ConceptDictionary& dict) {
    json j;
    j["version"] = dict.version();
    j["entries"] = json::array();
    for (const auto& [key, e] : dict.entries()) {
        j["entries"].push_back({{"term", e.term},
                                {"importance_score", e.importance_score},
                                {"boost_factor", e.boost_factor},
                                {"category", e.category},
                                {"corpus_frequency", e.corpus_frequency}});
    }
    return j.dump(2) + "\n";
}

ConceptDictionary parse_dictionary(std::string_view json_text) {
    const json j = parse_json_text(json_text, "dictionary");
    if (!j.is_object() || !j.contains("entries") || !j["entries"].is_array()) {
        throw ValidationError("dictionary: expected object with an 'entries' array");
    }
    std::vector<ConceptEntry> entries;
    for (const auto& item : j["entries"]) {
        ConceptEntry e;
        try {
            e.term = item.at("term").get<std::string>();
            e.importance_score = item.at("importance_score").get<double>();
            e.boost_factor = item.at("boost_factor").get<double>();
            e.category = item.value("category", std::string{});
            e.corpus_frequency = item.value("corpus_frequency", 0.0);
        } catch (const json::exception& ex) {
            throw ValidationError(std::string("dictionary entry malformed: ") + ex.what());
        }
        entries.push_back(std::move(e));
    }
    return ConceptDictionary(std::move(entries), j.value("version", std::string{}));
}

ConceptDictionary load_dictionary(const std::filesystem::path& path) {
    return parse_dictionary(read_text_file(path));
}

void save_dictionary(const ConceptDictionary& dict, const std::filesystem::path& path) {
    write_text_file(path, dictionary_to_json(dict));
}

}  // namespace cgra
