#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cgra {

struct ConceptEntry {
    std::string term;  // normalized surface form
    double importance_score = 0.0;
    double boost_factor = 1.0;
    std::string category;
    double corpus_frequency = 0.0;  // fraction of documents containing the term

    friend bool operator==(const ConceptEntry&, const ConceptEntry&) = default;
};

// Per-term multipliers in [0.8, 1.2]. Terms without a weight use 1.0.
class ScholarWeights {
public:
    ScholarWeights() = default;
    explicit ScholarWeights(std::map<std::string, double> weights);

    double weight(std::string_view term) const;
    const std::map<std::string, double>& weights() const noexcept { return weights_; }

    static ScholarWeights load(const std::filesystem::path& path);

private:
    std::map<std::string, double> weights_;
};

struct ImportanceResult {
    std::map<std::string, double> scores;
    int clamped = 0;  // terms whose weighted score exceeded 1 and was clamped
};

// log(f+1)/max log(f+1) · w, clamped to [0,1]. Counts are raw occurrences.
ImportanceResult compute_importance(const std::map<std::string, long>& term_freqs,
                                    const ScholarWeights& weights);

double boost_factor(double importance);

// Allowed gap between a stored boost and boost_factor(importance).
inline constexpr double kBoostTolerance = 0.005;

// Frozen term table. Lookup is by normalized surface form.
class ConceptDictionary {
public:
    ConceptDictionary() = default;
    ConceptDictionary(std::vector<ConceptEntry> entries, std::string version);

    const ConceptEntry* find(std::string_view normalized_term) const;
    bool contains(std::string_view normalized_term) const { return find(normalized_term) != nullptr; }

    const std::map<std::string, ConceptEntry, std::less<>>& entries() const noexcept { return entries_; }
    const std::string& version() const noexcept { return version_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    friend bool operator==(const ConceptDictionary&, const ConceptDictionary&) = default;

private:
    std::map<std::string, ConceptEntry, std::less<>> entries_;
    std::string version_;
};

struct DictionaryBuild {
    ConceptDictionary dictionary;
    std::vector<std::string> warnings;
    int clamped = 0;
};

DictionaryBuild build_dictionary(const std::vector<std::string>& corpus,
                                 const std::vector<std::string>& term_list,
                                 const ScholarWeights& weights, std::string version = "icd-1",
                                 const std::map<std::string, std::string>& categories = {});

ConceptDictionary load_dictionary(const std::filesystem::path& path);
ConceptDictionary parse_dictionary(std::string_view json_text);
void save_dictionary(const ConceptDictionary& dict, const std::filesystem::path& path);
std::string dictionary_to_json(const ConceptDictionary& dict);

}  // namespace cgra
