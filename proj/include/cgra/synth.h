#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgra/dataset.h"

namespace cgra {

// Hadith-like reading-comprehension fixtures. Each context is a chain of
// "<speaker> said <saying> and <closing>" clauses padded with isnad-style
// filler. Exactly one clause has a dictionary term as its speaker; its
// saying is the answer. The question never names the speaker, so the
// answer can only be located by recognising which speaker is a concept.
struct SynthConfig {
    std::size_t count = 64;
    std::uint64_t seed = 1;
    // Context length is drawn uniformly from [min, max] words.
    int context_words_min = 70;
    int context_words_max = 85;
    // Question length is 15 words, 16 with this probability.
    double long_question_rate = 0.1;
    int distractor_clauses = 2;
    int answer_words_min = 1;
    int answer_words_max = 3;
    // Chance that a saying word is itself a concept term (not as a speaker).
    double concept_in_answer_rate = 0.15;
    // Chance that the concept clause directly follows a distractor clause.
    double answer_adjacency = 0.5;
    std::string id_prefix = "syn";
};

std::vector<QaRecord> generate_synthetic(const SynthConfig& cfg);

// Speaker terms the generator plants; all are entries of the bundled
// dictionary fixture.
const std::vector<std::string>& synthetic_concept_speakers();

}  // namespace cgra
