#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cgra/concept_dictionary.h"
#include "cgra/tokenizer.h"

namespace cgra {

struct QaRecord {
    std::string id;
    std::string question;
    std::string context;
    std::string answer_text;       // first gold answer, used for training
    std::size_t answer_start = 0;  // byte offset into context
    std::vector<std::string> answers;  // every gold answer, for max-over-references scoring

    friend bool operator==(const QaRecord&, const QaRecord&) = default;
};

nlohmann::json to_json(const QaRecord& r);
QaRecord record_from_json(const nlohmann::json& j);

struct DatasetStats {
    std::size_t count = 0;
    double mean_context_words = 0.0;
    double mean_question_words = 0.0;
    double mean_answer_words = 0.0;
};
DatasetStats dataset_stats(const std::vector<QaRecord>& records);
nlohmann::json to_json(const DatasetStats& s);

struct Rejection {
    std::string id;
    std::string reason;
};

struct IngestReport {
    std::vector<QaRecord> records;
    std::vector<Rejection> rejected;
    std::size_t total = 0;  // questions seen; records + rejected always equals this
    std::string source;
    std::string content_hash;
    DatasetStats stats;
};

// SQuAD v1.1: {data: [{title, paragraphs: [{context, qas: [{id, question,
// answers: [{text, answer_start}]}]}]}]}. answer_start counts Unicode code
// points as in the reference format; it is converted to a byte offset.
IngestReport ingest_squad_text(std::string_view text, const std::string& source);
IngestReport ingest_squad(const std::filesystem::path& path);

// Writes records back in SQuAD v1.1 layout, one paragraph per record.
std::string to_squad_json(const std::vector<QaRecord>& records, const std::string& title);

// Line-delimited JSON, one record per line.
void save_records(const std::filesystem::path& path, const std::vector<QaRecord>& records);
std::vector<QaRecord> load_records(const std::filesystem::path& path);

struct DatasetSplit {
    std::vector<QaRecord> train, val, test;
};

// Seeded shuffle, then val = ⌊n·r_val⌋, test = ⌊n·r_test⌋, train takes the rest.
DatasetSplit split_dataset(const std::vector<QaRecord>& records, std::array<double, 3> ratios,
                           std::uint64_t seed);

struct Example {
    QaRecord record;
    TokenizedExample tok;
};

struct EncodeReport {
    std::vector<Example> examples;
    std::size_t gold_truncated = 0;  // answer fell in the cut tail; excluded from the loss
};

// dict may be null, which leaves M ≡ 1 and all concept flags clear.
EncodeReport encode_dataset(const std::vector<QaRecord>& records, const Vocab& vocab,
                            const ConceptDictionary* dict, int max_len = kDefaultMaxLen);

// Original context text covered by a predicted token span.
std::string predicted_text(const Example& ex, TokenSpan span);

// Byte offset of the code point at index cp in s.
std::size_t byte_offset_of_codepoint(std::string_view s, std::size_t cp);
std::size_t codepoint_index_of_byte(std::string_view s, std::size_t byte);

}  // namespace cgra
