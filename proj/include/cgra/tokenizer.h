#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "cgra/concept_dictionary.h"

namespace cgra {

inline constexpr std::string_view kPad = "[PAD]";
inline constexpr std::string_view kUnk = "[UNK]";
inline constexpr std::string_view kCls = "[CLS]";
inline constexpr std::string_view kSep = "[SEP]";
inline constexpr std::string_view kContinuation = "##";

// Subword inventory. Word-initial pieces are bare, word-internal pieces
// carry the "##" prefix. Specials occupy ids 0..3.
class Vocab {
public:
    Vocab() = default;
    explicit Vocab(std::vector<std::string> pieces);

    std::size_t size() const noexcept { return pieces_.size(); }
    const std::vector<std::string>& pieces() const noexcept { return pieces_; }
    const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }
    std::optional<int> id_of(std::string_view piece) const;

    int pad_id() const noexcept { return 0; }
    int unk_id() const noexcept { return 1; }
    int cls_id() const noexcept { return 2; }
    int sep_id() const noexcept { return 3; }

    // Greedy longest-match segmentation of one normalized word. A word with
    // a character outside the inventory becomes a single [UNK].
    std::vector<int> tokenize_word(std::string_view word) const;
    std::vector<int> tokenize(std::string_view text) const;
    std::string detokenize(const std::vector<int>& ids) const;

    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

    friend bool operator==(const Vocab& a, const Vocab& b) { return a.pieces_ == b.pieces_; }

private:
    std::vector<std::string> pieces_;
    std::unordered_map<std::string, int> ids_;
    std::size_t longest_piece_ = 0;
};

// Frequency-driven pair merging until the inventory holds target_size
// pieces, or no adjacent pair remains. Ties break on the lexicographically
// smallest (left, right) pair.
Vocab train_vocab(const std::vector<std::string>& corpus, std::size_t target_size);

enum class Segment : std::uint8_t { kSpecial = 0, kQuestion = 1, kContext = 2 };

using BoostVector = std::vector<double>;

struct TokenSpan {
    int start = 0;  // inclusive
    int end = 0;    // inclusive
    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct TokenizedExample {
    std::string id;
    std::vector<int> token_ids;
    std::vector<Segment> segments;
    std::vector<int> word_index;     // -1 for specials
    std::vector<std::string> words;  // question words, then context words
    int question_words = 0;
    int complete_context_words = 0;  // context words whose pieces all survived truncation
    BoostVector boost;               // 1.0 everywhere until a dictionary is applied
    std::vector<std::uint8_t> concept_flags;
    std::optional<TokenSpan> gold_span;
    bool truncated = false;

    std::size_t size() const noexcept { return token_ids.size(); }
    friend bool operator==(const TokenizedExample&, const TokenizedExample&) = default;
};

inline constexpr int kDefaultMaxLen = 384;

TokenizedExample encode_qa(std::string_view question, std::string_view context, const Vocab& vocab,
                           int max_len = kDefaultMaxLen);

// Inclusive token span of the answer, or nullopt if it fell in the cut tail.
std::optional<TokenSpan> align_answer_span(std::string_view context, std::string_view answer_text,
                                           std::size_t answer_char_start,
                                           const TokenizedExample& example);

// M_i = 1 + (BF − 1)/n for each of the n pieces of a concept word, else 1.
BoostVector build_boost_vector(const TokenizedExample& example, const ConceptDictionary& dict);
std::vector<std::uint8_t> build_concept_flags(const TokenizedExample& example,
                                              const ConceptDictionary& dict);

// Fills boost and concept_flags in place.
void apply_dictionary(TokenizedExample& example, const ConceptDictionary& dict);

// Text of tokens [span.start, span.end] rejoined into words.
std::string span_text(const TokenizedExample& example, const Vocab& vocab, TokenSpan span);

nlohmann::json to_json(const TokenizedExample& example);
TokenizedExample tokenized_from_json(const nlohmann::json& j);

}  // namespace cgra
