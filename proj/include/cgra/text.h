#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cgra::text {

// A word located in the original (unnormalized) text.
struct WordSpan {
    std::string norm;   // normalized surface form, never empty
    std::size_t begin;  // byte offset into the original text
    std::size_t end;    // one past the last byte
};

// Splits text into words and normalizes each: case folding, diacritic
// transliteration (ṣ→s, ḥ→h, ī→i ...), apostrophes and ʿayn/hamza marks
// removed, every other punctuation character acts as a separator.
// A small spelling-variant table is applied last ("mohammed" → "muhammad").
std::vector<WordSpan> split_words(std::string_view original);

// Space-joined normalized words. Idempotent.
std::string normalize(std::string_view original);

std::vector<std::string> normalized_words(std::string_view original);

// UTF-8 codepoints of s as separate strings.
std::vector<std::string> utf8_chars(std::string_view s);

}  // namespace cgra::text
