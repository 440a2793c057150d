#include "cgra/text.h"

#include <cstdint>
#include <string_view>
#include <unordered_map>

namespace cgra::text {

namespace {

struct Decoded {
    char32_t cp;
    std::size_t len;
};

Decoded decode(std::string_view s, std::size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) -> char32_t {
        if (i + k >= s.size()) return 0xFFFD;
        return static_cast<unsigned char>(s[i + k]) & 0x3F;
    };
    if (b0 < 0x80) return {b0, 1};
    if ((b0 >> 5) == 0x6 && i + 1 < s.size()) return {((b0 & 0x1F) << 6) | cont(1), 2};
    if ((b0 >> 4) == 0xE && i + 2 < s.size()) {
        return {((b0 & 0x0F) << 12) | (cont(1) << 6) | cont(2), 3};
    }
    if ((b0 >> 3) == 0x1E && i + 3 < s.size()) {
        return {((b0 & 0x07) << 18) | (cont(1) << 12) | (cont(2) << 6) | cont(3), 4};
    }
    return {0xFFFD, 1};
}

// Codepoint → lowercase ASCII replacement; "" drops an in-word mark.
const std::unordered_map<char32_t, const char*>& transliteration() {
    static const std::unordered_map<char32_t, const char*> table = {
        {U'ā', "a"}, {U'Ā', "a"}, {U'á', "a"}, {U'Á', "a"}, {U'à', "a"}, {U'À', "a"},
        {U'â', "a"}, {U'Â', "a"}, {U'ä', "a"}, {U'Ä', "a"}, {U'ã', "a"},
        {U'ī', "i"}, {U'Ī', "i"}, {U'í', "i"}, {U'Í', "i"}, {U'ì', "i"}, {U'î', "i"},
        {U'ï', "i"},
        {U'ū', "u"}, {U'Ū', "u"}, {U'ú', "u"}, {U'Ú', "u"}, {U'ù', "u"}, {U'û', "u"},
        {U'ü', "u"}, {U'Ü', "u"},
        {U'é', "e"}, {U'É', "e"}, {U'è', "e"}, {U'ê', "e"}, {U'ë', "e"},
        {U'ó', "o"}, {U'ò', "o"}, {U'ô', "o"}, {U'ö', "o"}, {U'Ö', "o"},
        {U'ṣ', "s"}, {U'Ṣ', "s"}, {U'š', "s"}, {U'Š', "s"},
        {U'ḥ', "h"}, {U'Ḥ', "h"}, {U'ḫ', "kh"},
        {U'ḍ', "d"}, {U'Ḍ', "d"}, {U'ḏ', "dh"},
        {U'ṭ', "t"}, {U'Ṭ', "t"}, {U'ṯ', "th"},
        {U'ẓ', "z"}, {U'Ẓ', "z"}, {U'ġ', "gh"}, {U'Ġ', "gh"},
        {U'ç', "c"}, {U'ñ', "n"},
        // in-word marks: apostrophes, ʿayn, hamza
        {U'\'', ""}, {U'’', ""}, {U'‘', ""}, {U'ʿ', ""}, {U'ʾ', ""}, {U'ʻ', ""}, {U'ʼ', ""},
    };
    return table;
}

const std::unordered_map<std::string_view, std::string_view>& spelling_variants() {
    static const std::unordered_map<std::string_view, std::string_view> table = {
        {"mohammed", "muhammad"}, {"muhammed", "muhammad"}, {"mohammad", "muhammad"},
        {"mohamed", "muhammad"},  {"omar", "umar"},         {"hadeeth", "hadith"},
        {"ahadith", "hadith"},    {"eman", "iman"},         {"bukhaari", "bukhari"},
    };
    return table;
}

}  // namespace

std::vector<WordSpan> split_words(std::string_view s) {
    std::vector<WordSpan> words;
    std::string cur;
    std::size_t cur_begin = 0, cur_end = 0;
    bool in_word = false;

    auto flush = [&] {
        if (in_word && !cur.empty()) {
            const auto& variants = spelling_variants();
            if (auto it = variants.find(cur); it != variants.end()) cur = std::string(it->second);
            words.push_back({std::move(cur), cur_begin, cur_end});
        }
        cur.clear();
        in_word = false;
    };

    std::size_t i = 0;
    while (i < s.size()) {
        const Decoded dc = decode(s, i);
        const char32_t cp = dc.cp;
        const char* out = nullptr;
        std::string own;
        if (cp < 0x80) {
            const char c = static_cast<char>(cp);
            if (c >= 'A' && c <= 'Z') {
                own.assign(1, static_cast<char>(c - 'A' + 'a'));
                out = own.c_str();
            } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
                own.assign(1, c);
                out = own.c_str();
            } else if (c == '\'') {
                out = "";
            }
        } else if (auto it = transliteration().find(cp); it != transliteration().end()) {
            out = it->second;
        } else if (cp >= 0x2000 && cp <= 0x206F) {
            // general punctuation block: dashes, quotes, ellipsis
        } else if (cp == 0xA0 || cp == 0xFFFD || (cp >= 0x80 && cp <= 0xBF)) {
            // no-break space, bad bytes, Latin-1 punctuation
        } else {
            // other scripts pass through unchanged
            own.assign(s.substr(i, dc.len));
            out = own.c_str();
        }

        if (out == nullptr) {
            flush();
        } else {
            if (!in_word) {
                in_word = true;
                cur_begin = i;
            }
            cur += out;
            cur_end = i + dc.len;
        }
        i += dc.len;
    }
    flush();
    return words;
}

std::vector<std::string> normalized_words(std::string_view original) {
    std::vector<std::string> out;
    for (auto& w : split_words(original)) out.push_back(std::move(w.norm));
    return out;
}

std::string normalize(std::string_view original) {
    std::string out;
    for (const auto& w : split_words(original)) {
        if (!out.empty()) out += ' ';
        out += w.norm;
    }
    return out;
}

std::vector<std::string> utf8_chars(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const Decoded dc = decode(s, i);
        out.emplace_back(s.substr(i, dc.len));
        i += dc.len;
    }
    return out;
}

}  // namespace cgra::text
