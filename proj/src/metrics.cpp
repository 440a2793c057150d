#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>

#include "cgra/evaluation.h"
#include "cgra/rng.h"

namespace cgra {

std::vector<std::string> normalize_answer(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty() && cur != "a" && cur != "an" && cur != "the") out.push_back(cur);
        cur.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            flush();
        } else if (c < 0x80 && std::ispunct(c)) {
            continue;
        } else if (c >= 'A' && c <= 'Z') {
            cur += static_cast<char>(c - 'A' + 'a');
        } else {
            cur += ch;
        }
    }
    flush();
    return out;
}

bool exact_match_single(std::string_view pred, std::string_view gold) {
    return normalize_answer(pred) == normalize_answer(gold);
}

double exact_match(const std::vector<TextPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("exact_match: empty pair list");
    std::size_t hits = 0;
    for (const auto& [p, g] : pairs) hits += exact_match_single(p, g) ? 1 : 0;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(pairs.size());
}

double token_f1(std::string_view pred, std::string_view gold) {
    const auto p = normalize_answer(pred);
    const auto g = normalize_answer(gold);
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    std::map<std::string, long> counts;
    for (const auto& t : g) ++counts[t];
    long overlap = 0;
    for (const auto& t : p) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    const double prec = static_cast<double>(overlap) / static_cast<double>(p.size());
    const double rec = static_cast<double>(overlap) / static_cast<double>(g.size());
    return 2.0 * prec * rec / (prec + rec);
}

double brevity_penalty(std::size_t c, std::size_t r) {
    if (c == 0) return 0.0;
    if (c >= r) return 1.0;
    return std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
}

BleuParts bleu_parts(std::string_view pred, std::string_view gold, int max_n) {
    if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");
    const auto p = normalize_answer(pred);
    const auto g = normalize_answer(gold);
    BleuParts out;
    out.brevity_penalty = brevity_penalty(p.size(), g.size());
    if (p.empty()) return out;

    auto ngrams = [](const std::vector<std::string>& toks, std::size_t n) {
        std::map<std::vector<std::string>, long> m;
        for (std::size_t i = 0; i + n <= toks.size(); ++i) {
            ++m[std::vector<std::string>(toks.begin() + static_cast<long>(i),
                                         toks.begin() + static_cast<long>(i + n))];
        }
        return m;
    };
    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        const auto pc = ngrams(p, static_cast<std::size_t>(n));
        const auto gc = ngrams(g, static_cast<std::size_t>(n));
        long total = 0, clipped = 0;
        for (const auto& [gram, cnt] : pc) {
            total += cnt;
            auto it = gc.find(gram);
            if (it != gc.end()) clipped += std::min(cnt, it->second);
        }
        const double prec = total > 0 ? static_cast<double>(clipped) / static_cast<double>(total) : 0.0;
        out.precisions.push_back(prec);
        log_sum += std::log(prec > 0.0 ? prec : kBleuEpsilon) / static_cast<double>(max_n);
    }
    out.score = out.brevity_penalty * std::exp(log_sum);
    return out;
}

double bleu(std::string_view pred, std::string_view gold, int max_n) {
    return bleu_parts(pred, gold, max_n).score;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(std::string_view pred, std::string_view gold, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("rouge_l: beta must be > 0");
    const auto p = normalize_answer(pred);
    const auto g = normalize_answer(gold);
    if (p.empty() && g.empty()) return 1.0;
    const std::size_t lcs = lcs_length(p, g);
    if (lcs == 0) return 0.0;
    const double r = static_cast<double>(lcs) / static_cast<double>(g.size());
    const double pr = static_cast<double>(lcs) / static_cast<double>(p.size());
    const double b2 = beta * beta;
    return (1.0 + b2) * r * pr / (r + b2 * pr);
}

Matrix HashEmbedder::embed(const std::vector<std::string>& tokens) const {
    Matrix out(tokens.size(), dim_);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
        for (unsigned char c : tokens[t]) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        Rng rng(h ^ seed_);
        for (std::size_t c = 0; c < dim_; ++c) out(t, c) = rng.normal();
    }
    return out;
}

namespace {

Real cosine(std::span<const Real> a, std::span<const Real> b) {
    Real dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double embed_score_single(std::string_view pred, std::string_view gold, const TokenEmbedder& embedder) {
    const auto p = normalize_answer(pred);
    const auto g = normalize_answer(gold);
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    const Matrix ep = embedder.embed(p);
    const Matrix eg = embedder.embed(g);
    if (ep.cols() != embedder.dim() || eg.cols() != embedder.dim() || ep.rows() != p.size() ||
        eg.rows() != g.size()) {
        throw std::invalid_argument("embed_score: embedder returned wrong dimensions");
    }
    std::vector<Real> best_p(p.size(), -1.0), best_g(g.size(), -1.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = 0; j < g.size(); ++j) {
            const Real c = cosine(ep.row(i), eg.row(j));
            best_p[i] = std::max(best_p[i], c);
            best_g[j] = std::max(best_g[j], c);
        }
    }
    Real prec = 0.0, rec = 0.0;
    for (Real v : best_p) prec += v;
    for (Real v : best_g) rec += v;
    prec = std::max(0.0, prec / static_cast<Real>(p.size()));
    rec = std::max(0.0, rec / static_cast<Real>(g.size()));
    if (prec + rec == 0.0) return 0.0;
    return 2.0 * prec * rec / (prec + rec);
}

double embed_score(const std::vector<TextPair>& pairs, const TokenEmbedder& embedder) {
    if (pairs.empty()) throw std::invalid_argument("embed_score: empty pair list");
    double s = 0.0;
    for (const auto& [p, g] : pairs) s += embed_score_single(p, g, embedder);
    return s / static_cast<double>(pairs.size());
}

}  // namespace cgra
