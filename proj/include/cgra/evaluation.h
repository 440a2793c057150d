#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cgra/concept_dictionary.h"
#include "cgra/dataset.h"
#include "cgra/model.h"
#include "cgra/tensor.h"
#include "cgra/tokenizer.h"

namespace cgra {

// Lowercase, drop ASCII punctuation, drop the articles a/an/the, split on
// whitespace.
std::vector<std::string> normalize_answer(std::string_view text);

using TextPair = std::pair<std::string, std::string>;  // (prediction, gold)

bool exact_match_single(std::string_view pred, std::string_view gold);
// Percentage of pairs whose normalized forms are equal.
double exact_match(const std::vector<TextPair>& pairs);

// Multiset token overlap F1 in [0, 1].
double token_f1(std::string_view pred, std::string_view gold);

// Sentence BLEU against one reference: clipped n-gram precisions, uniform
// weights, brevity penalty min(1, exp(1 − r/c)); a zero precision is
// replaced by 1e-9 before the log.
inline constexpr double kBleuEpsilon = 1e-9;
double bleu(std::string_view pred, std::string_view gold, int max_n = 4);

struct BleuParts {
    std::vector<double> precisions;  // p_1..p_max_n before smoothing
    double brevity_penalty = 0.0;
    double score = 0.0;
};
BleuParts bleu_parts(std::string_view pred, std::string_view gold, int max_n = 4);
double brevity_penalty(std::size_t candidate_len, std::size_t reference_len);

// LCS-based F-measure over normalized tokens.
double rouge_l(std::string_view pred, std::string_view gold, double beta = 1.0);
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

class TokenEmbedder {
public:
    virtual ~TokenEmbedder() = default;
    virtual std::size_t dim() const = 0;
    // One row per token.
    virtual Matrix embed(const std::vector<std::string>& tokens) const = 0;
};

// Deterministic pseudo-random vector per token string.
class HashEmbedder : public TokenEmbedder {
public:
    explicit HashEmbedder(std::size_t dim, std::uint64_t seed = 7) : dim_(dim), seed_(seed) {}
    std::size_t dim() const override { return dim_; }
    Matrix embed(const std::vector<std::string>& tokens) const override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

// Final hidden states of the model over [CLS] tokens [SEP], averaged over
// each word's pieces.
class ModelEmbedder : public TokenEmbedder {
public:
    ModelEmbedder(const Model& model, const Vocab& vocab) : model_(model), vocab_(vocab) {}
    std::size_t dim() const override { return static_cast<std::size_t>(model_.config().hidden); }
    Matrix embed(const std::vector<std::string>& tokens) const override;

private:
    const Model& model_;
    const Vocab& vocab_;
};

// Greedy cosine matching F1 per pair, averaged over pairs.
double embed_score_single(std::string_view pred, std::string_view gold, const TokenEmbedder& embedder);
double embed_score(const std::vector<TextPair>& pairs, const TokenEmbedder& embedder);

enum class AblationVariant : std::uint8_t { kFull, kNoGating, kNoIcd, kNoResidual };
std::string to_string(AblationVariant v);
AblationVariant ablation_from_string(std::string_view s);
inline constexpr AblationVariant kAllVariants[] = {AblationVariant::kFull, AblationVariant::kNoGating,
                                                    AblationVariant::kNoIcd, AblationVariant::kNoResidual};

// Copy of the model with the variant's modes switched on top of its
// current configuration.
Model apply_ablation(const Model& model, AblationVariant v);

struct MetricReport {
    std::string variant = "FULL";
    double em = 0.0;  // percent
    double f1 = 0.0;  // percent
    double bleu = 0.0;
    double rouge_l = 0.0;
    double embed_score = 0.0;
    // EM over pairs whose gold answer contains a dictionary term.
    std::optional<double> concept_em;
    std::size_t concept_examples = 0;
    double mean_latency_ms = 0.0;
    std::size_t n_examples = 0;
};
nlohmann::json to_json(const MetricReport& r, bool include_latency = true);
std::string format_metric_table(const std::vector<MetricReport>& reports);

struct Prediction {
    std::string id;
    std::string pred_text;
    std::string gold_text;
    int start = 0;
    int end = 0;
};
nlohmann::json to_json(const std::vector<Prediction>& preds);

struct EvalOptions {
    int max_answer_len = kDefaultMaxAnswerLen;
    bool measure_latency = true;
    int latency_repeats = 5;
    const ConceptDictionary* dict = nullptr;      // enables concept-EM
    const TokenEmbedder* embedder = nullptr;      // null: ModelEmbedder over the evaluated model
};

struct EvalResult {
    MetricReport report;
    std::vector<Prediction> predictions;
};

// Forward-only wall time of one example, median of `repeats` runs, in ms.
double measure_latency_ms(const Model& model, const TokenizedExample& ex, int repeats);

EvalResult evaluate(const Model& model, const Vocab& vocab, const std::vector<Example>& data,
                    AblationVariant variant, const EvalOptions& opts = {});

struct AblationReport {
    std::vector<MetricReport> reports;  // FULL, NO_GATING, NO_ICD, NO_RESIDUAL
};
AblationReport run_ablation(const Model& model, const Vocab& vocab, const std::vector<Example>& test,
                            const EvalOptions& opts = {});
// Table with exactly the columns Variant, EM, F1, BERTScore.
std::string format_ablation_table(const AblationReport& rep);
nlohmann::json to_json(const AblationReport& rep);

}  // namespace cgra
