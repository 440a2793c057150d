#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cgra/concept_dictionary.h"
#include "cgra/dataset.h"
#include "cgra/evaluation.h"
#include "cgra/model.h"

namespace cgra {

enum class Stage : std::uint8_t { kAdaptation, kSpecialization };
std::string to_string(Stage s);

struct StageConfig {
    Stage stage = Stage::kAdaptation;
    int epochs = 10;
    bool boost_enabled = false;
    std::set<ParamGroup> trainable = {ParamGroup::kLora, ParamGroup::kHeads};
    // Per-stage overrides of the TrainConfig schedule.
    std::optional<double> learning_rate;
    std::optional<int> warmup_steps;

    void validate() const;
    static StageConfig adaptation();
    static StageConfig specialization();
};

struct TrainConfig {
    double learning_rate = 2e-5;
    int effective_batch = 4;
    int warmup_steps = 500;
    int max_epochs = 50;  // global cap across stages
    int patience = 3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 1;
    // Hard cap on optimizer steps across all stages; 0 means none.
    long max_steps = 0;
    int max_answer_len = kDefaultMaxAnswerLen;

    void validate() const;
};

nlohmann::json to_json(const StageConfig& s);
nlohmann::json to_json(const TrainConfig& c);
StageConfig stage_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Linear 0 → lr over warmup_steps, then linear lr → 0 at total_steps.
double lr_schedule(long step, const TrainConfig& cfg, long total_steps);
double lr_schedule(long step, double lr, long warmup_steps, long total_steps);

struct AdamMoments {
    Matrix m, v;
};

// One decoupled-decay adaptive-moment step for a single tensor; t counts
// from 1. p ← p − lr·(m̂/(√v̂ + ε) + wd·p).
void adamw_update(Matrix& value, const Matrix& grad, AdamMoments& state, long t, double lr,
                  const TrainConfig& cfg);

class AdamW {
public:
    explicit AdamW(TrainConfig cfg) : cfg_(std::move(cfg)) {}
    // Steps every parameter whose group is in `trainable`. Throws before
    // touching anything if a gradient is not finite.
    void step(const std::vector<Param*>& params, const std::set<ParamGroup>& trainable, double lr);
    long steps() const noexcept { return t_; }

private:
    TrainConfig cfg_;
    std::map<std::string, AdamMoments> state_;
    long t_ = 0;
};

struct HistoryRecord {
    long step = 0;
    std::string stage;
    int epoch = 0;
    double train_loss = 0.0;
    double val_em = 0.0;
    double val_f1 = 0.0;
    double lr = 0.0;
    friend bool operator==(const HistoryRecord&, const HistoryRecord&) = default;
};

struct TrainHistory {
    std::vector<HistoryRecord> records;
    std::optional<std::size_t> best_index;  // into records
    double best_em = -1.0;
    std::size_t skipped_examples = 0;  // training examples without a gold span
    long total_steps = 0;
    bool early_stopped = false;

    std::string to_csv() const;
    friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

// Patience rule in isolation: index of the evaluation after which training
// stops, or nullopt if it never does.
std::optional<std::size_t> early_stop_index(const std::vector<double>& val_em, int patience);

// Mean loss and EM over a set, used for validation and overfit checks.
struct SetScore {
    double em = 0.0;  // percent
    double f1 = 0.0;  // percent
};
SetScore score_examples(const Model& model, const std::vector<Example>& data, int max_answer_len);

class Trainer {
public:
    Trainer(Model& model, const std::vector<Example>& train, const std::vector<Example>& val,
            TrainConfig cfg);

    // Runs one stage with its own schedule and optimizer moments. Returns
    // false once a global limit (max_epochs, max_steps) has been reached.
    bool run_stage(const StageConfig& stage);

    // Restores the best-EM snapshot seen so far.
    void restore_best();

    const TrainHistory& history() const noexcept { return history_; }
    long steps() const noexcept { return step_; }

    // Loss and gradients of one example, accumulated into the model.
    static Real accumulate_example(Model& model, const TokenizedExample& ex);

private:
    Model& model_;
    const std::vector<Example>& train_;
    const std::vector<Example>& val_;
    TrainConfig cfg_;
    TrainHistory history_;
    std::optional<Model> best_model_;
    long step_ = 0;
    int epochs_done_ = 0;
    // A model built without concepts (NO_ICD) never gets them from a stage.
    bool concepts_allowed_ = true;
};

struct TrainOutcome {
    TrainHistory history;
};

// Stage 1 then stage 2 (or any list). Early stopping tracks validation EM
// across stages; the model is left at the best checkpoint.
TrainOutcome train_two_stage(Model& model, const std::vector<Example>& train,
                             const std::vector<Example>& val, const TrainConfig& cfg,
                             const std::vector<StageConfig>& stages);

// k disjoint validation folds over indices [0, n); fold sizes differ by at most one.
struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};
std::vector<Fold> kfold_split(std::size_t n, int k, std::uint64_t seed);

class SynonymTable {
public:
    SynonymTable() = default;
    // Throws if any key or candidate is a dictionary term.
    SynonymTable(std::map<std::string, std::vector<std::string>> table, const ConceptDictionary& dict);

    const std::vector<std::string>* candidates(const std::string& word) const;
    bool empty() const noexcept { return table_.empty(); }
    std::size_t size() const noexcept { return table_.size(); }

    static SynonymTable load(const std::filesystem::path& path, const ConceptDictionary& dict);

private:
    std::map<std::string, std::vector<std::string>> table_;
};

struct AugmentResult {
    QaRecord record;
    std::size_t eligible = 0;  // words that had candidates and were allowed to change
    std::size_t replaced = 0;
};

AugmentResult augment_synonym(const QaRecord& rec, const SynonymTable& table,
                              const ConceptDictionary& dict, double rate, std::uint64_t seed);

}  // namespace cgra
