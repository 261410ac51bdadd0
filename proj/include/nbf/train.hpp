#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nbf/eval.hpp"
#include "nbf/graph.hpp"
#include "nbf/model.hpp"
#include "nbf/optim.hpp"

namespace nbf {

enum class SelectionMetric { MRR, AUROC };

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 256;  // positives per step
    std::size_t max_steps = 0;     // 0 = no step cap
    std::uint64_t seed = 0;
    double learning_rate = 5e-3;
    std::string checkpoint_path;  // empty = no checkpoint written
    SelectionMetric selection = SelectionMetric::MRR;
    // validation protocol knobs
    std::size_t eval_workers = 1;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double val_metric = 0.0;
};

/// Per-step view handed to an optional inspector (tests use this to assert
/// the query-edge mask really removed the batch edges).
struct StepInfo {
    std::size_t step;
    const std::vector<Triplet>* batch;
    const std::vector<std::uint8_t>* edge_mask;
    double loss;
};

struct TrainResult {
    ModelParams best;
    ModelParams final_params;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_metric = 0.0;
};

/// Trains on splits.train over `graph` (built from the train facts). Each
/// step samples a batch of positives, draws PCA negatives (head/tail side
/// with equal probability), masks edges that directly connect batch query
/// pairs, runs grouped forwards per (source, relation), and applies one Adam
/// update. Validation runs after every epoch; the best parameters by the
/// selection metric are retained. Deterministic for a fixed seed.
TrainResult train(const KnowledgeGraph& graph, const Splits& splits, const ModelConfig& model_config,
                  const TrainConfig& train_config, std::ostream* progress = nullptr,
                  const std::optional<ModelParams>& initial_params = std::nullopt,
                  const std::function<void(const StepInfo&)>& inspect = nullptr);

/// Flat "key = value" config files; '#' comment lines are skipped and
/// unknown keys are errors. Returned pairs preserve file order.
std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& path);

/// Applies parsed keys onto the two configs, rejecting unknown keys.
void apply_config_entries(const std::vector<std::pair<std::string, std::string>>& entries,
                          ModelConfig& model_config, TrainConfig& train_config);

}  // namespace nbf
