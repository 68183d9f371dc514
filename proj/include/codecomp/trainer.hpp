#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "codecomp/corpus.hpp"
#include "codecomp/ranker.hpp"

CODECOMP_NN_BEGIN

struct TrainConfig {
    ModelConfig model;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::size_t max_epochs = 20;
    std::size_t patience = 3;
    double clip_norm = 5.0;
    std::uint64_t seed = 1;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Adam with bias correction.
class Adam {
public:
    Adam(NamedParameters params, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
         double epsilon = 1e-8);
    void step();
    std::size_t steps() const { return t_; }

private:
    NamedParameters params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(const NamedParameters& params, double max_norm);

/// Patience-based stopping on a metric to maximize.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
    /// Records the metric of the next epoch; true when it is a new best.
    bool observe(double metric);
    bool should_stop() const { return since_best_ >= patience_; }
    std::size_t best_epoch() const { return best_epoch_; }  // 1-based; 0 before any epoch
    double best() const { return best_; }

private:
    std::size_t patience_;
    std::size_t epoch_ = 0;
    std::size_t best_epoch_ = 0;
    std::size_t since_best_ = 0;
    double best_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0;
    double valid_mrr = 0;
    double seconds = 0;
};

struct TrainResult {
    CompletionModel model;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_valid_mrr = 0;
    std::size_t dropped_instances = 0;  // targets outside the Vocab provider
};

/// Optional hook for the plain-text metrics log.
using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const TrainConfig& config, const DatasetSplit& split, const EpochCallback& on_epoch = {});

/// "epoch 3 train_loss 0.412345 valid_mrr 0.812345 seconds 12.3"
std::string format_epoch(const EpochRecord& record);

CODECOMP_NN_END
