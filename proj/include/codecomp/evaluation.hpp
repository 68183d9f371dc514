#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "codecomp/metrics.hpp"
#include "codecomp/ranker.hpp"
#include "codecomp/trainer.hpp"

CODECOMP_NN_BEGIN

/// Candidates an instance is ranked against at test time: the Vocab list for
/// Vocab models, the record's own candidates otherwise (in-batch distractors
/// exist only during training).
CandidateSet evaluation_candidates(const CompletionModel& model, const CompletionInstance& instance);

/// Rank of every target, computed in gradient-free batches. Equal logits
/// resolve lexicographically, matching the order `rank` returns.
std::vector<Rank> rank_instances(const CompletionModel& model, std::span<const CompletionInstance> instances,
                                 std::size_t batch_size = 128);

struct ModelSize {
    std::size_t parameters = 0;
    std::size_t bytes = 0;  // float32 payload
};

ModelSize model_size(const CompletionModel& model);

/// Unbatched per-suggestion latency of context encoding plus scoring, cold
/// encoding cache, cycling through `instances`.
LatencyStats measure_latency(const CompletionModel& model, std::span<const CompletionInstance> instances,
                             std::size_t repetitions, std::size_t warmup = 10);

struct EvalOptions {
    std::size_t batch_size = 128;
    std::size_t latency_repetitions = 100;  // 0 skips timing
    std::size_t latency_warmup = 10;
};

EvalReport evaluate(const CompletionModel& model, std::span<const CompletionInstance> instances,
                    const EvalOptions& options = {});

std::vector<Rank> baseline_ranks(const PopularityBaseline& baseline, std::span<const CompletionInstance> instances);
std::vector<Rank> baseline_ranks(RandomBaseline& baseline, std::span<const CompletionInstance> instances);

/// Training and validation without `library`; test restricted to it.
DatasetSplit holdout_library(const DatasetSplit& split, const std::string& library);

/// Metrics on the instances of an unseen library, with the random baseline
/// (empirical and analytic expectation) in `extra`.
EvalReport generalization_eval(const CompletionModel& model, std::span<const CompletionInstance> test,
                               const std::string& library, std::uint64_t seed, const EvalOptions& options = {});

/// One trained-and-evaluated configuration of a sweep.
struct SweepResult {
    TrainConfig config;
    EvalReport report;
};

/// Trains and evaluates each configuration in turn. Each finished row is
/// appended to `jsonl` when it is non-null.
std::vector<SweepResult> run_sweep(std::span<const TrainConfig> configs, const DatasetSplit& split,
                                   const EvalOptions& options, std::ostream* jsonl = nullptr);

/// Seeded random sample of `count` configurations around `base` over D, H,
/// vocabulary sizes and encoder kinds.
std::vector<TrainConfig> sample_sweep(const TrainConfig& base, std::size_t count, std::uint64_t seed);

ParetoPoint pareto_point(const EvalReport& report);

/// recall5,size_bytes,latency_ms,config
std::string pareto_csv(std::span<const ParetoPoint> points);

CODECOMP_NN_END
