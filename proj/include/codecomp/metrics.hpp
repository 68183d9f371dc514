#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "codecomp/corpus.hpp"

namespace codecomp {

/// 1-based position of the target in a ranking; kMissRank when absent.
using Rank = std::size_t;
inline constexpr Rank kMissRank = std::numeric_limits<Rank>::max();

double recall_at_k(std::span<const Rank> ranks, std::size_t k);
double mean_reciprocal_rank(std::span<const Rank> ranks);

/// Position of `target` in `ordered`, or kMissRank.
Rank rank_of(std::span<const std::string> ordered, const std::string& target);

/// Ranks candidates by global training-target frequency; ties lexicographic,
/// unseen candidates last.
class PopularityBaseline {
public:
    explicit PopularityBaseline(std::span<const CompletionInstance> train);
    std::vector<std::string> rank(std::span<const std::string> candidates) const;
    std::uint64_t count(const std::string& member) const;

private:
    std::map<std::string, std::uint64_t> counts_;
};

/// Seeded uniform shuffle of each candidate list.
class RandomBaseline {
public:
    explicit RandomBaseline(std::uint64_t seed) : rng_(seed) {}
    std::vector<std::string> rank(std::span<const std::string> candidates);

private:
    std::mt19937_64 rng_;
};

/// Expected MRR of a uniform shuffle of m candidates: (1/m) Σ 1/i.
double random_expected_mrr(std::size_t m);

struct LatencyStats {
    double mean_ms = 0;
    double stddev_ms = 0;
    double p50_ms = 0;
    double p95_ms = 0;
    std::size_t samples = 0;
};

LatencyStats summarize_latency(std::vector<double> samples_ms);

struct EvalReport {
    double recall_at_1 = 0;
    double recall_at_5 = 0;
    double mrr = 0;
    std::size_t instances = 0;
    std::size_t parameter_count = 0;
    std::size_t size_bytes = 0;
    LatencyStats latency;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json extra = nlohmann::json::object();
};

EvalReport report_from_ranks(std::span<const Rank> ranks);
nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const LatencyStats& stats);

struct ParetoPoint {
    double recall_at_5 = 0;
    double size_bytes = 0;
    double latency_ms = 0;
    nlohmann::json config = nlohmann::json::object();
};

/// True when `a` is at least as good as `b` everywhere and better somewhere.
bool dominates(const ParetoPoint& a, const ParetoPoint& b);
/// Points not dominated by any other point, in input order.
std::vector<ParetoPoint> pareto_front(std::span<const ParetoPoint> points);

}  // namespace codecomp
