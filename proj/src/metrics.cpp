#include "codecomp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace codecomp {

double recall_at_k(std::span<const Rank> ranks, std::size_t k) {
    if (k < 1) throw std::invalid_argument("recall_at_k: k must be at least 1");
    if (ranks.empty()) throw std::invalid_argument("recall_at_k: no ranks");
    std::size_t hits = 0;
    for (Rank r : ranks) {
        if (r == 0) throw std::invalid_argument("recall_at_k: ranks are 1-based");
        if (r <= k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double mean_reciprocal_rank(std::span<const Rank> ranks) {
    if (ranks.empty()) throw std::invalid_argument("mrr: no ranks");
    double total = 0;
    for (Rank r : ranks) {
        if (r == 0) throw std::invalid_argument("mrr: ranks are 1-based");
        if (r != kMissRank) total += 1.0 / static_cast<double>(r);
    }
    return total / static_cast<double>(ranks.size());
}

Rank rank_of(std::span<const std::string> ordered, const std::string& target) {
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        if (ordered[i] == target) return i + 1;
    }
    return kMissRank;
}

PopularityBaseline::PopularityBaseline(std::span<const CompletionInstance> train) {
    for (const auto& inst : train) ++counts_[inst.target];
}

std::uint64_t PopularityBaseline::count(const std::string& member) const {
    auto it = counts_.find(member);
    return it == counts_.end() ? 0 : it->second;
}

std::vector<std::string> PopularityBaseline::rank(std::span<const std::string> candidates) const {
    std::vector<std::string> out(candidates.begin(), candidates.end());
    std::sort(out.begin(), out.end(), [this](const std::string& a, const std::string& b) {
        const auto ca = count(a), cb = count(b);
        if (ca != cb) return ca > cb;
        return a < b;
    });
    return out;
}

std::vector<std::string> RandomBaseline::rank(std::span<const std::string> candidates) {
    std::vector<std::string> out(candidates.begin(), candidates.end());
    for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng_() % i]);
    return out;
}

double random_expected_mrr(std::size_t m) {
    if (m == 0) throw std::invalid_argument("random_expected_mrr: empty candidate set");
    double h = 0;
    for (std::size_t i = 1; i <= m; ++i) h += 1.0 / static_cast<double>(i);
    return h / static_cast<double>(m);
}

LatencyStats summarize_latency(std::vector<double> samples) {
    LatencyStats s;
    s.samples = samples.size();
    if (samples.empty()) return s;
    s.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
    double var = 0;
    for (double v : samples) var += (v - s.mean_ms) * (v - s.mean_ms);
    s.stddev_ms = samples.size() > 1 ? std::sqrt(var / static_cast<double>(samples.size() - 1)) : 0.0;
    std::sort(samples.begin(), samples.end());
    auto quantile = [&samples](double q) {
        // Nearest-rank percentile.
        const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
        return samples[std::clamp<std::size_t>(idx, 1, samples.size()) - 1];
    };
    s.p50_ms = quantile(0.50);
    s.p95_ms = quantile(0.95);
    return s;
}

EvalReport report_from_ranks(std::span<const Rank> ranks) {
    EvalReport r;
    r.instances = ranks.size();
    r.recall_at_1 = recall_at_k(ranks, 1);
    r.recall_at_5 = recall_at_k(ranks, 5);
    r.mrr = mean_reciprocal_rank(ranks);
    return r;
}

nlohmann::json to_json(const LatencyStats& s) {
    return {{"mean_ms", s.mean_ms}, {"stddev_ms", s.stddev_ms}, {"p50_ms", s.p50_ms},
            {"p95_ms", s.p95_ms}, {"samples", s.samples}};
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j = {{"recall@1", r.recall_at_1},
                        {"recall@5", r.recall_at_5},
                        {"mrr", r.mrr},
                        {"instances", r.instances},
                        {"parameters", r.parameter_count},
                        {"size_bytes", r.size_bytes},
                        {"latency", to_json(r.latency)},
                        {"config", r.config}};
    for (const auto& [k, v] : r.extra.items()) j[k] = v;
    return j;
}

bool dominates(const ParetoPoint& a, const ParetoPoint& b) {
    const bool no_worse = a.recall_at_5 >= b.recall_at_5 && a.size_bytes <= b.size_bytes &&
                          a.latency_ms <= b.latency_ms;
    const bool better = a.recall_at_5 > b.recall_at_5 || a.size_bytes < b.size_bytes ||
                        a.latency_ms < b.latency_ms;
    return no_worse && better;
}

std::vector<ParetoPoint> pareto_front(std::span<const ParetoPoint> points) {
    std::vector<ParetoPoint> front;
    for (std::size_t i = 0; i < points.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
            dominated = j != i && dominates(points[j], points[i]);
        }
        if (!dominated) front.push_back(points[i]);
    }
    return front;
}

}  // namespace codecomp
