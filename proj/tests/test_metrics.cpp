#include <doctest.h>

#include <cmath>
#include <random>

#include "codecomp/metrics.hpp"

using namespace codecomp;

using Names = std::vector<std::string>;

namespace {

CompletionInstance with_target(const std::string& target) {
    CompletionInstance inst;
    inst.id = target;
    inst.context_tokens = {"x", "."};
    inst.candidates = {target};
    inst.target = target;
    return inst;
}

}  // namespace

TEST_CASE("recall_at_k examples") {
    const std::vector<Rank> ranks = {1, 6, 3};
    CHECK(recall_at_k(ranks, 5) == doctest::Approx(2.0 / 3.0));
    const std::vector<Rank> ones(7, 1);
    for (std::size_t k : {1, 2, 10}) CHECK(recall_at_k(ones, k) == 1.0);
    const std::vector<Rank> misses(4, kMissRank);
    CHECK(recall_at_k(misses, 5) == 0.0);
    CHECK_THROWS(recall_at_k(ranks, 0));
}

TEST_CASE("mrr examples") {
    CHECK(std::abs(mean_reciprocal_rank(std::vector<Rank>{1, 2, 4}) - 0.5833333333333334) < 1e-12);
    CHECK(mean_reciprocal_rank(std::vector<Rank>{1, 1, 1}) == 1.0);
    CHECK(mean_reciprocal_rank(std::vector<Rank>{2, 2}) == 0.5);
    CHECK(mean_reciprocal_rank(std::vector<Rank>{kMissRank, 1}) == 0.5);
    CHECK_THROWS(mean_reciprocal_rank(std::vector<Rank>{}));
}

TEST_CASE("recall is monotone in k and bounded by mrr") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Rank> ranks(1 + rng() % 30);
        for (auto& r : ranks) r = rng() % 7 == 0 ? kMissRank : 1 + rng() % 12;
        double previous = 0;
        for (std::size_t k = 1; k <= 15; ++k) {
            const double r = recall_at_k(ranks, k);
            CHECK(r >= previous);
            previous = r;
        }
        const double mrr = mean_reciprocal_rank(ranks);
        CHECK(mrr >= recall_at_k(ranks, 1));
        CHECK(mrr <= 1.0);
    }
}

TEST_CASE("rank_of is 1-based with misses at infinity") {
    const Names ordered = {"a", "b", "c"};
    CHECK(rank_of(ordered, "a") == 1);
    CHECK(rank_of(ordered, "c") == 3);
    CHECK(rank_of(ordered, "z") == kMissRank);
}

TEST_CASE("popularity baseline orders by training frequency") {
    std::vector<CompletionInstance> train;
    for (const auto& [t, n] : std::vector<std::pair<std::string, int>>{{"dot", 5}, {"sum", 3}, {"conj", 1}})
        for (int i = 0; i < n; ++i) train.push_back(with_target(t));
    const PopularityBaseline pop(train);
    CHECK(pop.rank(Names{"conj", "dot", "sum"}) == Names{"dot", "sum", "conj"});
    CHECK(pop.rank(Names{"zzz", "conj", "aaa"}) == Names{"conj", "aaa", "zzz"});
    CHECK(pop.rank(Names{"sum", "dot"}) == pop.rank(Names{"dot", "sum"}));
}

TEST_CASE("random baseline: singletons always rank first, seeds reproduce") {
    RandomBaseline r(3);
    for (int i = 0; i < 10; ++i) CHECK(r.rank(Names{"only"}) == Names{"only"});
    RandomBaseline a(9), b(9);
    const Names c = {"a", "b", "c", "d", "e"};
    for (int i = 0; i < 20; ++i) CHECK(a.rank(c) == b.rank(c));
}

TEST_CASE("random baseline MRR converges to the harmonic expectation") {
    const std::size_t m = 8;
    CHECK(random_expected_mrr(m) == doctest::Approx((1 + 1. / 2 + 1. / 3 + 1. / 4 + 1. / 5 + 1. / 6 + 1. / 7 + 1. / 8) / 8));
    Names c;
    for (std::size_t i = 0; i < m; ++i) c.push_back("m" + std::to_string(i));
    RandomBaseline r(11);
    std::vector<Rank> ranks;
    const int n = 20000;
    for (int i = 0; i < n; ++i) ranks.push_back(rank_of(r.rank(c), "m3"));
    // Reciprocal ranks of a uniform permutation have variance below 1/4.
    const double ci = 4 * 0.5 / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean_reciprocal_rank(ranks) - random_expected_mrr(m)) < ci);
}

TEST_CASE("latency summary statistics") {
    const auto s = summarize_latency({4, 1, 3, 2, 5});
    CHECK(s.samples == 5);
    CHECK(s.mean_ms == doctest::Approx(3));
    CHECK(s.p50_ms == 3);
    CHECK(s.p95_ms == 5);
    CHECK(s.stddev_ms == doctest::Approx(std::sqrt(2.5)));
    CHECK(summarize_latency({}).samples == 0);
}

TEST_CASE("report_from_ranks fills the accuracy columns") {
    const auto r = report_from_ranks(std::vector<Rank>{1, 2, 4, kMissRank});
    CHECK(r.instances == 4);
    CHECK(r.recall_at_1 == 0.25);
    CHECK(r.recall_at_5 == 0.75);
    CHECK(r.mrr == doctest::Approx((1 + 0.5 + 0.25) / 4));
    const auto j = to_json(r);
    CHECK(j.at("recall@1") == 0.25);
    CHECK(j.contains("latency"));
}

TEST_CASE("pareto front examples") {
    const std::vector<ParetoPoint> two = {{0.9, 10e6, 5, {{"id", 0}}}, {0.8, 20e6, 9, {{"id", 1}}}};
    const auto front = pareto_front(two);
    REQUIRE(front.size() == 1);
    CHECK(front[0].config.at("id") == 0);
    CHECK(pareto_front(std::vector<ParetoPoint>{two[1]}).size() == 1);
    const std::vector<ParetoPoint> dup = {two[0], two[0]};
    CHECK(pareto_front(dup).size() == 2);
}

TEST_CASE("pareto front is dominance-free and idempotent") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<ParetoPoint> points(1 + rng() % 25);
        for (auto& p : points) p = {std::round(u(rng) * 10) / 10, std::round(u(rng) * 5), std::round(u(rng) * 5), {}};
        const auto front = pareto_front(points);
        for (const auto& a : front)
            for (const auto& b : front) CHECK_FALSE(dominates(a, b));
        // Everything left out is dominated by something.
        for (const auto& p : points) {
            bool kept = false, dominated = false;
            for (const auto& f : front) kept = kept || (f.recall_at_5 == p.recall_at_5 &&
                                                        f.size_bytes == p.size_bytes && f.latency_ms == p.latency_ms);
            for (const auto& q : points) dominated = dominated || dominates(q, p);
            CHECK(kept != dominated);
        }
        CHECK(pareto_front(front).size() == front.size());
    }
}
