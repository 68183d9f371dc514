#include "codecomp/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

CODECOMP_NN_BEGIN

CandidateSet evaluation_candidates(const CompletionModel& model, const CompletionInstance& instance) {
    if (model.config().provider == ProviderKind::vocab) return model.vocab_provider().provide(instance);
    return provide_stan(instance);
}

std::vector<Rank> rank_instances(const CompletionModel& model, std::span<const CompletionInstance> instances,
                                 std::size_t batch_size) {
    if (batch_size == 0) throw std::invalid_argument("rank_instances: batch size must be positive");
    NoGradGuard guard;
    std::vector<Rank> ranks;
    ranks.reserve(instances.size());
    for (std::size_t start = 0; start < instances.size(); start += batch_size) {
        auto batch = instances.subspan(start, std::min(batch_size, instances.size() - start));
        std::vector<CandidateSet> sets;
        for (const auto& inst : batch) sets.push_back(evaluation_candidates(model, inst));
        auto flat = SegmentedCandidateBatch::build(batch, sets, /*allow_missing=*/true);
        Var logits = model.candidate_logits(model.encode_contexts(batch), flat);
        const auto& l = logits->value.data;
        std::size_t offset = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const std::size_t n = sets[i].candidates.size();
            const int t = flat.target_positions[i];
            if (t < 0) {
                ranks.push_back(kMissRank);
            } else {
                const auto ti = static_cast<std::size_t>(t);
                Rank r = 1;
                for (std::size_t j = offset; j < offset + n; ++j) {
                    if (l[j] > l[ti] || (l[j] == l[ti] && flat.flat[j] < flat.flat[ti])) ++r;
                }
                ranks.push_back(r);
            }
            offset += n;
        }
    }
    return ranks;
}

ModelSize model_size(const CompletionModel& model) {
    const std::size_t n = model.parameter_count();
    return {n, 4 * n};
}

LatencyStats measure_latency(const CompletionModel& model, std::span<const CompletionInstance> instances,
                             std::size_t repetitions, std::size_t warmup) {
    if (repetitions == 0) throw std::invalid_argument("measure_latency: repetitions must be positive");
    if (instances.empty()) throw std::invalid_argument("measure_latency: no instances");
    std::vector<double> samples;
    samples.reserve(repetitions);
    volatile double sink = 0;
    for (std::size_t i = 0; i < warmup + repetitions; ++i) {
        const auto& inst = instances[i % instances.size()];
        const CandidateSet candidates = evaluation_candidates(model, inst);
        const auto start = std::chrono::steady_clock::now();
        const auto ranked = model.rank(inst, candidates.candidates);
        const auto stop = std::chrono::steady_clock::now();
        sink = sink + ranked.front().probability;
        if (i >= warmup) samples.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
    return summarize_latency(std::move(samples));
}

EvalReport evaluate(const CompletionModel& model, std::span<const CompletionInstance> instances,
                    const EvalOptions& options) {
    if (instances.empty()) throw std::invalid_argument("evaluate: no instances");
    EvalReport report = report_from_ranks(rank_instances(model, instances, options.batch_size));
    const ModelSize size = model_size(model);
    report.parameter_count = size.parameters;
    report.size_bytes = size.bytes;
    if (options.latency_repetitions > 0) {
        report.latency = measure_latency(model, instances, options.latency_repetitions, options.latency_warmup);
    }
    report.config = {{"descriptor", model.config().describe()}, {"model", to_json(model.config())}};
    return report;
}

std::vector<Rank> baseline_ranks(const PopularityBaseline& baseline, std::span<const CompletionInstance> instances) {
    std::vector<Rank> ranks;
    for (const auto& inst : instances) ranks.push_back(rank_of(baseline.rank(inst.candidates), inst.target));
    return ranks;
}

std::vector<Rank> baseline_ranks(RandomBaseline& baseline, std::span<const CompletionInstance> instances) {
    std::vector<Rank> ranks;
    for (const auto& inst : instances) ranks.push_back(rank_of(baseline.rank(inst.candidates), inst.target));
    return ranks;
}

DatasetSplit holdout_library(const DatasetSplit& split, const std::string& library) {
    auto keep = [&](const std::vector<CompletionInstance>& from, bool inside) {
        std::vector<CompletionInstance> out;
        for (const auto& inst : from) {
            if ((inst.library == library) == inside) out.push_back(inst);
        }
        return out;
    };
    DatasetSplit out;
    out.train = keep(split.train, false);
    out.valid = keep(split.valid, false);
    out.test = keep(split.test, true);
    return out;
}

EvalReport generalization_eval(const CompletionModel& model, std::span<const CompletionInstance> test,
                               const std::string& library, std::uint64_t seed, const EvalOptions& options) {
    std::vector<CompletionInstance> subset;
    for (const auto& inst : test) {
        if (inst.library == library) subset.push_back(inst);
    }
    if (subset.empty()) throw std::invalid_argument("generalization_eval: no test instance of library '" + library + "'");
    EvalReport report = evaluate(model, subset, options);
    RandomBaseline random(seed);
    const auto random_ranks = baseline_ranks(random, subset);
    double expected = 0;
    for (const auto& inst : subset) expected += random_expected_mrr(inst.candidates.size());
    report.extra["library"] = library;
    report.extra["random_mrr"] = mean_reciprocal_rank(random_ranks);
    report.extra["random_recall_at_5"] = recall_at_k(random_ranks, 5);
    report.extra["random_expected_mrr"] = expected / static_cast<double>(subset.size());
    return report;
}

std::vector<SweepResult> run_sweep(std::span<const TrainConfig> configs, const DatasetSplit& split,
                                   const EvalOptions& options, std::ostream* jsonl) {
    if (split.test.empty()) throw std::invalid_argument("sweep: empty test split");
    std::vector<SweepResult> out;
    for (const auto& config : configs) {
        TrainResult trained = train(config, split);
        SweepResult row{config, evaluate(trained.model, split.test, options)};
        row.report.config["train"] = to_json(config);
        row.report.extra["best_epoch"] = trained.best_epoch;
        row.report.extra["best_valid_mrr"] = trained.best_valid_mrr;
        if (jsonl) *jsonl << to_json(row.report).dump() << '\n' << std::flush;
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<TrainConfig> sample_sweep(const TrainConfig& base, std::size_t count, std::uint64_t seed) {
    static constexpr std::size_t kDims[] = {16, 32, 64};
    static constexpr std::size_t kVocab[] = {1000, 5000, 10000};
    static constexpr TokenEncoderKind kTokens[] = {TokenEncoderKind::token, TokenEncoderKind::subtoken,
                                                   TokenEncoderKind::bpe, TokenEncoderKind::chars};
    static constexpr ContextEncoderKind kContexts[] = {ContextEncoderKind::gru, ContextEncoderKind::bigru,
                                                       ContextEncoderKind::cnn, ContextEncoderKind::transformer};
    std::mt19937_64 rng(seed);
    auto pick = [&](const auto& options) { return options[rng() % std::size(options)]; };
    std::vector<TrainConfig> out;
    for (std::size_t i = 0; i < count; ++i) {
        TrainConfig c = base;
        c.model.token.dim = pick(kDims);
        c.model.context.hidden = pick(kDims);
        c.model.token.vocab_size = pick(kVocab);
        c.model.token.kind = pick(kTokens);
        c.model.context.kind = pick(kContexts);
        c.seed = rng();
        out.push_back(c);
    }
    return out;
}

ParetoPoint pareto_point(const EvalReport& report) {
    return {report.recall_at_5, static_cast<double>(report.size_bytes), report.latency.mean_ms, report.config};
}

std::string pareto_csv(std::span<const ParetoPoint> points) {
    std::ostringstream out;
    out << "recall5,size_bytes,latency_ms,config\n";
    for (const auto& p : points) {
        std::string descriptor = p.config.value("descriptor", p.config.dump());
        std::string quoted = "\"";
        for (char ch : descriptor) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        quoted += '"';
        char buf[96];
        std::snprintf(buf, sizeof buf, "%.6f,%.0f,%.4f,", p.recall_at_5, p.size_bytes, p.latency_ms);
        out << buf << quoted << '\n';
    }
    return out.str();
}

CODECOMP_NN_END
