#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "codecomp/metrics.hpp"
#include "codecomp/synth.hpp"
#include "codecomp/trainer.hpp"

using namespace codecomp;

namespace {

TrainConfig small_train(ProviderKind provider = ProviderKind::stan) {
    TrainConfig t;
    t.model.token.kind = TokenEncoderKind::subtoken;
    t.model.token.dim = 16;
    t.model.context.kind = ContextEncoderKind::gru;
    t.model.context.hidden = 16;
    t.model.provider = provider;
    t.batch_size = 32;
    t.learning_rate = 3e-3;
    t.max_epochs = 3;
    t.patience = 2;
    return t;
}

DatasetSplit small_split(std::size_t n, double subtoken, double sequential, std::uint64_t seed = 1) {
    SynthSpec spec;
    spec.instances = n;
    spec.receiver_types = 6;
    spec.methods_per_type = 8;
    spec.subtoken_signal = subtoken;
    spec.sequential_signal = sequential;
    spec.seed = seed;
    return split(synth_generate(spec), {0.6, 0.2, 0.2}, file_group, seed);
}

double stan_mrr(const CompletionModel& model, const std::vector<CompletionInstance>& data) {
    std::vector<Rank> ranks;
    for (const auto& inst : data) {
        const auto ranked = model.rank(inst, inst.candidates);
        std::vector<std::string> names;
        for (const auto& s : ranked) names.push_back(s.candidate);
        ranks.push_back(rank_of(names, inst.target));
    }
    return mean_reciprocal_rank(ranks);
}

}  // namespace

TEST_CASE("early stopping trace with patience 2") {
    EarlyStopping stop(2);
    const double trace[] = {0.5, 0.6, 0.59, 0.58};
    std::size_t epochs = 0;
    for (double m : trace) {
        stop.observe(m);
        ++epochs;
        if (stop.should_stop()) break;
    }
    CHECK(epochs == 4);
    CHECK(stop.best_epoch() == 2);
    CHECK(stop.best() == 0.6);
}

TEST_CASE("early stopping treats ties as no improvement") {
    EarlyStopping stop(1);
    CHECK(stop.observe(0.5));
    CHECK_FALSE(stop.observe(0.5));
    CHECK(stop.should_stop());
    CHECK(stop.best_epoch() == 1);
}

TEST_CASE("the first Adam step moves each coordinate by the learning rate") {
    auto x = parameter(Tensor::vector({1, -2}));
    Adam adam({{"x", x}}, 0.1);
    backward(sum_all(mul(x, x)));
    adam.step();
    CHECK(x->value.data[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(x->value.data[1] == doctest::Approx(-1.9).epsilon(1e-6));
    CHECK(adam.steps() == 1);
}

TEST_CASE("Adam minimizes a quadratic") {
    auto x = parameter(Tensor::vector({3, -4, 0.5}));
    Adam adam({{"x", x}}, 0.05);
    for (int i = 0; i < 2000; ++i) {
        backward(sum_all(mul(x, x)));
        adam.step();
    }
    for (auto v : x->value.data) CHECK(std::abs(v) < 1e-2);
}

TEST_CASE("global norm clipping rescales every gradient by the same factor") {
    auto a = parameter(Tensor::vector({0}));
    auto b = parameter(Tensor::vector({0}));
    a->grad = Tensor::vector({3});
    b->grad = Tensor::vector({4});
    const NamedParameters params = {{"a", a}, {"b", b}};
    CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(5));
    CHECK(a->grad.data[0] == doctest::Approx(0.6));
    CHECK(b->grad.data[0] == doctest::Approx(0.8));
    CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(1));
    CHECK(a->grad.data[0] == doctest::Approx(0.6));
}

TEST_CASE("configuration validation") {
    auto t = small_train(ProviderKind::inbatch);
    t.batch_size = 1;
    CHECK_THROWS(t.validate());
    t = small_train();
    t.learning_rate = 0;
    CHECK_THROWS(t.validate());
    t = small_train();
    t.model.context.kind = ContextEncoderKind::bigru;
    t.model.context.hidden = 7;
    CHECK_THROWS(t.validate());
    CHECK_NOTHROW(small_train().validate());
    const auto back = train_config_from_json(to_json(small_train()));
    CHECK(to_json(back) == to_json(small_train()));
}

TEST_CASE("training on an empty split is an error") {
    DatasetSplit s = small_split(200, 0.9, 0.9);
    s.train.clear();
    CHECK_THROWS(train(small_train(), s));
}

TEST_CASE("training is seed-deterministic") {
    const auto s = small_split(300, 0.9, 0.9);
    auto config = small_train();
    config.max_epochs = 2;
    const auto a = train(config, s);
    const auto b = train(config, s);
    const auto pa = a.model.parameters(), pb = b.model.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second->value.data == pb[i].second->value.data);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].train_loss == b.history[i].train_loss);
}

TEST_CASE("training beats popularity on a corpus with strong signals and restores the best epoch") {
    const auto s = small_split(2000, 0.9, 0.9, 3);
    auto config = small_train();
    config.max_epochs = 6;
    std::vector<EpochRecord> logged;
    const auto result = train(config, s, [&](const EpochRecord& r) { logged.push_back(r); });
    CHECK(logged.size() == result.history.size());
    REQUIRE(result.best_epoch >= 1);
    double best = 0;
    for (const auto& r : result.history) best = std::max(best, r.valid_mrr);
    CHECK(result.best_valid_mrr == best);
    CHECK(result.history[result.best_epoch - 1].valid_mrr == best);
    CHECK(stan_mrr(result.model, s.valid) == doctest::Approx(result.best_valid_mrr).epsilon(1e-9));

    PopularityBaseline pop(s.train);
    std::vector<Rank> ranks;
    for (const auto& inst : s.valid) ranks.push_back(rank_of(pop.rank(inst.candidates), inst.target));
    const double popularity = mean_reciprocal_rank(ranks);
    INFO("model " << result.best_valid_mrr << " popularity " << popularity);
    CHECK(result.best_valid_mrr > popularity);
}

TEST_CASE("Vocab training drops instances whose target is outside the vocabulary") {
    const auto s = small_split(300, 0.9, 0.9);
    auto config = small_train(ProviderKind::vocab);
    config.model.vocab_provider_size = 5;
    config.max_epochs = 1;
    const auto result = train(config, s);
    std::size_t outside = 0;
    const auto& members = result.model.vocab_provider().members();
    for (const auto& inst : s.train)
        outside += std::find(members.begin(), members.end(), inst.target) == members.end();
    CHECK(result.dropped_instances == outside);
    CHECK(outside > 0);
}

TEST_CASE("in-batch training runs and records history") {
    const auto s = small_split(300, 0.9, 0.9);
    auto config = small_train(ProviderKind::inbatch);
    config.max_epochs = 2;
    const auto result = train(config, s);
    CHECK(result.history.size() == 2);
    for (const auto& r : result.history) CHECK(std::isfinite(r.train_loss));
}

TEST_CASE("epoch log line format") {
    const std::string line = format_epoch({3, 0.412345, 0.812345, 12.34});
    CHECK(line.rfind("epoch 3 train_loss 0.412345 valid_mrr 0.812345 seconds", 0) == 0);
}
