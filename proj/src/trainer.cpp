#include "codecomp/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <unordered_set>
#include <stdexcept>

#include "codecomp/evaluation.hpp"

CODECOMP_NN_BEGIN

void TrainConfig::validate() const {
    if (batch_size == 0 || max_epochs == 0 || !(learning_rate > 0) || !(clip_norm > 0)) {
        throw std::invalid_argument("train config: batch size, epochs, learning rate and clip norm must be positive");
    }
    if (model.context_size == 0) throw std::invalid_argument("train config: context size must be positive");
    if (model.provider == ProviderKind::inbatch && batch_size < 2) {
        throw std::invalid_argument("train config: in-batch distractors need batches of at least 2");
    }
    ContextEncoderConfig context = model.context;
    context.input_dim = model.token.dim + (model.annotate ? 1 : 0);
    context.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"model", to_json(c.model)},         {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
            {"max_epochs", c.max_epochs},        {"patience", c.patience},     {"clip_norm", c.clip_norm},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.model = model_config_from_json(j.at("model"));
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.seed = j.value("seed", c.seed);
    return c;
}

Adam::Adam(NamedParameters params, double learning_rate, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
    for (const auto& [_, p] : params_) {
        m_.emplace_back(p->value.size(), 0.0);
        v_.emplace_back(p->value.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& value = params_[k].second->value.data;
        const auto& grad = params_[k].second->grad.data;
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = grad[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            value[i] -= static_cast<real>(lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_));
        }
    }
}

double clip_grad_norm(const NamedParameters& params, double max_norm) {
    double sq = 0;
    for (const auto& [_, p] : params) {
        for (real g : p->grad.data) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const real factor = static_cast<real>(max_norm / norm);
        for (const auto& [_, p] : params) {
            for (real& g : p->grad.data) g *= factor;
        }
    }
    return norm;
}

bool EarlyStopping::observe(double metric) {
    ++epoch_;
    if (best_epoch_ == 0 || metric > best_) {
        best_ = metric;
        best_epoch_ = epoch_;
        since_best_ = 0;
        return true;
    }
    ++since_best_;
    return false;
}

std::string format_epoch(const EpochRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %zu train_loss %.6f valid_mrr %.6f seconds %.1f", r.epoch, r.train_loss,
                  r.valid_mrr, r.seconds);
    return buf;
}

namespace {

std::vector<Tensor> snapshot(const NamedParameters& params) {
    std::vector<Tensor> out;
    for (const auto& [_, p] : params) out.push_back(p->value);
    return out;
}

void restore(const NamedParameters& params, const std::vector<Tensor>& values) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].second->value = values[i];
}

// Shuffled minibatches of indices. A trailing singleton joins the previous
// batch so that in-batch distractors always exist.
std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
    }
    if (out.size() > 1 && out.back().size() == 1) {
        out[out.size() - 2].push_back(out.back().front());
        out.pop_back();
    }
    return out;
}

}  // namespace

TrainResult train(const TrainConfig& config, const DatasetSplit& split, const EpochCallback& on_epoch) {
    config.validate();
    if (split.train.empty()) throw std::invalid_argument("train: empty training split");

    std::mt19937_64 rng(config.seed);
    TrainResult result;
    result.model = CompletionModel::build(config.model, split.train, rng());

    std::vector<CompletionInstance> train_set;
    if (config.model.provider == ProviderKind::vocab) {
        const auto& members = result.model.vocab_provider().members();
        std::unordered_set<std::string> known(members.begin(), members.end());
        for (const auto& inst : split.train) {
            if (known.count(inst.target)) train_set.push_back(inst);
        }
        result.dropped_instances = split.train.size() - train_set.size();
        if (train_set.empty()) throw std::invalid_argument("train: no training target is in the Vocab provider");
    } else {
        train_set = split.train;
    }
    if (config.model.provider == ProviderKind::inbatch && train_set.size() < 2) {
        throw std::invalid_argument("train: in-batch distractors need at least 2 training instances");
    }

    const NamedParameters params = result.model.parameters();
    Adam optimizer(params, config.learning_rate);
    EarlyStopping stopper(config.patience);
    std::vector<Tensor> best = snapshot(params);
    std::vector<CompletionInstance> batch;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        double loss_sum = 0;
        std::size_t seen = 0;
        for (const auto& indices : minibatches(train_set.size(), config.batch_size, rng)) {
            batch.clear();
            for (std::size_t i : indices) batch.push_back(train_set[i]);
            Var loss = result.model.batch_loss(batch);
            backward(loss);
            clip_grad_norm(params, config.clip_norm);
            optimizer.step();
            loss_sum += static_cast<double>(loss->value.data[0]) * static_cast<double>(batch.size());
            seen += batch.size();
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(seen);
        if (!split.valid.empty()) record.valid_mrr = mean_reciprocal_rank(rank_instances(result.model, split.valid));
        record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.history.push_back(record);
        if (on_epoch) on_epoch(record);

        if (split.valid.empty()) {
            best = snapshot(params);
            result.best_epoch = epoch;
            continue;
        }
        if (stopper.observe(record.valid_mrr)) best = snapshot(params);
        if (stopper.should_stop()) break;
    }
    if (!split.valid.empty()) {
        result.best_epoch = stopper.best_epoch();
        result.best_valid_mrr = stopper.best();
    }
    restore(params, best);
    return result;
}

CODECOMP_NN_END
