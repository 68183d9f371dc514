#include "codecomp/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

CODECOMP_NN_BEGIN

std::string to_string(ProviderKind kind) {
    switch (kind) {
        case ProviderKind::vocab: return "vocab";
        case ProviderKind::stan: return "stan";
        case ProviderKind::inbatch: return "inbatch";
    }
    return "?";
}

ProviderKind provider_kind_from_string(std::string_view name) {
    if (name == "vocab") return ProviderKind::vocab;
    if (name == "stan") return ProviderKind::stan;
    if (name == "inbatch") return ProviderKind::inbatch;
    throw std::invalid_argument("unknown candidate provider '" + std::string(name) + "'");
}

std::string ModelConfig::describe() const {
    return "<" + to_string(token.kind) + ", " + to_string(context.kind) + (annotate ? "+receiver" : "") +
           ", " + to_string(provider) + ">";
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"token", to_json(c.token)},
            {"context", to_json(c.context)},
            {"provider", to_string(c.provider)},
            {"annotate", c.annotate},
            {"context_size", c.context_size},
            {"vocab_provider_size", c.vocab_provider_size},
            {"vocab_provider_coverage", c.vocab_provider_coverage}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.token = token_encoder_config_from_json(j.at("token"));
    c.context = context_encoder_config_from_json(j.at("context"));
    c.provider = provider_kind_from_string(j.at("provider").get<std::string>());
    c.annotate = j.value("annotate", false);
    c.context_size = j.value("context_size", c.context_size);
    c.vocab_provider_size = j.value("vocab_provider_size", c.vocab_provider_size);
    c.vocab_provider_coverage = j.value("vocab_provider_coverage", c.vocab_provider_coverage);
    return c;
}

UnitCounts corpus_token_counts(std::span<const CompletionInstance> train) {
    UnitCounts counts;
    for (const auto& inst : train) {
        for (const auto& t : inst.context_tokens) ++counts[t];
        for (const auto& c : inst.candidates) ++counts[c];
    }
    return counts;
}

RankedSuggestions sort_suggestions(std::vector<Suggestion> s) {
    std::sort(s.begin(), s.end(), [](const Suggestion& a, const Suggestion& b) {
        if (a.probability != b.probability) return a.probability > b.probability;
        return a.candidate < b.candidate;
    });
    return s;
}

SegmentedCandidateBatch SegmentedCandidateBatch::build(std::span<const CompletionInstance> batch,
                                                       std::span<const CandidateSet> sets,
                                                       bool allow_missing) {
    if (batch.size() != sets.size()) throw std::invalid_argument("candidate batch: one set per instance required");
    SegmentedCandidateBatch out;
    std::vector<int> origin;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& cands = sets[i].candidates;
        if (cands.empty()) throw std::invalid_argument("candidate batch: empty candidate set");
        int target = -1;
        for (const auto& c : cands) {
            if (c == batch[i].target) target = static_cast<int>(out.flat.size());
            out.flat.push_back(c);
            origin.push_back(static_cast<int>(i));
        }
        if (target < 0 && !allow_missing) {
            throw std::invalid_argument("candidate batch: target '" + batch[i].target + "' of '" +
                                        batch[i].id + "' is not among its candidates");
        }
        out.target_positions.push_back(target);
    }
    out.origin = SegmentIndex(std::move(origin), static_cast<int>(batch.size()));
    return out;
}

CompletionModel CompletionModel::build(const ModelConfig& config, std::span<const CompletionInstance> train,
                                       std::uint64_t seed) {
    if (train.empty()) throw std::invalid_argument("model: empty training data");
    CompletionModel model;
    model.config_ = config;
    model.config_.context.input_dim = config.token.dim + (config.annotate ? 1 : 0);
    ParamInit seeds(seed);
    model.token_ = TokenEncoder::build(config.token, corpus_token_counts(train), seeds.next_seed());
    model.context_ = ContextEncoder::create(model.config_.context, seeds.next_seed());
    ParamInit init(seeds.next_seed());
    const std::size_t h = model.config_.context.hidden, d = config.token.dim;
    model.projection_ = parameter(init.uniform({h, d}, real(1) / std::sqrt(static_cast<real>(h))));
    if (config.provider == ProviderKind::vocab) {
        model.vocab_ = config.vocab_provider_size > 0
                           ? VocabProvider::build(train, config.vocab_provider_size)
                           : VocabProvider::build_for_coverage(train, config.vocab_provider_coverage);
    }
    model.from_members();
    return model;
}

void CompletionModel::from_members() {
    if (config_.provider != ProviderKind::vocab) {
        bias_.reset();
        vocab_index_.reset();
        return;
    }
    auto index = std::make_shared<std::unordered_map<std::string, int>>();
    for (std::size_t i = 0; i < vocab_.members().size(); ++i) index->emplace(vocab_.members()[i], static_cast<int>(i));
    vocab_index_ = std::move(index);
    bias_ = parameter(Tensor({std::max<std::size_t>(vocab_.size(), 1)}));
}

NamedParameters CompletionModel::parameters() const {
    NamedParameters out = token_.parameters();
    for (auto& p : context_.parameters()) out.push_back(std::move(p));
    out.emplace_back("ranker.projection", projection_);
    if (bias_) out.emplace_back("ranker.bias", bias_);
    return out;
}

std::size_t CompletionModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : parameters()) n += p->value.size();
    return n;
}

Var CompletionModel::encode_context_rows(std::span<const CompletionInstance> batch,
                                         std::vector<std::size_t>& lengths) const {
    std::vector<std::string> flat;
    std::vector<bool> receiver;
    lengths.clear();
    for (const auto& inst : batch) {
        if (inst.context_tokens.empty()) {
            throw std::invalid_argument("model: instance '" + inst.id + "' has an empty context");
        }
        const std::size_t keep = std::min(inst.context_tokens.size(), config_.context_size);
        const std::size_t drop = inst.context_tokens.size() - keep;
        std::vector<bool> bits(inst.context_tokens.size(), false);
        for (int idx : inst.receiver_mask) bits.at(static_cast<std::size_t>(idx)) = true;
        for (std::size_t i = drop; i < inst.context_tokens.size(); ++i) {
            flat.push_back(inst.context_tokens[i]);
            receiver.push_back(bits[i]);
        }
        lengths.push_back(keep);
    }
    Var rows = token_.encode(flat);
    return config_.annotate ? annotate_rows(rows, receiver) : rows;
}

Var CompletionModel::encode_contexts(std::span<const CompletionInstance> batch) const {
    std::vector<std::size_t> lengths;
    Var rows = encode_context_rows(batch, lengths);
    return context_.encode(rows, lengths);
}

std::vector<CandidateSet> CompletionModel::candidate_sets(std::span<const CompletionInstance> batch) const {
    switch (config_.provider) {
        case ProviderKind::vocab: {
            std::vector<CandidateSet> out;
            for (const auto& inst : batch) out.push_back(vocab_.provide(inst));
            return out;
        }
        case ProviderKind::stan: {
            std::vector<CandidateSet> out;
            for (const auto& inst : batch) out.push_back(provide_stan(inst));
            return out;
        }
        case ProviderKind::inbatch: return provide_inbatch_distractors(batch);
    }
    throw std::logic_error("model: unknown provider");
}

Var CompletionModel::candidate_logits(const Var& contexts, const SegmentedCandidateBatch& flat) const {
    Var queries = matmul(contexts, projection_);  // [B × D]
    Var expanded = gather_rows(queries, flat.origin.ids);
    Var encoded = token_.encode(flat.flat);
    Var logits = row_sum(mul(expanded, encoded));
    if (!bias_) return logits;
    std::vector<int> slots;
    for (const auto& c : flat.flat) {
        auto it = vocab_index_->find(c);
        slots.push_back(it == vocab_index_->end() ? -1 : it->second);
    }
    Var b = reshape(gather_rows(reshape(bias_, {bias_->value.size(), 1}), slots), {slots.size()});
    return add(logits, b);
}

Var CompletionModel::batch_loss(std::span<const CompletionInstance> batch,
                                std::span<const CandidateSet> sets) const {
    auto flat = SegmentedCandidateBatch::build(batch, sets);
    Var logits = candidate_logits(encode_contexts(batch), flat);
    Var log_probs = segment_log_softmax(logits, flat.origin);
    return scale(mean_all(pick(log_probs, flat.target_positions)), real(-1));
}

Var CompletionModel::batch_loss(std::span<const CompletionInstance> batch) const {
    auto sets = candidate_sets(batch);
    return batch_loss(batch, sets);
}

RankedSuggestions CompletionModel::score_logits(std::span<const real> query,
                                                std::span<const std::string> candidates) const {
    if (candidates.empty()) throw std::invalid_argument("score: empty candidate list");
    NoGradGuard guard;
    Var encoded = token_.encode(candidates);
    const std::size_t d = token_.dim();
    std::vector<double> logits(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        real s = 0;
        for (std::size_t j = 0; j < d; ++j) s += query[j] * encoded->value.data[i * d + j];
        if (bias_) {
            auto it = vocab_index_->find(candidates[i]);
            if (it != vocab_index_->end()) s += bias_->value.data[static_cast<std::size_t>(it->second)];
        }
        logits[i] = static_cast<double>(s);
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (auto& l : logits) z += (l = std::exp(l - mx));
    std::vector<Suggestion> out;
    for (std::size_t i = 0; i < candidates.size(); ++i) out.push_back({candidates[i], logits[i] / z});
    return sort_suggestions(std::move(out));
}

RankedSuggestions CompletionModel::score(std::span<const real> c, std::span<const std::string> candidates) const {
    const std::size_t h = context_.hidden(), d = token_.dim();
    if (c.size() != h) throw ShapeError("score: context encoding has width " + std::to_string(c.size()));
    std::vector<real> query(d, real(0));
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < d; ++j) query[j] += c[i] * projection_->value.data[i * d + j];
    }
    return score_logits(query, candidates);
}

std::vector<real> CompletionModel::context_encoding(const CompletionInstance& instance) const {
    NoGradGuard guard;
    return encode_contexts(std::span<const CompletionInstance>(&instance, 1))->value.data;
}

std::vector<real> CompletionModel::context_encoding(const CompletionInstance& instance,
                                                    EncodingCache& cache) const {
    NoGradGuard guard;
    if (instance.context_tokens.empty()) {
        throw std::invalid_argument("model: instance '" + instance.id + "' has an empty context");
    }
    const std::size_t keep = std::min(instance.context_tokens.size(), config_.context_size);
    const std::size_t drop = instance.context_tokens.size() - keep;
    std::vector<bool> bits(instance.context_tokens.size(), false);
    for (int idx : instance.receiver_mask) bits.at(static_cast<std::size_t>(idx)) = true;
    const std::size_t width = config_.context.input_dim;
    Tensor rows({keep, width});
    for (std::size_t i = 0; i < keep; ++i) {
        auto enc = cache.get(token_, instance.context_tokens[drop + i]);
        if (config_.annotate) enc = annotate(enc, bits[drop + i]);
        std::copy(enc.begin(), enc.end(), rows.data.begin() + static_cast<std::ptrdiff_t>(i * width));
    }
    const std::size_t lengths[1] = {keep};
    return context_.encode(constant(std::move(rows)), lengths)->value.data;
}

RankedSuggestions CompletionModel::rank(const CompletionInstance& instance,
                                        std::span<const std::string> candidates) const {
    return score(context_encoding(instance), candidates);
}

RankedSuggestions CompletionModel::rank(const CompletionInstance& instance, std::span<const std::string> candidates,
                                        EncodingCache& cache) const {
    return score(context_encoding(instance, cache), candidates);
}

nlohmann::json CompletionModel::artifacts() const {
    return {{"token", token_.artifacts()}, {"vocab_provider", vocab_.members()}};
}

CompletionModel CompletionModel::from_artifacts(const ModelConfig& config, const nlohmann::json& artifacts) {
    CompletionModel model;
    model.config_ = config;
    model.token_ = TokenEncoder::from_artifacts(config.token, artifacts.at("token"));
    model.context_ = ContextEncoder::create(config.context, 0);
    model.projection_ = parameter(Tensor({config.context.hidden, config.token.dim}));
    model.vocab_ = VocabProvider(artifacts.value("vocab_provider", std::vector<std::string>{}));
    model.from_members();
    return model;
}

CODECOMP_NN_END
