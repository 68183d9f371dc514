#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "codecomp/context_encoders.hpp"
#include "codecomp/corpus.hpp"
#include "codecomp/providers.hpp"
#include "codecomp/token_encoders.hpp"

CODECOMP_NN_BEGIN

enum class ProviderKind { vocab, stan, inbatch };

std::string to_string(ProviderKind kind);
ProviderKind provider_kind_from_string(std::string_view name);

struct ModelConfig {
    TokenEncoderConfig token;
    ContextEncoderConfig context;
    ProviderKind provider = ProviderKind::stan;
    bool annotate = false;               // receiver bit on context token encodings
    std::size_t context_size = kDefaultContextSize;
    std::size_t vocab_provider_size = 0;  // Vocab provider: explicit size, or
    double vocab_provider_coverage = 0.5; // smallest size covering this share of targets

    /// Short descriptor such as "<subtoken, gru+, stan>".
    std::string describe() const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct Suggestion {
    std::string candidate;
    double probability = 0;
};

/// Candidates by descending probability; equal probabilities in lexicographic order.
using RankedSuggestions = std::vector<Suggestion>;

/// Candidate sets of a batch laid end to end with the owning instance of
/// each slot; no padding.
struct SegmentedCandidateBatch {
    std::vector<std::string> flat;
    SegmentIndex origin;
    std::vector<int> target_positions;

    /// With `allow_missing`, an absent target gets position -1 instead of
    /// an error (evaluation under the Vocab provider).
    static SegmentedCandidateBatch build(std::span<const CompletionInstance> batch,
                                         std::span<const CandidateSet> sets, bool allow_missing = false);
};

/// Token encoder ⊗ context encoder ⊗ Dot ranker, with the token encoder
/// shared between context tokens and candidates.
class CompletionModel {
public:
    CompletionModel() = default;

    /// Builds tokenizer artifacts and the Vocab provider (if any) from
    /// `train`, then initializes every parameter from `seed`.
    static CompletionModel build(const ModelConfig& config, std::span<const CompletionInstance> train,
                                 std::uint64_t seed);

    /// Context encodings c_cx of a batch: [B × H].
    Var encode_contexts(std::span<const CompletionInstance> batch) const;

    /// Candidate sets the configured provider yields for a batch.
    std::vector<CandidateSet> candidate_sets(std::span<const CompletionInstance> batch) const;

    /// Logits of every flat candidate: (W c_cx)ᵀ E(s) + b_s.
    Var candidate_logits(const Var& contexts, const SegmentedCandidateBatch& flat) const;

    /// Mean negative log-probability of the targets under per-instance softmax.
    Var batch_loss(std::span<const CompletionInstance> batch, std::span<const CandidateSet> sets) const;
    Var batch_loss(std::span<const CompletionInstance> batch) const;

    /// Ranked candidates for a given context encoding.
    RankedSuggestions score(std::span<const real> context_encoding,
                            std::span<const std::string> candidates) const;

    /// Full unbatched inference for one instance.
    RankedSuggestions rank(const CompletionInstance& instance, std::span<const std::string> candidates) const;
    /// Same, with context token encodings served from `cache`.
    RankedSuggestions rank(const CompletionInstance& instance, std::span<const std::string> candidates,
                           EncodingCache& cache) const;

    /// Context encoding of one instance (gradient-free).
    std::vector<real> context_encoding(const CompletionInstance& instance) const;
    std::vector<real> context_encoding(const CompletionInstance& instance, EncodingCache& cache) const;

    const ModelConfig& config() const { return config_; }
    const TokenEncoder& token_encoder() const { return token_; }
    const ContextEncoder& context_encoder() const { return context_; }
    const VocabProvider& vocab_provider() const { return vocab_; }
    const Var& projection() const { return projection_; }
    const Var& bias() const { return bias_; }

    NamedParameters parameters() const;
    std::size_t parameter_count() const;

    /// Skeleton (artifacts + zero-initialized parameters) for deserialization.
    static CompletionModel from_artifacts(const ModelConfig& config, const nlohmann::json& artifacts);
    nlohmann::json artifacts() const;

private:
    Var encode_context_rows(std::span<const CompletionInstance> batch, std::vector<std::size_t>& lengths) const;
    void from_members();
    RankedSuggestions score_logits(std::span<const real> query, std::span<const std::string> candidates) const;

    ModelConfig config_;
    TokenEncoder token_;
    ContextEncoder context_;
    VocabProvider vocab_;
    std::shared_ptr<const std::unordered_map<std::string, int>> vocab_index_;  // candidate → bias slot
    Var projection_;  // W: [H × D]
    Var bias_;        // b: [|vocab|], Vocab provider only
};

/// Target counts used to build token-level artifacts: every context token
/// and candidate string of `train`.
UnitCounts corpus_token_counts(std::span<const CompletionInstance> train);

/// Orders (candidate, probability) pairs: descending probability, then name.
RankedSuggestions sort_suggestions(std::vector<Suggestion> suggestions);

CODECOMP_NN_END
