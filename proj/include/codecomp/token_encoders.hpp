#pragma once

#include <cstdint>
#include <list>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "codecomp/autodiff.hpp"
#include "codecomp/init.hpp"
#include "codecomp/tokenizers.hpp"

CODECOMP_NN_BEGIN

enum class TokenEncoderKind { token, subtoken, bpe, chars, hashed_subtoken };

std::string to_string(TokenEncoderKind kind);
TokenEncoderKind token_encoder_kind_from_string(std::string_view name);

struct TokenEncoderConfig {
    TokenEncoderKind kind = TokenEncoderKind::subtoken;
    std::size_t dim = 64;
    std::size_t vocab_size = 10000;      // |V_t| or |V_s| (UNK included)
    std::size_t bpe_merges = 1000;
    std::size_t hash_modulus = 2500;
    std::size_t alphabet_size = 100;
    std::size_t char_filters = 64;       // per kernel bank
    std::size_t max_units = 16;          // subword units kept per token
    real init_bound = real(0.05);
};

nlohmann::json to_json(const TokenEncoderConfig& config);
TokenEncoderConfig token_encoder_config_from_json(const nlohmann::json& j);

using NamedParameters = std::vector<std::pair<std::string, Var>>;

/// Maps token strings to D-dimensional encodings. Lookup kinds embed their
/// units and take the elementwise max; the character kind runs two parallel
/// convolution banks (widths 3 and 5) with max-pooling and a projection.
class TokenEncoder {
public:
    static constexpr std::size_t kCharKernels[2] = {3, 5};

    TokenEncoder() = default;

    /// Builds tokenizer artifacts from `token_counts` and initializes parameters.
    static TokenEncoder build(const TokenEncoderConfig& config, const UnitCounts& token_counts,
                              std::uint64_t seed);

    /// Encodings of `tokens`, one row each: [n × D]. Repeated tokens are
    /// encoded once and gathered.
    Var encode(std::span<const std::string> tokens) const;

    /// Gradient-free encoding of a single token.
    std::vector<real> encode_one(std::string_view token) const;

    /// Embedding ids of the units of `token` (lookup kinds only).
    std::vector<int> unit_ids(std::string_view token) const;

    std::size_t dim() const { return config_.dim; }
    TokenEncoderKind kind() const { return config_.kind; }
    const TokenEncoderConfig& config() const { return config_; }
    const Vocabulary& vocabulary() const { return vocab_; }
    const BpeModel& bpe() const { return bpe_; }
    const CharAlphabet& alphabet() const { return alphabet_; }
    HashingScheme hashing() const { return {config_.hash_modulus}; }

    NamedParameters parameters() const;
    const Var& embedding() const { return embedding_; }

    /// Tokenizer artifacts (vocabulary / merges / alphabet) as JSON.
    nlohmann::json artifacts() const;
    /// Skeleton with artifacts restored and freshly allocated parameters.
    static TokenEncoder from_artifacts(const TokenEncoderConfig& config, const nlohmann::json& artifacts);

private:
    void allocate(ParamInit& init);
    Var encode_lookup(std::span<const std::string> unique) const;
    Var encode_chars(std::span<const std::string> unique) const;

    TokenEncoderConfig config_;
    Vocabulary vocab_;
    BpeModel bpe_;
    CharAlphabet alphabet_;

    Var embedding_;
    Var conv_weight_[2];
    Var conv_bias_[2];
    Var proj_weight_;
    Var proj_bias_;

    struct UnitCache {
        std::mutex mutex;
        std::unordered_map<std::string, std::vector<int>> ids;
    };
    std::shared_ptr<UnitCache> unit_cache_ = std::make_shared<UnitCache>();
};

/// Appends the receiver bit: [encoding ; is_receiver].
std::vector<real> annotate(std::span<const real> encoding, bool is_receiver);
/// Graph form over rows: [n × D] → [n × (D+1)].
Var annotate_rows(const Var& encodings, const std::vector<bool>& is_receiver);

/// Bounded least-recently-used memo of token encodings; safe for concurrent use.
class EncodingCache {
public:
    explicit EncodingCache(std::size_t capacity = 4096) : capacity_(capacity) {}

    /// Cached encoding of `token`, computing it on a miss.
    std::vector<real> get(const TokenEncoder& encoder, const std::string& token);
    void clear();
    std::size_t size() const;
    std::size_t hits() const { return hits_; }
    std::size_t misses() const { return misses_; }

private:
    using Entry = std::pair<std::string, std::vector<real>>;
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::list<Entry> order_;  // front = most recent
    std::unordered_map<std::string, std::list<Entry>::iterator> index_;
    std::size_t hits_ = 0;
    std::size_t misses_ = 0;
};

CODECOMP_NN_END
