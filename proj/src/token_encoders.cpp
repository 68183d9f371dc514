#include "codecomp/token_encoders.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

CODECOMP_NN_BEGIN

std::string to_string(TokenEncoderKind kind) {
    switch (kind) {
        case TokenEncoderKind::token: return "token";
        case TokenEncoderKind::subtoken: return "subtoken";
        case TokenEncoderKind::bpe: return "bpe";
        case TokenEncoderKind::chars: return "char";
        case TokenEncoderKind::hashed_subtoken: return "hashed-subtoken";
    }
    return "?";
}

TokenEncoderKind token_encoder_kind_from_string(std::string_view name) {
    if (name == "token") return TokenEncoderKind::token;
    if (name == "subtoken") return TokenEncoderKind::subtoken;
    if (name == "bpe") return TokenEncoderKind::bpe;
    if (name == "char") return TokenEncoderKind::chars;
    if (name == "hashed-subtoken") return TokenEncoderKind::hashed_subtoken;
    throw std::invalid_argument("unknown token encoder '" + std::string(name) + "'");
}

nlohmann::json to_json(const TokenEncoderConfig& c) {
    return {{"kind", to_string(c.kind)},     {"dim", c.dim},
            {"vocab_size", c.vocab_size},    {"bpe_merges", c.bpe_merges},
            {"hash_modulus", c.hash_modulus}, {"alphabet_size", c.alphabet_size},
            {"char_filters", c.char_filters}, {"max_units", c.max_units},
            {"init_bound", c.init_bound}};
}

TokenEncoderConfig token_encoder_config_from_json(const nlohmann::json& j) {
    TokenEncoderConfig c;
    c.kind = token_encoder_kind_from_string(j.at("kind").get<std::string>());
    c.dim = j.value("dim", c.dim);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.bpe_merges = j.value("bpe_merges", c.bpe_merges);
    c.hash_modulus = j.value("hash_modulus", c.hash_modulus);
    c.alphabet_size = j.value("alphabet_size", c.alphabet_size);
    c.char_filters = j.value("char_filters", c.char_filters);
    c.max_units = j.value("max_units", c.max_units);
    c.init_bound = j.value("init_bound", c.init_bound);
    return c;
}

namespace {

std::vector<std::string> capped(std::vector<std::string> units, std::size_t max_units) {
    if (units.size() > max_units) units.resize(max_units);
    return units;
}

}  // namespace

TokenEncoder TokenEncoder::build(const TokenEncoderConfig& config, const UnitCounts& token_counts,
                                 std::uint64_t seed) {
    if (config.dim == 0) throw std::invalid_argument("token encoder: dimension must be positive");
    TokenEncoder enc;
    enc.config_ = config;
    switch (config.kind) {
        case TokenEncoderKind::token:
            enc.vocab_ = Vocabulary::build(token_counts, config.vocab_size);
            break;
        case TokenEncoderKind::subtoken: {
            UnitCounts sub;
            for (const auto& [tok, n] : token_counts) {
                for (const auto& s : capped(split_subtokens(tok), config.max_units)) sub[s] += n;
            }
            enc.vocab_ = Vocabulary::build(sub, config.vocab_size);
            break;
        }
        case TokenEncoderKind::bpe: {
            enc.bpe_ = bpe_train(token_counts, config.bpe_merges);
            UnitCounts units;
            for (const auto& [tok, n] : token_counts) {
                for (const auto& u : capped(enc.bpe_.apply(tok), config.max_units)) units[u] += n;
            }
            enc.vocab_ = Vocabulary::build(units, config.vocab_size);
            break;
        }
        case TokenEncoderKind::chars:
            enc.alphabet_ = CharAlphabet::build(token_counts, config.alphabet_size);
            break;
        case TokenEncoderKind::hashed_subtoken:
            if (config.hash_modulus < 2) throw std::invalid_argument("token encoder: hash modulus must be ≥ 2");
            break;
    }
    ParamInit init(seed);
    enc.allocate(init);
    return enc;
}

void TokenEncoder::allocate(ParamInit& init) {
    const std::size_t d = config_.dim;
    switch (config_.kind) {
        case TokenEncoderKind::token:
        case TokenEncoderKind::subtoken:
        case TokenEncoderKind::bpe:
            embedding_ = parameter(init.uniform({vocab_.size(), d}, config_.init_bound));
            break;
        case TokenEncoderKind::hashed_subtoken:
            embedding_ = parameter(init.uniform({config_.hash_modulus, d}, config_.init_bound));
            break;
        case TokenEncoderKind::chars: {
            const std::size_t a = alphabet_.size();
            const std::size_t f = config_.char_filters;
            for (int bank = 0; bank < 2; ++bank) {
                const std::size_t fan_in = kCharKernels[bank] * a;
                const real bound = real(1) / std::sqrt(static_cast<real>(kCharKernels[bank]));
                conv_weight_[bank] = parameter(init.uniform({fan_in, f}, bound));
                conv_bias_[bank] = parameter(init.uniform({f}, real(0.05)));
            }
            const real bound = real(1) / std::sqrt(static_cast<real>(2 * f));
            proj_weight_ = parameter(init.uniform({2 * f, d}, bound));
            proj_bias_ = parameter(Tensor({d}));
            break;
        }
    }
}

std::vector<int> TokenEncoder::unit_ids(std::string_view token) const {
    const std::string key(token);
    {
        std::lock_guard lock(unit_cache_->mutex);
        auto it = unit_cache_->ids.find(key);
        if (it != unit_cache_->ids.end()) return it->second;
    }
    std::vector<int> ids;
    switch (config_.kind) {
        case TokenEncoderKind::token:
            ids.push_back(vocab_.lookup(token));
            break;
        case TokenEncoderKind::subtoken:
            for (const auto& s : capped(split_subtokens(token), config_.max_units)) ids.push_back(vocab_.lookup(s));
            break;
        case TokenEncoderKind::hashed_subtoken:
            for (const auto& s : capped(split_subtokens(token), config_.max_units)) {
                ids.push_back(static_cast<int>(feature_hash(hashing(), s)));
            }
            break;
        case TokenEncoderKind::bpe:
            for (const auto& u : capped(bpe_.apply(token), config_.max_units)) ids.push_back(vocab_.lookup(u));
            if (ids.empty()) ids.push_back(Vocabulary::kUnkId);
            break;
        case TokenEncoderKind::chars:
            throw std::logic_error("unit_ids: character encoder has no embedding units");
    }
    std::lock_guard lock(unit_cache_->mutex);
    unit_cache_->ids.emplace(key, ids);
    return ids;
}

Var TokenEncoder::encode(std::span<const std::string> tokens) const {
    if (tokens.empty()) throw std::invalid_argument("token encoder: no tokens to encode");
    std::vector<std::string> unique;
    std::unordered_map<std::string_view, int> position;
    std::vector<int> gather;
    gather.reserve(tokens.size());
    for (const auto& t : tokens) {
        auto [it, fresh] = position.emplace(t, static_cast<int>(unique.size()));
        if (fresh) unique.push_back(t);
        gather.push_back(it->second);
    }
    Var rows = config_.kind == TokenEncoderKind::chars ? encode_chars(unique) : encode_lookup(unique);
    if (unique.size() == tokens.size()) return rows;
    return gather_rows(rows, gather);
}

Var TokenEncoder::encode_lookup(std::span<const std::string> unique) const {
    std::vector<int> ids;
    std::vector<int> owner;
    bool singletons = true;
    for (std::size_t i = 0; i < unique.size(); ++i) {
        auto units = unit_ids(unique[i]);
        singletons = singletons && units.size() == 1;
        for (int id : units) {
            ids.push_back(id);
            owner.push_back(static_cast<int>(i));
        }
    }
    Var rows = gather_rows(embedding_, ids);
    if (singletons) return rows;
    return segment_max(rows, SegmentIndex(std::move(owner), static_cast<int>(unique.size())));
}

Var TokenEncoder::encode_chars(std::span<const std::string> unique) const {
    const std::size_t a = alphabet_.size();
    std::vector<std::vector<int>> char_ids;
    for (const auto& t : unique) {
        std::vector<int> ids;
        for (const auto& ch : utf8_chars(t)) ids.push_back(alphabet_.lookup(ch));
        char_ids.push_back(std::move(ids));
    }
    std::vector<Var> banks;
    for (int bank = 0; bank < 2; ++bank) {
        const std::size_t k = kCharKernels[bank];
        // All tokens laid end to end, each right-padded to at least k columns.
        std::size_t total = 0;
        std::vector<std::size_t> offset, length;
        for (const auto& ids : char_ids) {
            offset.push_back(total);
            length.push_back(std::max(ids.size(), k));
            total += length.back();
        }
        Tensor onehot({total, a});
        for (std::size_t i = 0; i < char_ids.size(); ++i) {
            for (std::size_t p = 0; p < length[i]; ++p) {
                const int id = p < char_ids[i].size() ? char_ids[i][p] : CharAlphabet::kPadId;
                onehot.data[(offset[i] + p) * a + static_cast<std::size_t>(id)] = real(1);
            }
        }
        Var conv = relu(conv1d(constant(std::move(onehot)), conv_weight_[bank], conv_bias_[bank], k));
        // Keep only windows that lie inside one token.
        std::vector<int> windows, owner;
        for (std::size_t i = 0; i < char_ids.size(); ++i) {
            for (std::size_t w = 0; w + k <= length[i]; ++w) {
                windows.push_back(static_cast<int>(offset[i] + w));
                owner.push_back(static_cast<int>(i));
            }
        }
        banks.push_back(segment_max(gather_rows(conv, windows),
                                    SegmentIndex(std::move(owner), static_cast<int>(char_ids.size()))));
    }
    return add_bias(matmul(concat_cols(banks), proj_weight_), proj_bias_);
}

std::vector<real> TokenEncoder::encode_one(std::string_view token) const {
    NoGradGuard guard;
    const std::string t(token);
    return encode(std::span<const std::string>(&t, 1))->value.data;
}

NamedParameters TokenEncoder::parameters() const {
    NamedParameters out;
    if (config_.kind == TokenEncoderKind::chars) {
        out.emplace_back("token.conv3.weight", conv_weight_[0]);
        out.emplace_back("token.conv3.bias", conv_bias_[0]);
        out.emplace_back("token.conv5.weight", conv_weight_[1]);
        out.emplace_back("token.conv5.bias", conv_bias_[1]);
        out.emplace_back("token.proj.weight", proj_weight_);
        out.emplace_back("token.proj.bias", proj_bias_);
    } else {
        out.emplace_back("token.embedding", embedding_);
    }
    return out;
}

nlohmann::json TokenEncoder::artifacts() const {
    nlohmann::json j = nlohmann::json::object();
    switch (config_.kind) {
        case TokenEncoderKind::token:
        case TokenEncoderKind::subtoken:
            j["vocabulary"] = vocab_;
            break;
        case TokenEncoderKind::bpe:
            j["vocabulary"] = vocab_;
            j["bpe"] = bpe_;
            break;
        case TokenEncoderKind::chars:
            j["alphabet"] = alphabet_;
            break;
        case TokenEncoderKind::hashed_subtoken:
            break;
    }
    return j;
}

TokenEncoder TokenEncoder::from_artifacts(const TokenEncoderConfig& config, const nlohmann::json& artifacts) {
    TokenEncoder enc;
    enc.config_ = config;
    if (artifacts.contains("vocabulary")) enc.vocab_ = artifacts.at("vocabulary").get<Vocabulary>();
    if (artifacts.contains("bpe")) enc.bpe_ = artifacts.at("bpe").get<BpeModel>();
    if (artifacts.contains("alphabet")) enc.alphabet_ = artifacts.at("alphabet").get<CharAlphabet>();
    ParamInit init(0);
    enc.allocate(init);
    return enc;
}

std::vector<real> annotate(std::span<const real> encoding, bool is_receiver) {
    std::vector<real> out(encoding.begin(), encoding.end());
    out.push_back(is_receiver ? real(1) : real(0));
    return out;
}

Var annotate_rows(const Var& encodings, const std::vector<bool>& is_receiver) {
    const std::size_t n = encodings->value.rows();
    if (is_receiver.size() != n) throw ShapeError("annotate_rows: mask length does not match rows");
    Tensor bits({n, 1});
    for (std::size_t i = 0; i < n; ++i) bits.data[i] = is_receiver[i] ? real(1) : real(0);
    return concat_cols({encodings, constant(std::move(bits))});
}

std::vector<real> EncodingCache::get(const TokenEncoder& encoder, const std::string& token) {
    {
        std::lock_guard lock(mutex_);
        auto it = index_.find(token);
        if (it != index_.end()) {
            order_.splice(order_.begin(), order_, it->second);
            ++hits_;
            return it->second->second;
        }
    }
    std::vector<real> value = encoder.encode_one(token);
    std::lock_guard lock(mutex_);
    ++misses_;
    if (capacity_ == 0) return value;
    auto it = index_.find(token);
    if (it != index_.end()) return it->second->second;
    order_.emplace_front(token, value);
    index_[token] = order_.begin();
    while (order_.size() > capacity_) {
        index_.erase(order_.back().first);
        order_.pop_back();
    }
    return value;
}

void EncodingCache::clear() {
    std::lock_guard lock(mutex_);
    order_.clear();
    index_.clear();
}

std::size_t EncodingCache::size() const {
    std::lock_guard lock(mutex_);
    return order_.size();
}

CODECOMP_NN_END
