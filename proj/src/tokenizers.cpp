#include "codecomp/tokenizers.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <stdexcept>

#include "codecomp/md5.hpp"

namespace codecomp {

namespace {

bool is_ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool is_ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

std::size_t utf8_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xe) return 3;
    if ((lead >> 3) == 0x1e) return 4;
    return 1;
}

}  // namespace

std::vector<std::string> tokenize_source(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c)) {
            ++i;
        } else if (is_ident_start(c)) {
            std::size_t j = i + 1;
            while (j < text.size() && is_ident_char(static_cast<unsigned char>(text[j]))) ++j;
            tokens.emplace_back(text.substr(i, j - i));
            i = j;
        } else if (std::isdigit(c)) {
            std::size_t j = i + 1;
            auto digit_or_alnum = [&](std::size_t k) {
                return k < text.size() && (std::isalnum(static_cast<unsigned char>(text[k])) || text[k] == '_');
            };
            while (digit_or_alnum(j)) ++j;
            // A fractional part belongs to the number: "1.5" but not "1.real".
            if (j + 1 < text.size() && text[j] == '.' &&
                std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
                j += 1;
                while (digit_or_alnum(j)) ++j;
            }
            tokens.emplace_back(text.substr(i, j - i));
            i = j;
        } else if (c == '"' || c == '\'') {
            std::size_t j = i + 1;
            while (j < text.size() && text[j] != static_cast<char>(c) && text[j] != '\n') {
                j += (text[j] == '\\' && j + 1 < text.size()) ? 2 : 1;
            }
            if (j < text.size() && text[j] == static_cast<char>(c)) ++j;
            tokens.emplace_back(text.substr(i, std::min(j, text.size()) - i));
            i = j;
        } else {
            tokens.emplace_back(1, static_cast<char>(c));
            ++i;
        }
    }
    return tokens;
}

std::vector<std::string> split_subtokens(std::string_view token) {
    std::vector<std::string> parts;
    std::string current;
    char prev = '\0';
    for (char ch : token) {
        const auto c = static_cast<unsigned char>(ch);
        if (ch == '_') {
            if (!current.empty()) parts.push_back(std::move(current));
            current.clear();
            prev = ch;
            continue;
        }
        const auto p = static_cast<unsigned char>(prev);
        if (std::isupper(c) && (std::islower(p) || std::isdigit(p)) && !current.empty()) {
            parts.push_back(std::move(current));
            current.clear();
        }
        current.push_back(static_cast<char>(std::tolower(c)));
        prev = ch;
    }
    if (!current.empty()) parts.push_back(std::move(current));
    if (parts.empty()) {
        std::string whole;
        for (char ch : token) whole.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        parts.push_back(std::move(whole));
    }
    return parts;
}

std::vector<std::string> utf8_chars(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t len = utf8_length(static_cast<unsigned char>(text[i]));
        if (i + len > text.size()) len = 1;
        for (std::size_t k = 1; k < len; ++k) {
            if ((static_cast<unsigned char>(text[i + k]) & 0xc0) != 0x80) {
                len = 1;
                break;
            }
        }
        out.emplace_back(text.substr(i, len));
        i += len;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> units) {
    units_.emplace_back(kUnk);
    index_.emplace(std::string(kUnk), kUnkId);
    for (auto& u : units) {
        if (u == kUnk) continue;
        if (!index_.emplace(u, static_cast<int>(units_.size())).second) {
            throw std::invalid_argument("vocabulary: duplicate unit '" + u + "'");
        }
        units_.push_back(std::move(u));
    }
}

Vocabulary Vocabulary::build(const UnitCounts& counts, std::size_t max_size) {
    if (max_size < 1) throw std::invalid_argument("vocabulary: max_size must be at least 1");
    std::vector<std::pair<std::string, std::uint64_t>> ranked;
    for (const auto& [unit, count] : counts) {
        if (unit != kUnk) ranked.emplace_back(unit, count);
    }
    // std::map iteration is already lexicographic; stable sort keeps ties in that order.
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> kept;
    for (std::size_t i = 0; i < ranked.size() && kept.size() + 1 < max_size; ++i) {
        kept.push_back(ranked[i].first);
    }
    return Vocabulary(std::move(kept));
}

int Vocabulary::lookup(std::string_view unit) const {
    auto it = index_.find(std::string(unit));
    return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view unit) const {
    return unit != kUnk && index_.count(std::string(unit)) > 0;
}

// ---------------------------------------------------------------------------
// BPE

namespace {

using Pair = std::pair<std::string, std::string>;

struct BpeWord {
    std::vector<std::string> units;  // last unit is the end marker
    std::uint64_t count = 0;
};

void merge_pair_in(std::vector<std::string>& units, const Pair& pair) {
    std::vector<std::string> out;
    out.reserve(units.size());
    for (std::size_t i = 0; i < units.size();) {
        if (i + 1 < units.size() && units[i] == pair.first && units[i + 1] == pair.second) {
            out.push_back(units[i] + units[i + 1]);
            i += 2;
        } else {
            out.push_back(std::move(units[i]));
            ++i;
        }
    }
    units = std::move(out);
}

}  // namespace

void BpeModel::rebuild_ranks() {
    ranks.clear();
    for (std::size_t i = 0; i < merges.size(); ++i) ranks.emplace(merges[i], i);
}

BpeModel bpe_train(const UnitCounts& token_counts, std::size_t merge_budget) {
    if (token_counts.empty()) throw std::invalid_argument("bpe_train: empty corpus");
    BpeModel model;
    std::vector<BpeWord> words;
    std::map<std::string, bool> alphabet;
    for (const auto& [token, count] : token_counts) {
        if (token.empty() || count == 0) continue;
        BpeWord w;
        w.units = utf8_chars(token);
        for (const auto& ch : w.units) alphabet[ch] = true;
        w.units.push_back(model.end_marker);
        w.count = count;
        words.push_back(std::move(w));
    }
    for (const auto& [ch, _] : alphabet) model.alphabet.push_back(ch);

    while (model.merges.size() < merge_budget) {
        std::map<Pair, std::uint64_t> pair_counts;
        for (const auto& w : words) {
            // The end marker closes the token and never takes part in a merge.
            for (std::size_t i = 0; i + 2 < w.units.size(); ++i) {
                pair_counts[{w.units[i], w.units[i + 1]}] += w.count;
            }
        }
        const Pair* best = nullptr;
        std::uint64_t best_count = 0;
        for (const auto& [pair, count] : pair_counts) {
            if (count > best_count) {  // map order makes the first maximum the smallest pair
                best = &pair;
                best_count = count;
            }
        }
        if (best == nullptr || best_count < 2) break;
        const Pair chosen = *best;
        model.merges.push_back(chosen);
        for (auto& w : words) merge_pair_in(w.units, chosen);
    }
    model.rebuild_ranks();
    return model;
}

std::vector<std::string> BpeModel::apply(std::string_view token) const {
    std::vector<std::string> units = utf8_chars(token);
    if (units.size() < 2 || merges.empty()) return units;
    std::map<Pair, std::size_t> local;
    const auto* table = &ranks;
    if (ranks.size() != merges.size()) {
        for (std::size_t i = 0; i < merges.size(); ++i) local.emplace(merges[i], i);
        table = &local;
    }
    // Replaying merges in training order equals repeatedly applying the
    // lowest-ranked pair present.
    while (units.size() > 1) {
        std::size_t best_rank = std::numeric_limits<std::size_t>::max();
        for (std::size_t i = 0; i + 1 < units.size(); ++i) {
            auto it = table->find({units[i], units[i + 1]});
            if (it != table->end() && it->second < best_rank) best_rank = it->second;
        }
        if (best_rank == std::numeric_limits<std::size_t>::max()) break;
        merge_pair_in(units, merges[best_rank]);
    }
    return units;
}

std::vector<std::string> bpe_apply(const BpeModel& model, std::string_view token) {
    return model.apply(token);
}

// ---------------------------------------------------------------------------
// Characters and hashing

CharAlphabet::CharAlphabet(std::vector<std::string> chars) : chars_(std::move(chars)) {
    for (std::size_t i = 0; i < chars_.size(); ++i) {
        if (!index_.emplace(chars_[i], static_cast<int>(i) + 2).second) {
            throw std::invalid_argument("char alphabet: duplicate character '" + chars_[i] + "'");
        }
    }
}

CharAlphabet CharAlphabet::build(const UnitCounts& token_counts, std::size_t max_size) {
    UnitCounts char_counts;
    for (const auto& [token, count] : token_counts) {
        for (const auto& ch : utf8_chars(token)) char_counts[ch] += count;
    }
    std::vector<std::pair<std::string, std::uint64_t>> ranked(char_counts.begin(), char_counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > max_size) ranked.resize(max_size);
    std::vector<std::string> chars;
    for (auto& [ch, _] : ranked) chars.push_back(ch);
    std::sort(chars.begin(), chars.end());
    return CharAlphabet(std::move(chars));
}

int CharAlphabet::lookup(std::string_view ch) const {
    auto it = index_.find(std::string(ch));
    return it == index_.end() ? kOutOfAlphabetId : it->second;
}

std::uint64_t feature_hash(const HashingScheme& scheme, std::string_view subtoken) {
    if (scheme.modulus < 2) throw std::invalid_argument("feature_hash: modulus must be at least 2");
    if (scheme.modulus > (std::uint64_t{1} << 48)) {
        throw std::invalid_argument("feature_hash: modulus too large");
    }
    std::uint64_t r = 0;
    for (std::uint8_t byte : md5(subtoken)) r = (r * 256 + byte) % scheme.modulus;
    return r;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const Vocabulary& v) {
    j = nlohmann::json::array();
    for (std::size_t i = 1; i < v.size(); ++i) j.push_back(v.unit(static_cast<int>(i)));
}

void from_json(const nlohmann::json& j, Vocabulary& v) {
    v = Vocabulary(j.get<std::vector<std::string>>());
}

void to_json(nlohmann::json& j, const BpeModel& m) {
    nlohmann::json merges = nlohmann::json::array();
    for (const auto& [a, b] : m.merges) merges.push_back({a, b});
    j = {{"merges", merges}, {"alphabet", m.alphabet}, {"end_marker", m.end_marker}};
}

void from_json(const nlohmann::json& j, BpeModel& m) {
    m = BpeModel{};
    for (const auto& pair : j.at("merges")) {
        m.merges.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
    }
    m.alphabet = j.at("alphabet").get<std::vector<std::string>>();
    m.end_marker = j.at("end_marker").get<std::string>();
    m.rebuild_ranks();
}

void to_json(nlohmann::json& j, const CharAlphabet& a) { j = a.chars(); }

void from_json(const nlohmann::json& j, CharAlphabet& a) {
    a = CharAlphabet(j.get<std::vector<std::string>>());
}

}  // namespace codecomp
