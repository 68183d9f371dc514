#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace codecomp {

/// Heuristic lexer for the interactive path: identifiers, numbers and string
/// literals are single tokens, every other non-space character is its own token.
std::vector<std::string> tokenize_source(std::string_view text);

/// camelCase / snake_case split into lowercase subtokens. Digits stay with the
/// run they follow. Never empty.
std::vector<std::string> split_subtokens(std::string_view token);

/// UTF-8 code points of `text`, each as its own string. Invalid bytes are
/// passed through one at a time.
std::vector<std::string> utf8_chars(std::string_view text);

using UnitCounts = std::map<std::string, std::uint64_t>;

class Vocabulary {
public:
    static constexpr int kUnkId = 0;
    static constexpr std::string_view kUnk = "<unk>";

    Vocabulary();
    explicit Vocabulary(std::vector<std::string> units);

    /// Top (max_size − 1) units by count, ties lexicographic, plus UNK at id 0.
    static Vocabulary build(const UnitCounts& counts, std::size_t max_size);

    int lookup(std::string_view unit) const;
    bool contains(std::string_view unit) const;
    const std::string& unit(int id) const { return units_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return units_.size(); }
    const std::vector<std::string>& units() const { return units_; }

private:
    std::vector<std::string> units_;
    std::unordered_map<std::string, int> index_;
};

struct BpeModel {
    std::vector<std::pair<std::string, std::string>> merges;
    std::vector<std::string> alphabet;  // sorted
    std::string end_marker = "</w>";

    /// Units of `token` after replaying the merges; markers are not emitted.
    std::vector<std::string> apply(std::string_view token) const;

    /// Rank of each merge pair; rebuild after editing `merges`.
    std::map<std::pair<std::string, std::string>, std::size_t> ranks;
    void rebuild_ranks();
};

/// Greedy BPE: repeatedly merge the most frequent adjacent pair (ties broken by
/// the smaller pair) until `merge_budget` merges exist or no pair occurs twice.
/// Each token carries a trailing end marker that bounds merges and is never
/// itself merged.
BpeModel bpe_train(const UnitCounts& token_counts, std::size_t merge_budget);
std::vector<std::string> bpe_apply(const BpeModel& model, std::string_view token);

class CharAlphabet {
public:
    static constexpr int kPadId = 0;
    static constexpr int kOutOfAlphabetId = 1;

    CharAlphabet() = default;
    explicit CharAlphabet(std::vector<std::string> chars);

    /// The `max_size` most frequent characters of the corpus (ties lexicographic).
    static CharAlphabet build(const UnitCounts& token_counts, std::size_t max_size);

    int lookup(std::string_view ch) const;
    /// Pad and out-of-alphabet columns included.
    std::size_t size() const { return chars_.size() + 2; }
    const std::vector<std::string>& chars() const { return chars_; }

private:
    std::vector<std::string> chars_;
    std::unordered_map<std::string, int> index_;
};

struct HashingScheme {
    std::uint64_t modulus = 2;
};

/// MD5 of the UTF-8 bytes, read as a big-endian 128-bit integer, mod |V|.
std::uint64_t feature_hash(const HashingScheme& scheme, std::string_view subtoken);

void to_json(nlohmann::json& j, const Vocabulary& v);
void from_json(const nlohmann::json& j, Vocabulary& v);
void to_json(nlohmann::json& j, const BpeModel& m);
void from_json(const nlohmann::json& j, BpeModel& m);
void to_json(nlohmann::json& j, const CharAlphabet& a);
void from_json(const nlohmann::json& j, CharAlphabet& a);

}  // namespace codecomp
