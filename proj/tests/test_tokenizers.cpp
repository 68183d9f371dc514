#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <random>

#include "codecomp/md5.hpp"
#include "codecomp/tokenizers.hpp"

using namespace codecomp;

using Units = std::vector<std::string>;

TEST_CASE("md5 matches the RFC 1321 test suite") {
    CHECK(md5_hex("") == "d41d8cd98f00b204e9800998ecf8427e");
    CHECK(md5_hex("a") == "0cc175b9c0f1b6a831c399e269772661");
    CHECK(md5_hex("abc") == "900150983cd24fb0d6963f7d28e17f72");
    CHECK(md5_hex("message digest") == "f96b697d7cb7938d525a2f31aaf161d0");
    CHECK(md5_hex("12345678901234567890123456789012345678901234567890123456789012345678901234567890") ==
          "57edf4a22be3c955ac49da2e2107b67a");
}

TEST_CASE("feature_hash equals reference digests reduced big-endian") {
    // Values from Python: int.from_bytes(hashlib.md5(s.encode()).digest(), "big") % m
    struct Row {
        const char* s;
        std::uint64_t m, expected;
    };
    const Row rows[] = {
        {"array", 2500, 1449},   {"array", 97, 47},        {"array", 1000003, 903493},
        {"get", 2500, 267},      {"file", 2500, 1312},     {"name", 2500, 399},
        {"dot", 2500, 2122},     {"dot", 2, 0},            {"a", 1000003, 135484},
        {"inner_product", 97, 71}, {"\xc3\xa9", 2500, 2335},
    };
    for (const auto& r : rows) {
        INFO(r.s << " mod " << r.m);
        CHECK(feature_hash({r.m}, r.s) == r.expected);
    }
}

TEST_CASE("feature_hash is deterministic and bounded") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
        std::string s(1 + rng() % 10, 'a');
        for (auto& c : s) c = static_cast<char>('a' + rng() % 26);
        const std::uint64_t m = 2 + rng() % 5000;
        CHECK(feature_hash({m}, s) < m);
        CHECK(feature_hash({m}, s) == feature_hash({m}, s));
    }
}

TEST_CASE("tokenize_source examples") {
    CHECK(tokenize_source("array1.") == Units{"array1", "."});
    CHECK(tokenize_source("a = b.dot(c)") == Units{"a", "=", "b", ".", "dot", "(", "c", ")"});
    CHECK(tokenize_source("").empty());
    CHECK(tokenize_source("  \n\t ").empty());
}

TEST_CASE("tokenize_source keeps numbers and strings whole") {
    CHECK(tokenize_source("x = 3.25 + y") == Units{"x", "=", "3.25", "+", "y"});
    CHECK(tokenize_source("open(\"a b.txt\")") == Units{"open", "(", "\"a b.txt\"", ")"});
    CHECK(tokenize_source("x[0]") == Units{"x", "[", "0", "]"});
}

TEST_CASE("split_subtokens examples") {
    CHECK(split_subtokens("array_inner_product") == Units{"array", "inner", "product"});
    CHECK(split_subtokens("getFileName") == Units{"get", "file", "name"});
    CHECK(split_subtokens("foo") == Units{"foo"});
    CHECK(split_subtokens("array1") == Units{"array1"});
    CHECK(split_subtokens("__init__") == Units{"init"});
    CHECK(split_subtokens("_") == Units{"_"});
    CHECK(split_subtokens("X") == Units{"x"});
}

TEST_CASE("split_subtokens never returns empty and preserves letters in order") {
    std::mt19937_64 rng(2);
    const std::string alphabet = "abcXYZ_01";
    for (int i = 0; i < 500; ++i) {
        std::string token(1 + rng() % 12, 'a');
        for (auto& c : token) c = alphabet[rng() % alphabet.size()];
        const auto parts = split_subtokens(token);
        REQUIRE_FALSE(parts.empty());
        std::string joined, letters;
        for (const auto& p : parts) {
            CHECK_FALSE(p.empty());
            joined += p;
        }
        for (char c : token) {
            if (c != '_') letters += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        if (!letters.empty()) CHECK(joined == letters);
    }
}

TEST_CASE("bpe_train on {abab x2, ab} learns (a,b) then (ab,ab)") {
    const BpeModel model = bpe_train({{"abab", 2}, {"ab", 1}}, 2);
    using Pair = std::pair<std::string, std::string>;
    CHECK(model.merges == std::vector<Pair>{{"a", "b"}, {"ab", "ab"}});
    CHECK(bpe_apply(model, "abab") == Units{"abab"});
    CHECK(bpe_apply(model, "ba") == Units{"b", "a"});
    CHECK(bpe_apply(model, "").empty());
}

TEST_CASE("bpe_train matches a brute-force reference on a larger corpus") {
    // Reference: per round, count adjacent pairs weighted by token count,
    // take the max count, break ties by the smallest pair, merge everywhere.
    const BpeModel model = bpe_train({{"low", 5}, {"lower", 2}, {"newest", 6}, {"widest", 3}}, 10);
    using Pair = std::pair<std::string, std::string>;
    const std::vector<Pair> expected = {{"e", "s"}, {"es", "t"}, {"l", "o"},  {"lo", "w"},  {"e", "w"},
                                        {"ew", "est"}, {"n", "ewest"}, {"d", "est"}, {"i", "dest"}, {"w", "idest"}};
    CHECK(model.merges == expected);
    CHECK(bpe_apply(model, "lowest") == Units{"low", "est"});
    CHECK(bpe_apply(model, "newer") == Units{"n", "ew", "e", "r"});
    CHECK(bpe_apply(model, "wider") == Units{"w", "i", "d", "e", "r"});
    CHECK(bpe_apply(model, "slow") == Units{"s", "low"});
    CHECK(bpe_apply(model, "lower") == Units{"low", "e", "r"});
}

TEST_CASE("bpe degenerate cases") {
    CHECK(bpe_train({{"a", 10}}, 5).merges.empty());
    const BpeModel none = bpe_train({{"abab", 3}}, 0);
    CHECK(none.merges.empty());
    CHECK(bpe_apply(none, "abab") == Units{"a", "b", "a", "b"});
    CHECK(bpe_train({{"abab", 2}, {"ab", 1}}, 2).merges == bpe_train({{"abab", 2}, {"ab", 1}}, 2).merges);
}

TEST_CASE("bpe_apply reconstructs every token and never adds units") {
    std::mt19937_64 rng(3);
    UnitCounts corpus;
    for (int i = 0; i < 300; ++i) {
        std::string t(1 + rng() % 9, 'a');
        for (auto& c : t) c = static_cast<char>('a' + rng() % 5);
        corpus[t] += 1 + rng() % 4;
    }
    const BpeModel model = bpe_train(corpus, 60);
    for (const auto& [token, _] : corpus) {
        const auto units = bpe_apply(model, token);
        std::string joined;
        for (const auto& u : units) joined += u;
        CHECK(joined == token);
        CHECK(units.size() <= token.size());
    }
    // Unknown characters pass through as single units.
    CHECK(bpe_apply(model, "zz") == Units{"z", "z"});
}

TEST_CASE("bpe model serializes losslessly") {
    const BpeModel model = bpe_train({{"low", 5}, {"lower", 2}, {"newest", 6}, {"widest", 3}}, 10);
    nlohmann::json j = model;
    const BpeModel back = j.get<BpeModel>();
    CHECK(back.merges == model.merges);
    CHECK(bpe_apply(back, "lowest") == bpe_apply(model, "lowest"));
}

TEST_CASE("build_vocab examples") {
    const UnitCounts counts = {{"a", 3}, {"b", 2}, {"c", 1}};
    const Vocabulary v = Vocabulary::build(counts, 3);
    CHECK(v.units() == Units{std::string(Vocabulary::kUnk), "a", "b"});
    CHECK(v.lookup("c") == Vocabulary::kUnkId);
    CHECK(v.lookup("a") == 1);
    CHECK(Vocabulary::build(counts, 1).units() == Units{std::string(Vocabulary::kUnk)});
}

TEST_CASE("build_vocab breaks count ties lexicographically and lookup is total") {
    const Vocabulary v = Vocabulary::build({{"zeta", 2}, {"alpha", 2}, {"mid", 2}, {"rare", 1}}, 3);
    CHECK(v.units() == Units{std::string(Vocabulary::kUnk), "alpha", "mid"});
    for (const char* s : {"zeta", "rare", "", "never seen"}) CHECK(v.lookup(s) == Vocabulary::kUnkId);
}

TEST_CASE("char alphabet keeps the most frequent characters and reserves pad and OOA") {
    const CharAlphabet a = CharAlphabet::build({{"aab", 2}, {"c", 1}}, 2);
    CHECK(a.chars() == Units{"a", "b"});
    CHECK(a.lookup("a") >= 2);
    CHECK(a.lookup("c") == CharAlphabet::kOutOfAlphabetId);
    CHECK(a.size() == 4);
}

TEST_CASE("utf8_chars splits on code points") {
    CHECK(utf8_chars("a\xc3\xa9z") == Units{"a", "\xc3\xa9", "z"});
}
