#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "codecomp/providers.hpp"
#include "codecomp/synth.hpp"
#include "codecomp/tokenizers.hpp"

using namespace codecomp;

using Names = std::vector<std::string>;

namespace {

CompletionInstance with_target(const std::string& target, Names candidates = {}) {
    CompletionInstance inst;
    inst.id = target;
    inst.context_tokens = {"x", "."};
    inst.candidates = candidates.empty() ? Names{target} : std::move(candidates);
    inst.target = target;
    return inst;
}

std::vector<CompletionInstance> targets(const std::vector<std::pair<std::string, int>>& counts) {
    std::vector<CompletionInstance> out;
    for (const auto& [t, n] : counts)
        for (int i = 0; i < n; ++i) out.push_back(with_target(t));
    return out;
}

}  // namespace

TEST_CASE("Vocab provider keeps the most frequent targets") {
    const auto train = targets({{"dot", 5}, {"sum", 3}, {"conj", 1}});
    const auto vocab = VocabProvider::build(train, 2);
    CHECK(vocab.members() == Names{"dot", "sum"});
    const auto a = vocab.provide(with_target("conj"));
    const auto b = vocab.provide(with_target("dot"));
    CHECK(a.candidates == Names{"dot", "sum"});
    CHECK(a.candidates == b.candidates);
    CHECK(a.provenance == Provenance::vocab);
}

TEST_CASE("Vocab provider coverage picks the smallest sufficient vocabulary") {
    const auto train = targets({{"dot", 5}, {"sum", 3}, {"conj", 1}, {"all", 1}});
    CHECK(VocabProvider::build_for_coverage(train, 0.5).members() == Names{"dot"});
    CHECK(VocabProvider::build_for_coverage(train, 0.6).members() == Names{"dot", "sum"});
    CHECK(VocabProvider::build_for_coverage(train, 1.0).size() == 4);
    CHECK_THROWS(VocabProvider::build_for_coverage(train, 0.0));
    CHECK_THROWS(VocabProvider::build_for_coverage(train, 1.5));
}

TEST_CASE("StAn provider returns the record's candidates verbatim") {
    const auto inst = with_target("dot", {"all", "any", "argmax", "dot"});
    CHECK(provide_stan(inst).candidates == Names{"all", "any", "argmax", "dot"});
    CHECK(provide_stan(with_target("x")).candidates == Names{"x"});
}

TEST_CASE("in-batch distractors: own target plus other distinct targets") {
    const std::vector<CompletionInstance> batch = {with_target("dot"), with_target("sum"), with_target("dot")};
    const auto sets = provide_inbatch_distractors(batch);
    REQUIRE(sets.size() == 3);
    CHECK(std::set<std::string>(sets[0].candidates.begin(), sets[0].candidates.end()) ==
          std::set<std::string>{"dot", "sum"});
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& c = sets[i].candidates;
        CHECK(std::find(c.begin(), c.end(), batch[i].target) != c.end());
        CHECK(std::set<std::string>(c.begin(), c.end()).size() == c.size());
        CHECK(sets[i].provenance == Provenance::inbatch);
    }
    const std::vector<CompletionInstance> same = {with_target("a"), with_target("a")};
    for (const auto& s : provide_inbatch_distractors(same)) CHECK(s.candidates == Names{"a"});
    CHECK_THROWS(provide_inbatch_distractors(std::vector<CompletionInstance>{with_target("a")}));
}

TEST_CASE("scope provider resolves receiver bindings") {
    const ApiTable table = {{"ndarray", {"dot", "sum"}}, {"list", {"append", "pop"}}};
    CHECK(provide_scope(table, tokenize_source("a1 = ndarray(3)\na1."), "a1").candidates == Names{"dot", "sum"});
    CHECK(provide_scope(table, tokenize_source("a1 = np.ndarray(3)\na1."), "a1").candidates == Names{"dot", "sum"});
    CHECK(provide_scope(table, tokenize_source("import list as l\nl."), "l").candidates == Names{"append", "pop"});
    CHECK(provide_scope(table, tokenize_source("import ndarray\nndarray."), "ndarray").candidates ==
          Names{"dot", "sum"});
    // Last binding wins.
    CHECK(provide_scope(table, tokenize_source("a = ndarray()\na = list()\na."), "a").candidates ==
          Names{"append", "pop"});
    const auto fallback = provide_scope(table, tokenize_source("q."), "q").candidates;
    CHECK(std::set<std::string>(fallback.begin(), fallback.end()) ==
          std::set<std::string>{"append", "dot", "pop", "sum"});
    CHECK_THROWS(provide_scope({}, tokenize_source("q."), "q"));
}

TEST_CASE("receiver_of finds the token before a trailing dot") {
    CHECK(receiver_of(tokenize_source("x = a1.")) == "a1");
    CHECK(receiver_of(tokenize_source("x = a1")) == "");
    CHECK(receiver_of(tokenize_source(".")) == "");
}

TEST_CASE("API tables load from JSON and reject empty member lists") {
    auto path = std::filesystem::temp_directory_path() / "codecomp_api_table.json";
    std::ofstream(path) << R"({"ndarray": ["dot", "sum", "dot"], "list": ["append"]})";
    const auto table = load_api_table(path);
    CHECK(table.at("ndarray") == Names{"dot", "sum"});
    CHECK_THROWS(api_table_from_json(nlohmann::json::parse(R"({"x": []})")));
    CHECK_THROWS(api_table_from_json(nlohmann::json::parse(R"([1, 2])")));
}

TEST_CASE("the bundled API table covers the default synthetic universe") {
    const auto bundled = std::filesystem::path(CODECOMP_SOURCE_DIR) / "data" / "api_table.json";
    const auto table = load_api_table(bundled);
    for (const auto& type : synth_types(SynthSpec{})) {
        REQUIRE(table.count(type.name));
        CHECK(table.at(type.name) == type.members);
    }
}
