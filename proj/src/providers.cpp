#include "codecomp/providers.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_set>

namespace codecomp {

namespace {

std::vector<std::pair<std::string, std::uint64_t>> ranked_targets(std::span<const CompletionInstance> train) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& inst : train) ++counts[inst.target];
    std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return ranked;
}

}  // namespace

VocabProvider VocabProvider::build(std::span<const CompletionInstance> train, std::size_t max_size) {
    auto ranked = ranked_targets(train);
    std::vector<std::string> members;
    for (std::size_t i = 0; i < ranked.size() && i < max_size; ++i) members.push_back(ranked[i].first);
    return VocabProvider(std::move(members));
}

VocabProvider VocabProvider::build_for_coverage(std::span<const CompletionInstance> train, double coverage) {
    if (!(coverage > 0.0 && coverage <= 1.0)) {
        throw std::invalid_argument("vocab provider: coverage must lie in (0, 1]");
    }
    auto ranked = ranked_targets(train);
    const double needed = coverage * static_cast<double>(train.size());
    std::vector<std::string> members;
    double covered = 0;
    for (const auto& [name, count] : ranked) {
        if (covered >= needed && !members.empty()) break;
        members.push_back(name);
        covered += static_cast<double>(count);
    }
    return VocabProvider(std::move(members));
}

CandidateSet VocabProvider::provide(const CompletionInstance&) const {
    return {members_, Provenance::vocab};
}

CandidateSet provide_stan(const CompletionInstance& instance) {
    return {instance.candidates, Provenance::stan};
}

std::vector<CandidateSet> provide_inbatch_distractors(std::span<const CompletionInstance> batch) {
    if (batch.size() < 2) {
        throw std::invalid_argument("in-batch distractors need a batch of at least 2 instances");
    }
    std::vector<std::string> distinct;
    std::unordered_set<std::string> seen;
    for (const auto& inst : batch) {
        if (seen.insert(inst.target).second) distinct.push_back(inst.target);
    }
    std::vector<CandidateSet> out;
    out.reserve(batch.size());
    for (const auto& inst : batch) {
        CandidateSet set{{inst.target}, Provenance::inbatch};
        for (const auto& t : distinct) {
            if (t != inst.target) set.candidates.push_back(t);
        }
        out.push_back(std::move(set));
    }
    return out;
}

ApiTable api_table_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("api table: expected a JSON object");
    ApiTable table;
    for (const auto& [key, members] : j.items()) {
        std::vector<std::string> list;
        std::unordered_set<std::string> seen;
        for (auto& m : members.get<std::vector<std::string>>()) {
            if (seen.insert(m).second) list.push_back(std::move(m));
        }
        if (list.empty()) throw std::invalid_argument("api table: '" + key + "' has no members");
        table.emplace(key, std::move(list));
    }
    return table;
}

ApiTable load_api_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open api table " + path.string());
    try {
        return api_table_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("api table " + path.string() + ": " + e.what());
    }
}

std::string receiver_of(std::span<const std::string> tokens) {
    if (tokens.size() < 2 || tokens.back() != ".") return {};
    return tokens[tokens.size() - 2];
}

CandidateSet provide_scope(const ApiTable& table, std::span<const std::string> tokens,
                           const std::string& receiver) {
    if (table.empty()) throw std::invalid_argument("scope provider: empty api table");
    std::string bound;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        // receiver = Key ( ...
        if (i + 3 < tokens.size() && tokens[i] == receiver && tokens[i + 1] == "=" &&
            tokens[i + 3] == "(" && table.count(tokens[i + 2])) {
            bound = tokens[i + 2];
        }
        // receiver = module . Key ( ...
        if (i + 5 < tokens.size() && tokens[i] == receiver && tokens[i + 1] == "=" &&
            tokens[i + 3] == "." && tokens[i + 5] == "(" && table.count(tokens[i + 4])) {
            bound = tokens[i + 4];
        }
        // import Key as receiver
        if (i + 3 < tokens.size() && tokens[i] == "import" && tokens[i + 2] == "as" &&
            tokens[i + 3] == receiver && table.count(tokens[i + 1])) {
            bound = tokens[i + 1];
        }
        // import receiver
        if (i + 1 < tokens.size() && tokens[i] == "import" && tokens[i + 1] == receiver &&
            (i + 2 >= tokens.size() || tokens[i + 2] != "as") && table.count(receiver)) {
            bound = receiver;
        }
    }
    if (!bound.empty()) return {table.at(bound), Provenance::scope};
    CandidateSet all{{}, Provenance::scope};
    std::set<std::string> seen;
    for (const auto& [_, members] : table) {
        for (const auto& m : members) {
            if (seen.insert(m).second) all.candidates.push_back(m);
        }
    }
    return all;
}

}  // namespace codecomp
