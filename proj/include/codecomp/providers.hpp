#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "codecomp/corpus.hpp"

namespace codecomp {

enum class Provenance { vocab, stan, inbatch, scope };

struct CandidateSet {
    std::vector<std::string> candidates;
    Provenance provenance = Provenance::stan;
};

/// Fixed list of the most frequent training targets (context-independent).
class VocabProvider {
public:
    VocabProvider() = default;
    explicit VocabProvider(std::vector<std::string> members) : members_(std::move(members)) {}

    /// Top `max_size` training targets by frequency, ties lexicographic.
    static VocabProvider build(std::span<const CompletionInstance> train, std::size_t max_size);
    /// Smallest vocabulary whose members account for at least `coverage` of
    /// the training target occurrences.
    static VocabProvider build_for_coverage(std::span<const CompletionInstance> train, double coverage);

    CandidateSet provide(const CompletionInstance& instance) const;
    const std::vector<std::string>& members() const { return members_; }
    std::size_t size() const { return members_.size(); }

private:
    std::vector<std::string> members_;
};

/// Static-analysis candidates carried by the record.
CandidateSet provide_stan(const CompletionInstance& instance);

/// Own target plus the distinct targets of the rest of the batch (training only).
std::vector<CandidateSet> provide_inbatch_distractors(std::span<const CompletionInstance> batch);

/// Type/namespace name → members, backing the interactive provider.
using ApiTable = std::map<std::string, std::vector<std::string>>;

ApiTable load_api_table(const std::filesystem::path& path);
ApiTable api_table_from_json(const nlohmann::json& j);

/// Heuristic scope provider: resolves `receiver` through the last
/// `receiver = Type(...)` or `import Key as receiver` binding in the tokens,
/// falling back to the union of all table members.
CandidateSet provide_scope(const ApiTable& table, std::span<const std::string> context_tokens,
                           const std::string& receiver);

/// Receiver of a completion: the token before a trailing ".", or empty.
std::string receiver_of(std::span<const std::string> context_tokens);

}  // namespace codecomp
