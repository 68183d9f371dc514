#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace codecomp {

inline constexpr std::size_t kDefaultContextSize = 80;

/// One completion location: the preceding tokens, which of them refer to the
/// receiver, the candidate members and the member actually used.
struct CompletionInstance {
    std::string id;
    std::vector<std::string> context_tokens;  // oldest first
    std::vector<int> receiver_mask;           // indices into context_tokens
    std::vector<std::string> candidates;
    std::string target;
    std::optional<std::string> library;

    bool operator==(const CompletionInstance&) const = default;
};

struct DatasetSplit {
    std::vector<CompletionInstance> train;
    std::vector<CompletionInstance> valid;
    std::vector<CompletionInstance> test;
};

class DatasetError : public std::runtime_error {
public:
    DatasetError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Throws DatasetError when an invariant of the record does not hold.
void validate_instance(const CompletionInstance& instance);

/// Keeps the `max_context` most recent tokens and remaps the receiver mask.
void truncate_context(CompletionInstance& instance, std::size_t max_context);

CompletionInstance instance_from_json(const nlohmann::json& j);
nlohmann::json instance_to_json(const CompletionInstance& instance);

/// Reads a JSON-Lines dataset. Blank lines are skipped; unknown fields ignored.
std::vector<CompletionInstance> load_dataset(const std::filesystem::path& path,
                                             std::size_t max_context = kDefaultContextSize);
void save_dataset(const std::filesystem::path& path, const std::vector<CompletionInstance>& instances);

/// Drops exact repeats of (context_tokens, candidates, target); first occurrence wins.
std::vector<CompletionInstance> dedup(const std::vector<CompletionInstance>& instances);

/// File part of an instance id ("file:ordinal"), or the whole id.
std::string file_group(const CompletionInstance& instance);

using GroupKey = std::function<std::string(const CompletionInstance&)>;

/// Assigns whole groups to train/valid/test by a seeded shuffle.
DatasetSplit split(const std::vector<CompletionInstance>& instances,
                   std::array<double, 3> ratios = {0.6, 0.2, 0.2},
                   const GroupKey& group_key = file_group, std::uint64_t seed = 0);

/// Writes via a temporary sibling then renames, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace codecomp
