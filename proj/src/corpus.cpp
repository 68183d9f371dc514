#include "codecomp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace codecomp {

void validate_instance(const CompletionInstance& inst) {
    if (inst.candidates.empty()) throw DatasetError("instance '" + inst.id + "': no candidates");
    std::unordered_set<std::string> seen;
    for (const auto& c : inst.candidates) {
        if (!seen.insert(c).second) {
            throw DatasetError("instance '" + inst.id + "': duplicate candidate '" + c + "'");
        }
    }
    if (!seen.count(inst.target)) {
        throw DatasetError("instance '" + inst.id + "': target '" + inst.target + "' is not a candidate");
    }
    for (int idx : inst.receiver_mask) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= inst.context_tokens.size()) {
            throw DatasetError("instance '" + inst.id + "': receiver index " + std::to_string(idx) +
                               " outside context of " + std::to_string(inst.context_tokens.size()));
        }
    }
}

void truncate_context(CompletionInstance& inst, std::size_t max_context) {
    if (inst.context_tokens.size() <= max_context) return;
    const auto drop = static_cast<int>(inst.context_tokens.size() - max_context);
    inst.context_tokens.erase(inst.context_tokens.begin(), inst.context_tokens.begin() + drop);
    std::vector<int> mask;
    for (int idx : inst.receiver_mask) {
        if (idx >= drop) mask.push_back(idx - drop);
    }
    inst.receiver_mask = std::move(mask);
}

CompletionInstance instance_from_json(const nlohmann::json& j) {
    CompletionInstance inst;
    inst.id = j.at("id").get<std::string>();
    inst.context_tokens = j.at("context_tokens").get<std::vector<std::string>>();
    inst.receiver_mask = j.value("receiver_mask", std::vector<int>{});
    inst.candidates = j.at("candidates").get<std::vector<std::string>>();
    inst.target = j.at("target").get<std::string>();
    if (j.contains("library") && j.at("library").is_string()) {
        inst.library = j.at("library").get<std::string>();
    }
    return inst;
}

nlohmann::json instance_to_json(const CompletionInstance& inst) {
    nlohmann::json j = {{"id", inst.id},
                        {"context_tokens", inst.context_tokens},
                        {"receiver_mask", inst.receiver_mask},
                        {"candidates", inst.candidates},
                        {"target", inst.target}};
    if (inst.library) j["library"] = *inst.library;
    return j;
}

std::vector<CompletionInstance> load_dataset(const std::filesystem::path& path, std::size_t max_context) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open dataset " + path.string());
    std::vector<CompletionInstance> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        CompletionInstance inst;
        try {
            inst = instance_from_json(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw DatasetError(std::string("malformed record: ") + e.what(), line_no);
        }
        try {
            validate_instance(inst);
        } catch (const DatasetError& e) {
            throw DatasetError(e.what(), line_no);
        }
        truncate_context(inst, max_context);
        out.push_back(std::move(inst));
    }
    return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void save_dataset(const std::filesystem::path& path, const std::vector<CompletionInstance>& instances) {
    std::string bytes;
    for (const auto& inst : instances) {
        bytes += instance_to_json(inst).dump();
        bytes += '\n';
    }
    write_file_atomic(path, bytes);
}

namespace {

std::string dedup_key(const CompletionInstance& inst) {
    // Length-prefixed fields make the key injective.
    std::string key;
    auto put = [&key](const std::string& s) {
        key += std::to_string(s.size());
        key += ':';
        key += s;
    };
    key += std::to_string(inst.context_tokens.size()) + '|';
    for (const auto& t : inst.context_tokens) put(t);
    key += std::to_string(inst.candidates.size()) + '|';
    for (const auto& c : inst.candidates) put(c);
    put(inst.target);
    return key;
}

}  // namespace

std::vector<CompletionInstance> dedup(const std::vector<CompletionInstance>& instances) {
    std::unordered_set<std::string> seen;
    std::vector<CompletionInstance> out;
    for (const auto& inst : instances) {
        if (seen.insert(dedup_key(inst)).second) out.push_back(inst);
    }
    return out;
}

std::string file_group(const CompletionInstance& instance) {
    const auto pos = instance.id.rfind(':');
    return pos == std::string::npos ? instance.id : instance.id.substr(0, pos);
}

DatasetSplit split(const std::vector<CompletionInstance>& instances, std::array<double, 3> ratios,
                   const GroupKey& group_key, std::uint64_t seed) {
    const double total = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(total - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) {
        throw std::invalid_argument("split: ratios must be non-negative and sum to 1");
    }
    std::vector<std::string> groups;
    std::unordered_map<std::string, std::size_t> group_of;
    for (const auto& inst : instances) {
        auto key = group_key(inst);
        if (group_of.emplace(key, groups.size()).second) groups.push_back(std::move(key));
    }
    if (groups.size() < 3) {
        throw std::invalid_argument("split: need at least 3 groups, found " + std::to_string(groups.size()));
    }
    std::vector<std::size_t> order(groups.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    const std::size_t g = groups.size();
    const auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(g)));
    const auto n_valid = std::min(g - n_train, static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(g))));
    std::vector<int> bucket(g);
    for (std::size_t rank = 0; rank < g; ++rank) {
        bucket[order[rank]] = rank < n_train ? 0 : (rank < n_train + n_valid ? 1 : 2);
    }
    DatasetSplit out;
    for (const auto& inst : instances) {
        switch (bucket[group_of.at(group_key(inst))]) {
            case 0: out.train.push_back(inst); break;
            case 1: out.valid.push_back(inst); break;
            default: out.test.push_back(inst); break;
        }
    }
    return out;
}

}  // namespace codecomp
