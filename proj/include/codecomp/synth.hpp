#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "codecomp/corpus.hpp"

namespace codecomp {

/// Parameters of the synthetic API-usage corpus.
///
/// Every instance completes `lhs = recv .` on a receiver of some type; the
/// candidates are that type's full member list. Two learnable cues exist:
///  - subtoken cue: with probability `subtoken_signal` the assigned variable
///    is named from the target member's subtokens (`file_name = f.` before
///    `get_file_name`);
///  - sequential cue: with probability `sequential_signal` an earlier call on
///    the same receiver is the fixed predecessor of the target member
///    (open → read); otherwise that earlier call is a uniformly random member.
/// With both at zero the context carries nothing beyond member popularity.
struct SynthSpec {
    int receiver_types = 20;
    int methods_per_type = 15;
    double subtoken_signal = 0.8;
    double sequential_signal = 0.8;
    int instances = 20000;
    std::uint64_t seed = 1;
    int libraries = 5;            // types are dealt round-robin into libraries
    int instances_per_file = 8;   // grouping unit for splitting
    int min_noise_statements = 3;
    int max_noise_statements = 6;
    std::size_t max_context = kDefaultContextSize;

    void validate() const;
};

/// Member list of one synthetic receiver type.
struct SynthType {
    std::string name;
    std::string library;
    std::vector<std::string> members;       // sorted
    std::vector<double> popularity;         // aligned with members, sums to 1
    std::vector<int> predecessor;           // member index → index of its predecessor call
};

/// The API universe a spec generates (deterministic in the seed).
std::vector<SynthType> synth_types(const SynthSpec& spec);

std::vector<CompletionInstance> synth_generate(const SynthSpec& spec);

}  // namespace codecomp
