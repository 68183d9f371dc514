#include "codecomp/synth.hpp"

#include "codecomp/tokenizers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

namespace codecomp {

namespace {

const std::vector<std::string> kVerbs = {
    "get",   "set",    "read",  "write",  "load",   "save",   "open",    "close",  "find",
    "parse", "render", "send",  "fetch",  "update", "delete", "create",  "build",  "compute",
    "reset", "merge",  "split", "apply",  "check",  "encode", "decode",  "sort",   "flush",
    "clear", "append", "scale", "format", "resolve"};

const std::vector<std::string> kNouns = {
    "file",    "name",   "path",    "buffer",  "array",   "matrix", "vector", "index",  "key",
    "value",   "table",  "row",     "column",  "shape",   "size",   "length", "header", "body",
    "request", "response", "token", "stream",  "socket",  "frame",  "image",  "pixel",  "color",
    "node",    "edge",   "graph",   "tree",    "leaf",    "model",  "layer",  "weight", "gradient",
    "batch",   "sample", "label",   "record",  "field",   "schema", "query",  "cursor", "session",
    "user",    "config", "option",  "channel", "message", "event",  "handler", "cache", "block",
    "chunk",   "line",   "word",    "char",    "date",    "time",   "zone",   "port",   "host",
    "url"};

const std::vector<std::string> kAdjectives = {"old", "new", "tmp", "raw", "last", "next", "my",
                                              "first", "total", "local", "current", "base"};

const std::vector<std::string> kKinds = {"Client", "Reader", "Writer", "Manager", "Store",
                                         "Parser", "Builder", "Engine", "View", "Pool"};

const std::vector<std::string> kReceivers = {"a", "b", "obj", "x", "y", "it", "ref", "inst",
                                             "handle", "ctx", "h", "z", "p", "q", "w"};

// Deterministic helpers over raw engine output (standard distributions are
// implementation-defined, which would break cross-platform reproducibility).
struct Rng {
    std::mt19937_64 engine;
    explicit Rng(std::uint64_t seed) : engine(seed) {}
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine() % n); }
    double uniform() { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }
    bool chance(double p) { return uniform() < p; }
    template <class T>
    const T& pick(const std::vector<T>& v) { return v[below(v.size())]; }
    std::size_t weighted(const std::vector<double>& weights) {
        double u = uniform();
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (u < weights[i]) return i;
            u -= weights[i];
        }
        return weights.size() - 1;
    }
};

std::string capitalize(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

std::vector<double> zipf(std::size_t n, double exponent) {
    std::vector<double> w(n);
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) total += w[i] = 1.0 / std::pow(static_cast<double>(i + 1), exponent);
    for (auto& v : w) v /= total;
    return w;
}

std::string member_name(const std::string& verb, const std::string& noun, bool camel) {
    return camel ? verb + capitalize(noun) : verb + "_" + noun;
}

// Variable name built from the target member's subtokens.
std::string cue_name(const std::vector<std::string>& parts, Rng& rng) {
    const std::string& verb = parts.front();
    const std::string noun = parts.size() > 1 ? parts[1] : parts.front();
    switch (rng.below(3)) {
        case 0: return noun + "_" + verb;
        case 1: return noun + capitalize(verb);
        default: return "my_" + noun + "_" + verb;
    }
}

// Variable name with no verb subtoken.
std::string noise_name(Rng& rng) {
    switch (rng.below(4)) {
        case 0: return rng.pick(kNouns);
        case 1: return rng.pick(kAdjectives) + "_" + rng.pick(kNouns);
        case 2: return rng.pick(kNouns) + capitalize(rng.pick(kNouns));
        default: return rng.pick(kNouns) + std::to_string(rng.below(4));
    }
}

}  // namespace

void SynthSpec::validate() const {
    auto unit = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!unit(subtoken_signal) || !unit(sequential_signal)) {
        throw std::invalid_argument("synth: signal strengths must lie in [0, 1]");
    }
    if (receiver_types <= 0 || methods_per_type <= 0 || instances <= 0 || libraries <= 0 ||
        instances_per_file <= 0 || min_noise_statements < 0 || max_noise_statements < min_noise_statements) {
        throw std::invalid_argument("synth: counts must be positive");
    }
    if (static_cast<std::size_t>(methods_per_type) > kNouns.size()) {
        throw std::invalid_argument("synth: at most " + std::to_string(kNouns.size()) + " methods per type");
    }
    if (static_cast<std::size_t>(receiver_types) * methods_per_type > kNouns.size() * kVerbs.size()) {
        throw std::invalid_argument("synth: not enough distinct member names");
    }
}

std::vector<SynthType> synth_types(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed * 0x9e3779b97f4a7c15ULL + 17);
    std::set<std::pair<std::string, std::string>> used;
    std::set<std::string> type_names;
    std::vector<SynthType> types;
    for (int t = 0; t < spec.receiver_types; ++t) {
        SynthType type;
        type.library = "lib" + std::to_string(t % spec.libraries);
        const bool camel = (t % spec.libraries) % 2 == 1;
        do {
            type.name = capitalize(rng.pick(kNouns)) + rng.pick(kKinds);
        } while (!type_names.insert(type.name).second);

        std::vector<std::string> nouns = kNouns;
        for (std::size_t i = nouns.size(); i > 1; --i) std::swap(nouns[i - 1], nouns[rng.below(i)]);
        for (const auto& noun : nouns) {
            if (static_cast<int>(type.members.size()) == spec.methods_per_type) break;
            std::vector<std::string> verbs;
            for (const auto& v : kVerbs) {
                if (!used.count({v, noun})) verbs.push_back(v);
            }
            if (verbs.empty()) continue;
            const std::string& verb = rng.pick(verbs);
            used.insert({verb, noun});
            type.members.push_back(member_name(verb, noun, camel));
        }
        if (static_cast<int>(type.members.size()) < spec.methods_per_type) {
            throw std::invalid_argument("synth: ran out of distinct member names");
        }
        std::sort(type.members.begin(), type.members.end());

        const std::size_t m = type.members.size();
        std::vector<std::size_t> rank(m);
        for (std::size_t i = 0; i < m; ++i) rank[i] = i;
        for (std::size_t i = m; i > 1; --i) std::swap(rank[i - 1], rank[rng.below(i)]);
        const auto weights = zipf(m, 1.0);
        type.popularity.resize(m);
        for (std::size_t i = 0; i < m; ++i) type.popularity[i] = weights[rank[i]];

        std::vector<int> perm(m);
        for (std::size_t i = 0; i < m; ++i) perm[i] = static_cast<int>(i);
        for (std::size_t i = m; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
        type.predecessor = perm;
        types.push_back(std::move(type));
    }
    return types;
}

std::vector<CompletionInstance> synth_generate(const SynthSpec& spec) {
    const auto types = synth_types(spec);
    const auto type_weights = zipf(types.size(), 0.5);
    Rng rng(spec.seed);
    std::vector<CompletionInstance> out;
    out.reserve(static_cast<std::size_t>(spec.instances));

    for (int n = 0; n < spec.instances; ++n) {
        const SynthType& type = types[rng.weighted(type_weights)];
        const std::size_t target = rng.weighted(type.popularity);
        const std::string recv = rng.pick(kReceivers) + (rng.chance(0.5) ? std::to_string(rng.below(10)) : "");

        std::vector<std::vector<std::string>> statements;
        statements.push_back({recv, "=", type.name, "(", noise_name(rng), ")"});

        const int noise = spec.min_noise_statements +
                          static_cast<int>(rng.below(static_cast<std::size_t>(
                              spec.max_noise_statements - spec.min_noise_statements + 1)));
        std::vector<std::vector<std::string>> body;
        for (int s = 0; s < noise; ++s) {
            if (rng.chance(0.6)) {
                const SynthType& other = types[rng.below(types.size())];
                std::string other_recv;
                do {
                    other_recv = rng.pick(kReceivers);
                } while (other_recv == recv);
                body.push_back({noise_name(rng), "=", other_recv, ".", rng.pick(other.members), "(",
                                noise_name(rng), ")"});
            } else {
                body.push_back({noise_name(rng), "=", noise_name(rng), "+", std::to_string(rng.below(100))});
            }
        }
        const std::size_t prior = rng.chance(spec.sequential_signal)
                                      ? static_cast<std::size_t>(type.predecessor[target])
                                      : rng.below(type.members.size());
        std::vector<std::string> prior_call = {recv, ".", type.members[prior], "(", noise_name(rng), ")"};
        body.insert(body.begin() + static_cast<std::ptrdiff_t>(rng.below(body.size() + 1)), prior_call);
        for (auto& s : body) statements.push_back(std::move(s));

        const std::string lhs = rng.chance(spec.subtoken_signal)
                                    ? cue_name(split_subtokens(type.members[target]), rng)
                                    : noise_name(rng);
        statements.push_back({lhs, "=", recv, "."});

        CompletionInstance inst;
        const int file = n / spec.instances_per_file;
        inst.id = "f" + std::to_string(file) + ":" + std::to_string(n % spec.instances_per_file);
        for (const auto& s : statements) {
            inst.context_tokens.insert(inst.context_tokens.end(), s.begin(), s.end());
        }
        for (std::size_t i = 0; i < inst.context_tokens.size(); ++i) {
            if (inst.context_tokens[i] == recv) inst.receiver_mask.push_back(static_cast<int>(i));
        }
        inst.candidates = type.members;
        inst.target = type.members[target];
        inst.library = type.library;
        truncate_context(inst, spec.max_context);
        out.push_back(std::move(inst));
    }
    return out;
}

}  // namespace codecomp
