#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "codecomp/evaluation.hpp"
#include "codecomp/model_io.hpp"
#include "codecomp/service.hpp"
#include "codecomp/tokenizers.hpp"

namespace codecomp::cli {

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long n = -1;
    try {
        n = std::stoll(v, &used);
    } catch (const std::exception&) {
    }
    if (used != v.size() || n <= 0) throw UsageError("setting '" + key + "' needs a positive integer, got '" + v + "'");
    return static_cast<std::size_t>(n);
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double x = 0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) throw UsageError("setting '" + key + "' needs a number, got '" + v + "'");
    return x;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw UsageError("setting '" + key + "' needs true/false, got '" + v + "'");
}

template <class F>
void take(Settings& s, const std::string& key, F&& apply) {
    auto it = s.find(key);
    if (it == s.end()) return;
    apply(it->second);
    s.erase(it);
}

void reject_leftovers(const Settings& s) {
    if (s.empty()) return;
    std::string keys;
    for (const auto& [k, _] : s) keys += (keys.empty() ? "" : ", ") + k;
    throw UsageError("unknown setting(s): " + keys);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<CompletionInstance> load_data(const std::string& path, std::size_t context_size) {
    if (path.empty()) throw UsageError("--data is required");
    if (!std::filesystem::exists(path)) throw UsageError("data file not found: " + path);
    return load_dataset(path, context_size);
}

DatasetSplit split_data(const std::vector<CompletionInstance>& data, std::uint64_t seed, const std::string& holdout) {
    DatasetSplit s = split(dedup(data), {0.6, 0.2, 0.2}, file_group, seed);
    return holdout.empty() ? s : holdout_library(s, holdout);
}

std::vector<std::string> comma_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void print_report(std::ostream& out, const std::string& label, const EvalReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-34s %9.4f %9.4f %9.4f %10zu %11zu %9.3f\n", label.c_str(), r.recall_at_1,
                  r.recall_at_5, r.mrr, r.parameter_count, r.size_bytes, r.latency.mean_ms);
    out << buf;
}

void print_header(std::ostream& out) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-34s %9s %9s %9s %10s %11s %9s\n", "model", "Recall@1", "Recall@5", "MRR",
                  "params", "bytes", "time_ms");
    out << buf;
}

std::atomic<HttpServer*> g_server{nullptr};

extern "C" void on_signal(int) {
    if (auto* s = g_server.load()) s->stop();
}

}  // namespace

Settings parse_settings(const std::vector<std::string>& config_args) {
    Settings out;
    for (const auto& arg : config_args) {
        const auto eq = arg.find('=');
        if (eq != std::string::npos) {
            out[arg.substr(0, eq)] = arg.substr(eq + 1);
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(arg));
        } catch (const nlohmann::json::exception& e) {
            throw UsageError("config file " + arg + ": " + e.what());
        }
        if (!j.is_object()) throw UsageError("config file " + arg + " must hold a JSON object");
        for (const auto& [k, v] : j.items()) out[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
    return out;
}

void apply_train_settings(TrainConfig& c, Settings& s) {
    auto& m = c.model;
    take(s, "token", [&](const std::string& v) { m.token.kind = token_encoder_kind_from_string(v); });
    take(s, "context", [&](const std::string& v) { m.context.kind = context_encoder_kind_from_string(v); });
    take(s, "provider", [&](const std::string& v) { m.provider = provider_kind_from_string(v); });
    take(s, "annotate", [&](const std::string& v) { m.annotate = to_bool("annotate", v); });
    take(s, "dim", [&](const std::string& v) { m.token.dim = to_size("dim", v); });
    take(s, "hidden", [&](const std::string& v) { m.context.hidden = to_size("hidden", v); });
    take(s, "layers", [&](const std::string& v) { m.context.layers = to_size("layers", v); });
    take(s, "kernel", [&](const std::string& v) { m.context.kernel = to_size("kernel", v); });
    take(s, "heads", [&](const std::string& v) { m.context.heads = to_size("heads", v); });
    take(s, "ff_multiplier", [&](const std::string& v) { m.context.ff_multiplier = to_size("ff_multiplier", v); });
    take(s, "vocab_size", [&](const std::string& v) { m.token.vocab_size = to_size("vocab_size", v); });
    take(s, "bpe_merges", [&](const std::string& v) { m.token.bpe_merges = to_size("bpe_merges", v); });
    take(s, "hash_modulus", [&](const std::string& v) { m.token.hash_modulus = to_size("hash_modulus", v); });
    take(s, "alphabet_size", [&](const std::string& v) { m.token.alphabet_size = to_size("alphabet_size", v); });
    take(s, "char_filters", [&](const std::string& v) { m.token.char_filters = to_size("char_filters", v); });
    take(s, "max_units", [&](const std::string& v) { m.token.max_units = to_size("max_units", v); });
    take(s, "context_size", [&](const std::string& v) { m.context_size = to_size("context_size", v); });
    take(s, "vocab_provider_size", [&](const std::string& v) { m.vocab_provider_size = to_size("vocab_provider_size", v); });
    take(s, "vocab_provider_coverage", [&](const std::string& v) {
        m.vocab_provider_coverage = to_double("vocab_provider_coverage", v);
    });
    take(s, "batch_size", [&](const std::string& v) { c.batch_size = to_size("batch_size", v); });
    take(s, "learning_rate", [&](const std::string& v) { c.learning_rate = to_double("learning_rate", v); });
    take(s, "max_epochs", [&](const std::string& v) { c.max_epochs = to_size("max_epochs", v); });
    take(s, "patience", [&](const std::string& v) { c.patience = to_size("patience", v); });
    take(s, "clip_norm", [&](const std::string& v) { c.clip_norm = to_double("clip_norm", v); });
}

void apply_synth_settings(SynthSpec& spec, Settings& s) {
    auto int_of = [](const std::string& key, const std::string& v) { return static_cast<int>(to_size(key, v)); };
    take(s, "instances", [&](const std::string& v) { spec.instances = int_of("instances", v); });
    take(s, "receiver_types", [&](const std::string& v) { spec.receiver_types = int_of("receiver_types", v); });
    take(s, "methods_per_type", [&](const std::string& v) { spec.methods_per_type = int_of("methods_per_type", v); });
    take(s, "libraries", [&](const std::string& v) { spec.libraries = int_of("libraries", v); });
    take(s, "instances_per_file", [&](const std::string& v) { spec.instances_per_file = int_of("instances_per_file", v); });
    take(s, "subtoken_signal", [&](const std::string& v) { spec.subtoken_signal = to_double("subtoken_signal", v); });
    take(s, "sequential_signal", [&](const std::string& v) { spec.sequential_signal = to_double("sequential_signal", v); });
}

namespace {

int cmd_synth(const std::string& out_path, const std::string& api_out, std::uint64_t seed,
              const std::vector<std::string>& config, std::ostream& out) {
    if (out_path.empty()) throw UsageError("--out is required");
    SynthSpec spec;
    spec.seed = seed;
    Settings s = parse_settings(config);
    apply_synth_settings(spec, s);
    reject_leftovers(s);
    const auto data = synth_generate(spec);
    save_dataset(out_path, data);
    if (!api_out.empty()) {
        nlohmann::json table = nlohmann::json::object();
        for (const auto& type : synth_types(spec)) table[type.name] = type.members;
        write_file_atomic(api_out, table.dump(2) + "\n");
    }
    out << "wrote " << data.size() << " instances to " << out_path << "\n";
    return 0;
}

int cmd_train(const std::string& data_path, const std::string& out_path, std::uint64_t seed,
              const std::vector<std::string>& config, const std::string& log_path, const std::string& holdout,
              std::ostream& out) {
    if (out_path.empty()) throw UsageError("--out is required");
    TrainConfig tc;
    tc.seed = seed;
    Settings s = parse_settings(config);
    apply_train_settings(tc, s);
    reject_leftovers(s);
    tc.validate();
    const DatasetSplit sp = split_data(load_data(data_path, tc.model.context_size), seed, holdout);

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path);
        if (!log) throw UsageError("cannot write " + log_path);
    }
    out << "training " << tc.model.describe() << " on " << sp.train.size() << " instances (" << sp.valid.size()
        << " validation)\n";
    auto result = train(tc, sp, [&](const EpochRecord& e) {
        out << format_epoch(e) << "\n" << std::flush;
        if (log) log << format_epoch(e) << "\n" << std::flush;
    });
    save_model(result.model, out_path);
    out << "best epoch " << result.best_epoch << " valid_mrr " << result.best_valid_mrr << "; "
        << result.model.parameter_count() << " parameters; wrote " << out_path << "\n";
    if (result.dropped_instances) {
        out << result.dropped_instances << " training instances had targets outside the Vocab provider\n";
    }
    return 0;
}

int cmd_eval(const std::string& data_path, const std::string& model_path, const std::string& out_path,
             std::uint64_t seed, const std::string& which, const std::string& holdout, std::size_t latency_reps,
             std::ostream& out) {
    if (model_path.empty()) throw UsageError("--model is required");
    const LoadedModel loaded = load_model(model_path);
    const auto& model = loaded.model;
    const auto data = load_data(data_path, model.config().context_size);
    DatasetSplit sp;
    if (which == "all") {
        sp.train = data;
        sp.test = holdout.empty() ? data : holdout_library({{}, {}, data}, holdout).test;
    } else if (which == "test") {
        sp = split_data(data, seed, holdout);
    } else {
        throw UsageError("--split must be 'test' or 'all'");
    }
    if (sp.test.empty()) throw UsageError("no evaluation instances");

    EvalOptions options;
    options.latency_repetitions = latency_reps;
    EvalReport report = holdout.empty() ? evaluate(model, sp.test, options)
                                        : generalization_eval(model, sp.test, holdout, seed, options);
    report.extra["model_id"] = loaded.id;
    report.extra["file_bytes"] = loaded.file_bytes;

    print_header(out);
    print_report(out, model.config().describe(), report);
    if (!sp.train.empty()) {
        const auto pop = report_from_ranks(baseline_ranks(PopularityBaseline(sp.train), sp.test));
        print_report(out, "popularity baseline", pop);
        report.extra["popularity_mrr"] = pop.mrr;
        report.extra["popularity_recall_at_1"] = pop.recall_at_1;
        report.extra["popularity_recall_at_5"] = pop.recall_at_5;
    }
    RandomBaseline random(seed);
    print_report(out, "random baseline", report_from_ranks(baseline_ranks(random, sp.test)));
    out << "latency ms: mean " << report.latency.mean_ms << " stddev " << report.latency.stddev_ms << " p50 "
        << report.latency.p50_ms << " p95 " << report.latency.p95_ms << " (" << report.latency.samples
        << " unbatched suggestions)\n";
    if (!out_path.empty()) write_file_atomic(out_path, to_json(report).dump(2) + "\n");
    return 0;
}

int cmd_sweep(const std::string& data_path, const std::string& out_path, std::uint64_t seed,
              const std::vector<std::string>& config, const std::string& configs_path, std::size_t count,
              std::size_t latency_reps, std::ostream& out) {
    if (out_path.empty()) throw UsageError("--out is required");
    TrainConfig base;
    base.seed = seed;
    Settings s = parse_settings(config);
    apply_train_settings(base, s);
    reject_leftovers(s);

    std::vector<TrainConfig> configs;
    if (!configs_path.empty()) {
        nlohmann::json list;
        try {
            list = nlohmann::json::parse(read_file(configs_path));
        } catch (const nlohmann::json::exception& e) {
            throw UsageError("sweep configs " + configs_path + ": " + e.what());
        }
        if (!list.is_array()) throw UsageError("sweep configs must be a JSON array of objects");
        for (const auto& item : list) {
            if (!item.is_object()) throw UsageError("sweep configs must be a JSON array of objects");
            TrainConfig c = base;
            Settings overrides;
            for (const auto& [k, v] : item.items()) overrides[k] = v.is_string() ? v.get<std::string>() : v.dump();
            apply_train_settings(c, overrides);
            reject_leftovers(overrides);
            configs.push_back(c);
        }
    } else {
        configs = sample_sweep(base, count, seed);
    }
    for (const auto& c : configs) c.validate();

    const DatasetSplit sp = split_data(load_data(data_path, base.model.context_size), seed, "");
    EvalOptions options;
    options.latency_repetitions = latency_reps;

    std::ostringstream rows;
    const auto results = run_sweep(configs, sp, options, &rows);
    write_file_atomic(out_path, rows.str());

    std::vector<ParetoPoint> points;
    for (const auto& r : results) points.push_back(pareto_point(r.report));
    const auto front = pareto_front(points);
    std::filesystem::path csv_path = out_path;
    csv_path.replace_extension(".csv");
    write_file_atomic(csv_path, pareto_csv(points));
    std::filesystem::path front_path = out_path;
    front_path.replace_extension(".pareto.csv");
    write_file_atomic(front_path, pareto_csv(front));

    print_header(out);
    for (const auto& r : results) print_report(out, r.config.model.describe(), r.report);
    out << "pareto front (" << front.size() << " of " << points.size() << "):\n";
    for (const auto& p : front) out << "  " << p.config.value("descriptor", std::string("?")) << "\n";
    out << "wrote " << out_path << ", " << csv_path.string() << ", " << front_path.string() << "\n";
    return 0;
}

ApiTable maybe_api_table(const std::string& path) {
    if (path.empty()) return {};
    if (!std::filesystem::exists(path)) throw UsageError("API table not found: " + path);
    return load_api_table(path);
}

int cmd_complete(const std::string& model_path, const std::string& api_path, const std::string& candidates,
                 std::size_t top_k, std::istream& in, std::ostream& out) {
    if (model_path.empty()) throw UsageError("--model is required");
    LoadedModel loaded = load_model(model_path);
    const std::string id = loaded.id;
    auto model = std::make_shared<const CompletionModel>(std::move(loaded.model));
    CompletionService service(model, id, maybe_api_table(api_path), top_k);
    const auto fixed = comma_list(candidates);

    out << "codecomp " << model->config().describe() << " — end a line with '.' to complete, Ctrl-D to quit\n";
    std::string session;
    std::string line;
    while (out << "> " << std::flush, std::getline(in, line)) {
        session += line + "\n";
        const auto tokens = tokenize_source(session);
        if (tokens.empty() || tokens.back() != ".") {
            out << "no completion point (end the line with '<receiver>.'); line kept as context\n";
            continue;
        }
        CompletionRequest request;
        request.tokens = tokens;
        if (!fixed.empty()) request.candidates = fixed;
        try {
            const auto response = service.complete(request);
            char buf[160];
            for (const auto& s : response.suggestions) {
                std::snprintf(buf, sizeof buf, "  %-28s %.4f\n", s.candidate.c_str(), s.probability);
                out << buf;
            }
        } catch (const RequestError& e) {
            out << "cannot complete: " << e.what() << "\n";
        }
        // The completion point is not part of later context.
        session.erase(session.size() - 1);
        session.erase(session.rfind('.'));
        session += "\n";
    }
    out << "\n";
    return 0;
}

int cmd_serve(const std::string& model_path, const std::string& api_path, const std::string& host, int port,
              std::size_t top_k, std::ostream& out) {
    if (model_path.empty()) throw UsageError("--model is required");
    LoadedModel loaded = load_model(model_path);
    const std::string id = loaded.id;
    auto model = std::make_shared<const CompletionModel>(std::move(loaded.model));
    CompletionService service(model, id, maybe_api_table(api_path), top_k);
    HttpServer server(service);
    const int bound = server.bind(host, port);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    out << "serving " << model->config().describe() << " (model " << id << ") on http://" << host << ":" << bound
        << "\n" << std::flush;
    server.run();
    g_server = nullptr;
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"Neural reranking of code completion candidates"};
    app.require_subcommand(1);

    std::string data, model, out_path, log_path, api_table, candidates, holdout, which = "test", configs_path;
    std::string host = "127.0.0.1";
    std::vector<std::string> config;
    std::uint64_t seed = 1;
    int port = 8080;
    std::size_t top_k = 5, count = 3, latency_reps = 100;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic API-usage corpus (JSON Lines)");
    synth->add_option("--out", out_path, "Dataset to write")->required();
    synth->add_option("--api-table", api_table, "Also write the generated API table (JSON)");
    synth->add_option("--seed", seed, "Random seed");
    synth->add_option("--config", config, "key=value or JSON file (instances, receiver_types, ...)");

    auto* train_cmd = app.add_subcommand("train", "Train a model with early stopping");
    train_cmd->add_option("--data", data, "Dataset (JSON Lines)")->required();
    train_cmd->add_option("--out", out_path, "Model file to write")->required();
    train_cmd->add_option("--seed", seed, "Seed for splitting, initialization and shuffling");
    train_cmd->add_option("--config", config, "key=value or JSON file (token, context, provider, dim, ...)");
    train_cmd->add_option("--log", log_path, "Metrics log file");
    train_cmd->add_option("--holdout", holdout, "Exclude this library tag from training");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model: Recall@1/5, MRR, size, latency");
    eval_cmd->add_option("--data", data, "Dataset (JSON Lines)")->required();
    eval_cmd->add_option("--model", model, "Model file")->required();
    eval_cmd->add_option("--out", out_path, "Report JSON to write");
    eval_cmd->add_option("--seed", seed, "Seed used for the split at training time");
    eval_cmd->add_option("--split", which, "'test' (default) or 'all'");
    eval_cmd->add_option("--holdout", holdout, "Evaluate only on this unseen library tag");
    eval_cmd->add_option("--latency-reps", latency_reps, "Timed unbatched suggestions (0 skips)");

    auto* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate several configurations");
    sweep_cmd->add_option("--data", data, "Dataset (JSON Lines)")->required();
    sweep_cmd->add_option("--out", out_path, "Results (JSON Lines); CSVs are written alongside")->required();
    sweep_cmd->add_option("--seed", seed, "Seed");
    sweep_cmd->add_option("--config", config, "Base settings, key=value or JSON file");
    sweep_cmd->add_option("--configs", configs_path, "JSON array of setting objects, one per configuration");
    sweep_cmd->add_option("--count", count, "Random configurations to sample when --configs is absent");
    sweep_cmd->add_option("--latency-reps", latency_reps, "Timed unbatched suggestions per configuration");

    auto* complete_cmd = app.add_subcommand("complete", "Interactive completion prompt");
    complete_cmd->add_option("--model", model, "Model file")->required();
    complete_cmd->add_option("--api-table", api_table, "Type → members table (JSON)");
    complete_cmd->add_option("--candidates", candidates, "Comma-separated candidates overriding the API table");
    complete_cmd->add_option("--top-k", top_k, "Suggestions to show");

    auto* serve_cmd = app.add_subcommand("serve", "HTTP completion service");
    serve_cmd->add_option("--model", model, "Model file")->required();
    serve_cmd->add_option("--api-table", api_table, "Type → members table (JSON)");
    serve_cmd->add_option("--host", host, "Address to bind");
    serve_cmd->add_option("--port", port, "Port (0 picks a free one)");
    serve_cmd->add_option("--top-k", top_k, "Default number of suggestions");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (top_k == 0) throw UsageError("--top-k must be positive");
        if (*synth) return cmd_synth(out_path, api_table, seed, config, out);
        if (*train_cmd) return cmd_train(data, out_path, seed, config, log_path, holdout, out);
        if (*eval_cmd) return cmd_eval(data, model, out_path, seed, which, holdout, latency_reps, out);
        if (*sweep_cmd) return cmd_sweep(data, out_path, seed, config, configs_path, count, latency_reps, out);
        if (*complete_cmd) return cmd_complete(model, api_table, candidates, top_k, in, out);
        if (*serve_cmd) return cmd_serve(model, api_table, host, port, top_k, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace codecomp::cli
