#include "codecomp/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <set>

#include "codecomp/tokenizers.hpp"

CODECOMP_NN_BEGIN

namespace {

std::vector<std::string> string_list(const nlohmann::json& j, const char* field) {
    if (!j.is_array()) throw RequestError(std::string("'") + field + "' must be an array of strings");
    std::vector<std::string> out;
    for (const auto& item : j) {
        if (!item.is_string()) throw RequestError(std::string("'") + field + "' must be an array of strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

}  // namespace

CompletionRequest parse_request(const nlohmann::json& body) {
    if (!body.is_object()) throw RequestError("request body must be a JSON object");
    CompletionRequest request;
    if (!body.contains("context")) throw RequestError("missing 'context'");
    const auto& context = body.at("context");
    if (context.is_string()) {
        request.source = context.get<std::string>();
    } else {
        request.tokens = string_list(context, "context");
    }
    if (body.contains("receiver") && !body.at("receiver").is_null()) {
        if (!body.at("receiver").is_string()) throw RequestError("'receiver' must be a string");
        request.receiver = body.at("receiver").get<std::string>();
    }
    if (body.contains("candidates") && !body.at("candidates").is_null()) {
        request.candidates = string_list(body.at("candidates"), "candidates");
    }
    if (body.contains("top_k") && !body.at("top_k").is_null()) {
        const auto& k = body.at("top_k");
        if (!k.is_number_integer() || k.get<long long>() < 1) throw RequestError("'top_k' must be a positive integer");
        request.top_k = k.get<std::size_t>();
    }
    return request;
}

nlohmann::json to_json(const CompletionResponse& response) {
    nlohmann::json suggestions = nlohmann::json::array();
    for (const auto& s : response.suggestions) {
        suggestions.push_back({{"candidate", s.candidate}, {"probability", s.probability}});
    }
    return {{"suggestions", suggestions}, {"model_id", response.model_id}, {"latency_ms", response.latency_ms}};
}

class CompletionService::CachePool {
public:
    std::unique_ptr<EncodingCache> acquire() {
        std::lock_guard lock(mutex_);
        if (free_.empty()) return std::make_unique<EncodingCache>();
        auto cache = std::move(free_.back());
        free_.pop_back();
        return cache;
    }

    void release(std::unique_ptr<EncodingCache> cache) {
        std::lock_guard lock(mutex_);
        free_.push_back(std::move(cache));
    }

private:
    std::mutex mutex_;
    std::vector<std::unique_ptr<EncodingCache>> free_;
};

CompletionService::CompletionService(std::shared_ptr<const CompletionModel> model, std::string model_id,
                                     ApiTable api_table, std::size_t default_top_k)
    : model_(std::move(model)),
      model_id_(std::move(model_id)),
      api_table_(std::move(api_table)),
      default_top_k_(default_top_k),
      caches_(std::make_shared<CachePool>()) {
    if (!model_) throw std::invalid_argument("service: no model");
    if (default_top_k_ == 0) throw std::invalid_argument("service: top-k must be positive");
}

std::pair<CompletionInstance, std::vector<std::string>> CompletionService::resolve(
    const CompletionRequest& request) const {
    CompletionInstance instance;
    instance.id = "request";
    if (request.source) {
        instance.context_tokens = tokenize_source(*request.source);
    } else if (request.tokens) {
        instance.context_tokens = *request.tokens;
    } else {
        throw RequestError("missing 'context'");
    }
    if (instance.context_tokens.empty()) throw RequestError("context has no tokens");

    const std::string receiver = request.receiver ? *request.receiver : receiver_of(instance.context_tokens);
    if (!receiver.empty()) {
        for (std::size_t i = 0; i < instance.context_tokens.size(); ++i) {
            if (instance.context_tokens[i] == receiver) instance.receiver_mask.push_back(static_cast<int>(i));
        }
    }

    std::vector<std::string> candidates;
    if (request.candidates) {
        std::set<std::string> seen;
        for (const auto& c : *request.candidates) {
            if (seen.insert(c).second) candidates.push_back(c);
        }
        if (candidates.empty()) throw RequestError("'candidates' is empty");
    } else if (model_->config().provider == ProviderKind::vocab) {
        candidates = model_->vocab_provider().members();
    } else {
        if (receiver.empty()) throw RequestError("no receiver: the context must end with '<name> .'");
        if (api_table_.empty()) throw RequestError("no API table loaded; pass explicit 'candidates'");
        candidates = provide_scope(api_table_, instance.context_tokens, receiver).candidates;
    }
    if (candidates.empty()) throw RequestError("no candidates for receiver '" + receiver + "'");
    truncate_context(instance, model_->config().context_size);
    return {std::move(instance), std::move(candidates)};
}

CompletionResponse CompletionService::complete(const CompletionRequest& request) const {
    auto [instance, candidates] = resolve(request);
    const std::size_t top_k = request.top_k.value_or(default_top_k_);

    auto cache = caches_->acquire();
    const auto start = std::chrono::steady_clock::now();
    RankedSuggestions ranked;
    try {
        ranked = model_->rank(instance, candidates, *cache);
    } catch (...) {
        caches_->release(std::move(cache));
        throw;
    }
    const auto stop = std::chrono::steady_clock::now();
    caches_->release(std::move(cache));

    if (ranked.size() > top_k) ranked.resize(top_k);
    return {std::move(ranked), model_id_, std::chrono::duration<double, std::milli>(stop - start).count()};
}

nlohmann::json CompletionService::health() const {
    return {{"status", "ok"},
            {"model_id", model_id_},
            {"parameter_count", model_->parameter_count()},
            {"config", model_->config().describe()}};
}

struct HttpServer::Impl {
    const CompletionService& service;
    httplib::Server server;
};

namespace {

void allow_cors(httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    allow_cors(res);
    res.set_content(body.dump(), "application/json");
}

}  // namespace

HttpServer::HttpServer(const CompletionService& service) : impl_(new Impl{service, {}}) {
    auto& server = impl_->server;
    const CompletionService* svc = &service;
    server.Get("/health", [svc](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, svc->health());
    });
    server.Post("/complete", [svc](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception& e) {
            send_json(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
            return;
        }
        try {
            send_json(res, 200, to_json(svc->complete(parse_request(body))));
        } catch (const RequestError& e) {
            send_json(res, 400, {{"error", e.what()}});
        } catch (const std::exception& e) {
            send_json(res, 500, {{"error", e.what()}});
        }
    });
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.status = 204;
        allow_cors(res);
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
        send_json(res, 500, {{"error", "internal error"}});
    });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw std::runtime_error("cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
}

CODECOMP_NN_END
