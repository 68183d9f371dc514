#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "codecomp/providers.hpp"
#include "codecomp/ranker.hpp"

CODECOMP_NN_BEGIN

/// Client mistake: maps to HTTP 400.
class RequestError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct CompletionRequest {
    std::optional<std::string> source;               // raw code, tokenized server-side
    std::optional<std::vector<std::string>> tokens;  // or a pre-tokenized context
    std::optional<std::string> receiver;
    std::optional<std::vector<std::string>> candidates;
    std::optional<std::size_t> top_k;
};

/// Accepts {"context": "<code>" | [tokens], "receiver"?, "candidates"?, "top_k"?}.
CompletionRequest parse_request(const nlohmann::json& body);

struct CompletionResponse {
    RankedSuggestions suggestions;
    std::string model_id;
    double latency_ms = 0;
};

nlohmann::json to_json(const CompletionResponse& response);

/// Ranks completions for requests against one immutable model. Safe to call
/// from many threads; each call borrows its own encoding cache.
class CompletionService {
public:
    CompletionService(std::shared_ptr<const CompletionModel> model, std::string model_id, ApiTable api_table,
                      std::size_t default_top_k = 5);

    CompletionResponse complete(const CompletionRequest& request) const;
    nlohmann::json health() const;

    /// The instance and candidate list a request resolves to.
    std::pair<CompletionInstance, std::vector<std::string>> resolve(const CompletionRequest& request) const;

private:
    class CachePool;

    std::shared_ptr<const CompletionModel> model_;
    std::string model_id_;
    ApiTable api_table_;
    std::size_t default_top_k_;
    std::shared_ptr<CachePool> caches_;
};

/// HTTP front end: POST /complete, GET /health, permissive CORS.
class HttpServer {
public:
    explicit HttpServer(const CompletionService& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds (port 0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); blocks.
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

CODECOMP_NN_END
