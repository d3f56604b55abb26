#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "termrec/cooccurrence.hpp"
#include "termrec/pipeline.hpp"
#include "termrec/records.hpp"
#include "termrec/store.hpp"

namespace termrec::service {

inline constexpr std::string_view kMediaType = "application/json; version=1";
inline constexpr std::size_t kDefaultK = 10;
inline constexpr std::size_t kMaxK = 100;

/// A freshly issued key. `key` is the only copy of the plaintext.
struct IssuedKey {
    std::string key_id;
    std::string owner;
    std::string key;
    Clock::time_point created_at{};
};

class AuthError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// API keys have the form "<key_id>.<secret>". Only a salted BLAKE2b hash of
/// the secret is stored. The table is reloaded when the store reports a
/// change, so keys issued or revoked by another process take effect.
class KeyRegistry {
public:
    explicit KeyRegistry(store::Store& store);

    IssuedKey issue(const std::string& owner);
    /// Accepts a key id or a full key. Returns false if no such key exists.
    bool revoke(std::string_view key_or_id);
    /// The owner for a valid, unrevoked key.
    std::optional<std::string> authenticate(std::string_view presented) const;
    std::vector<StoredKey> list() const;

private:
    void refresh() const;

    store::Store& store_;
    mutable std::mutex mutex_;
    mutable std::optional<std::string> version_;
    mutable std::map<std::string, StoredKey> keys_;
};

/// Token bucket per key. A rate of zero or less disables limiting.
class RateLimiter {
public:
    explicit RateLimiter(double per_second, double burst = 0);
    bool allow(const std::string& key, std::chrono::steady_clock::time_point now = std::chrono::steady_clock::now());

private:
    struct Bucket {
        double tokens;
        std::chrono::steady_clock::time_point last;
    };
    double rate_;
    double burst_;
    std::mutex mutex_;
    std::map<std::string, Bucket> buckets_;
};

class BadQuery : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct SuggestParams {
    std::string term;
    std::size_t k = kDefaultK;
    cooc::Metric metric = cooc::Metric::jaccard;
};

/// Builds the suggest response body for one published snapshot. The query is
/// normalized with the snapshot's pipeline settings; several tokens are
/// aggregated. Throws BadQuery if nothing is left after normalization.
nlohmann::json suggest(const store::PublishedSnapshot& snapshot, const SuggestParams& params);

/// Full recommendation table of a snapshot.
nlohmann::json export_table(const store::PublishedSnapshot& snapshot, cooc::Metric metric, std::size_t per_term);

struct ServiceOptions {
    double rate_limit = 100;
    /// Credential for key management over HTTP; those endpoints are off when unset.
    std::optional<std::string> admin_token;
    /// Registering a repository with local files is only allowed when set.
    bool allow_file_sources = false;
    /// Transport used to identify endpoints at registration.
    pipeline::TransportFactory transport_factory;
};

struct ApiRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::optional<std::string> authorization;
    std::string body;
};

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
    std::map<std::string, std::string> headers;
};

/// HTTP-independent request handling. Safe to call from many threads.
class Service {
public:
    Service(store::Store& store, pipeline::Scheduler& scheduler, KeyRegistry& keys, ServiceOptions options = {});

    ApiResponse handle(const ApiRequest& request);

    /// Throws AuthError if the admin credential does not match.
    IssuedKey issue_api_key(std::string_view admin_credential, const std::string& owner);

private:
    ApiResponse register_repository(const std::string& owner, const ApiRequest& request);
    ApiResponse get_repository(const RepositoryRecord& repo);
    ApiResponse schedule(const RepositoryRecord& repo);
    ApiResponse get_job(const std::optional<std::string>& owner, const std::string& job_id);
    ApiResponse suggest_endpoint(const RepositoryRecord& repo, const ApiRequest& request);
    ApiResponse export_endpoint(const RepositoryRecord& repo, const ApiRequest& request);
    ApiResponse key_management(const ApiRequest& request, const std::vector<std::string>& segments);
    bool admin_ok(const ApiRequest& request) const;

    store::Store& store_;
    pipeline::Scheduler& scheduler_;
    KeyRegistry& keys_;
    ServiceOptions options_;
    RateLimiter limiter_;
};

ApiResponse error_response(int status, std::string_view code, std::string_view message);

/// Serves a Service over HTTP on a background thread pool.
class HttpServer {
public:
    explicit HttpServer(Service& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds and starts serving; port 0 picks a free port. Returns the bound port.
    int start(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Splits "host:port"; a bare port binds to 127.0.0.1.
std::pair<std::string, int> parse_listen(std::string_view text);

}  // namespace termrec::service
