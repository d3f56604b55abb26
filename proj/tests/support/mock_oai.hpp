#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "termrec/oai_harvester.hpp"

namespace termrec::testing {

struct MockOaiOptions {
    std::string repository_name = "TestRepo";
    std::size_t page_size = 100;
    /// The first resumption token handed out is rejected once with badResumptionToken.
    bool expire_first_token = false;
    /// Every resumption token is rejected.
    bool reject_all_tokens = false;
    /// Every request answers with this HTTP status when non-zero.
    int persistent_status = 0;
    /// The next N requests answer with `transient_status`.
    int transient_failures = 0;
    int transient_status = 503;
    std::optional<std::string> retry_after;
    /// Answer ListRecords with an HTML page.
    bool html_body = false;
    /// Sleep before answering each ListRecords request.
    std::chrono::milliseconds page_delay{0};
};

/// An OAI-PMH endpoint on 127.0.0.1 backed by an in-memory record list.
class MockOaiServer {
public:
    explicit MockOaiServer(std::vector<oai::RawRecord> records = {}, MockOaiOptions options = {});
    ~MockOaiServer();
    MockOaiServer(const MockOaiServer&) = delete;
    MockOaiServer& operator=(const MockOaiServer&) = delete;

    std::string base_url() const;
    int port() const { return port_; }

    void set_records(std::vector<oai::RawRecord> records);
    void set_options(MockOaiOptions options);

    std::size_t requests() const { return requests_; }
    std::size_t list_requests() const { return list_requests_; }
    std::size_t token_rejections() const { return token_rejections_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
    std::atomic<std::size_t> requests_{0};
    std::atomic<std::size_t> list_requests_{0};
    std::atomic<std::size_t> token_rejections_{0};
};

struct HttpResult {
    int status = 0;
    std::string body;
    std::map<std::string, std::string> headers;
};

/// Minimal blocking HTTP client for talking to the service in tests.
HttpResult http_request(int port, const std::string& method, const std::string& path,
                        const std::optional<std::string>& bearer = std::nullopt, const std::string& body = "");

}  // namespace termrec::testing
