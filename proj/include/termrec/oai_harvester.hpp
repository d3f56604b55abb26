#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "termrec/datestamp.hpp"

namespace termrec::xml {
struct Element;
}

namespace termrec::oai {

inline constexpr std::string_view kOaiNamespace = "http://www.openarchives.org/OAI/2.0/";
inline constexpr std::string_view kOaiDcNamespace = "http://www.openarchives.org/OAI/2.0/oai_dc/";
inline constexpr std::string_view kDcNamespace = "http://purl.org/dc/elements/1.1/";

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct EndpointConfig {
    std::string base_url;
    std::string metadata_prefix = "oai_dc";
    std::optional<std::string> set_spec;
    std::optional<Datestamp> from;
    std::optional<Datestamp> until;
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{500};
    std::chrono::seconds request_timeout{60};

    /// Throws ConfigError naming the first violated constraint.
    void validate() const;
};

/// Pieces of an absolute http(s) URL.
struct ParsedUrl {
    std::string scheme;
    std::string host;
    int port = 0;
    std::string path;   // starts with '/'
    std::string query;  // without the leading '?'

    std::string origin() const;
};

std::optional<ParsedUrl> parse_url(std::string_view url);
std::string url_encode(std::string_view s);

struct RepositoryDescription {
    std::string name;
    std::string protocol_version;
    std::string earliest_datestamp;
    std::string granularity;
};

struct RawRecord {
    std::string identifier;
    Datestamp datestamp;
    bool deleted = false;
    std::optional<std::string> metadata_xml;

    friend bool operator==(const RawRecord&, const RawRecord&) = default;
};

struct HarvestPage {
    std::vector<RawRecord> records;
    std::optional<std::string> resumption_token;
    std::optional<std::size_t> complete_list_size;
    /// Set when the server answered with the noRecordsMatch error condition.
    bool no_records_match = false;

    bool is_final() const { return !resumption_token.has_value(); }
};

class HarvestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Transport failure or retryable HTTP status after all retries were spent.
class NetworkError : public HarvestError {
public:
    NetworkError(const std::string& message, int attempts)
        : HarvestError(message), attempts_(attempts) {}
    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

class MalformedResponse : public HarvestError {
public:
    using HarvestError::HarvestError;
};

/// An OAI-PMH <error> element. The code and message are the server's, verbatim.
class ProtocolError : public HarvestError {
public:
    ProtocolError(std::string code, std::string message)
        : HarvestError(code + ": " + message), code_(std::move(code)), message_(std::move(message)) {}
    const std::string& code() const noexcept { return code_; }
    const std::string& server_message() const noexcept { return message_; }

private:
    std::string code_;
    std::string message_;
};

class BadResumptionToken : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};

/// A second badResumptionToken after a restart.
class RestartLoop : public HarvestError {
public:
    using HarvestError::HarvestError;
};

struct HttpResponse {
    int status = 0;
    std::string body;
    std::optional<std::string> retry_after;
};

/// Blocking GET. Returns nullopt when no HTTP response was obtained.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual std::optional<HttpResponse> get(const std::string& url) = 0;
};

std::unique_ptr<HttpTransport> make_http_transport(std::chrono::seconds timeout);

using Sleeper = std::function<void(std::chrono::milliseconds)>;
using ProgressFn = std::function<void(std::size_t records_so_far)>;

inline constexpr std::chrono::seconds kRetryAfterCap{300};

/// OAI-PMH client for one endpoint. Requests are issued strictly in sequence.
class Client {
public:
    explicit Client(EndpointConfig config, std::unique_ptr<HttpTransport> transport = nullptr,
                    Sleeper sleeper = nullptr);

    RepositoryDescription identify();

    /// One ListRecords request. badResumptionToken surfaces as BadResumptionToken,
    /// noRecordsMatch as an empty final page with `no_records_match` set.
    HarvestPage harvest_page(const std::optional<std::string>& token);

    /// Follows resumption tokens to completion. Records are deduplicated by
    /// identifier, keeping the latest datestamp; first-seen order is kept.
    std::vector<RawRecord> harvest_all(const ProgressFn& progress = nullptr);

    const EndpointConfig& config() const { return config_; }

    std::string list_records_url(const std::optional<std::string>& token) const;
    std::string identify_url() const;

private:
    xml::Element fetch(const std::string& url);

    EndpointConfig config_;
    std::unique_ptr<HttpTransport> transport_;
    Sleeper sleeper_;
};

/// Extracts header and metadata from an OAI `record` element.
RawRecord parse_record(const xml::Element& record);

struct IngestFailure {
    std::filesystem::path path;
    std::optional<std::size_t> byte_offset;
    std::string message;
};

struct IngestResult {
    std::vector<RawRecord> records;
    std::vector<IngestFailure> failures;
};

/// Reads oai_dc records from local files. Each file may hold a single
/// `record`, any element wrapping several records, a full OAI-PMH response,
/// or bare oai_dc:dc elements. Directories are expanded to their *.xml files.
/// A file that fails to parse is reported and skipped.
IngestResult ingest_files(std::span<const std::filesystem::path> paths);

/// Keeps the latest datestamp per identifier, preserving first-seen order.
class RecordDeduplicator {
public:
    /// Returns true if the record introduced a new identifier.
    bool add(RawRecord record);
    std::size_t size() const { return records_.size(); }
    std::vector<RawRecord> take() && { return std::move(records_); }

private:
    std::vector<RawRecord> records_;
    std::unordered_map<std::string, std::size_t> positions_;
};

/// Writes records as an OAI-PMH ListRecords document that ingest_files reads back.
std::string write_records_document(std::span<const RawRecord> records);

}  // namespace termrec::oai
