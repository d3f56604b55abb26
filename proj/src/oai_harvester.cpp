#include "termrec/oai_harvester.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include "termrec/xml.hpp"

namespace termrec::oai {

namespace {

std::string trim(std::string_view s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos)
        return {};
    auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

// OAI elements are matched in the OAI namespace or, for hand-written files,
// without a namespace.
const xml::Element* oai_child(const xml::Element& parent, std::string_view local) {
    if (auto* c = parent.first_child(kOaiNamespace, local))
        return c;
    return parent.first_child("", local);
}

bool is_oai(const xml::Element& e, std::string_view local) {
    return e.name.local == local && (e.name.ns == kOaiNamespace || e.name.ns.empty());
}

void collect_records(const xml::Element& e, std::vector<const xml::Element*>& out) {
    if (is_oai(e, "record")) {
        out.push_back(&e);
        return;
    }
    for (const auto& c : e.children)
        collect_records(c, out);
}

std::optional<std::chrono::milliseconds> parse_retry_after(const std::optional<std::string>& header) {
    if (!header)
        return std::nullopt;
    std::string value = trim(*header);
    if (value.empty() || !std::all_of(value.begin(), value.end(), [](unsigned char c) { return std::isdigit(c); }))
        return std::nullopt;
    long long secs = 0;
    for (char c : value) {
        secs = secs * 10 + (c - '0');
        if (secs > kRetryAfterCap.count())
            return std::chrono::milliseconds(kRetryAfterCap);
    }
    return std::chrono::seconds(secs);
}

void check_error(const xml::Element& root) {
    const xml::Element* error = oai_child(root, "error");
    if (!error)
        return;
    const std::string* code = error->attribute("", "code");
    std::string c = code ? *code : "unknown";
    std::string message = trim(error->text);
    if (c == "badResumptionToken")
        throw BadResumptionToken(c, message);
    throw ProtocolError(c, message);
}

}  // namespace

void EndpointConfig::validate() const {
    if (!parse_url(base_url))
        throw ConfigError("base_url must be an absolute http or https URL: '" + base_url + "'");
    if (metadata_prefix != "oai_dc")
        throw ConfigError("unsupported metadata prefix '" + metadata_prefix + "' (only oai_dc)");
    if (from && until && *until < *from)
        throw ConfigError("from must not be later than until");
    if (max_retries < 0)
        throw ConfigError("max_retries must be >= 0");
    if (backoff_base.count() < 0)
        throw ConfigError("backoff_base must be >= 0");
}

std::string ParsedUrl::origin() const {
    bool default_port = (scheme == "http" && port == 80) || (scheme == "https" && port == 443);
    return scheme + "://" + host + (default_port ? "" : ":" + std::to_string(port));
}

std::optional<ParsedUrl> parse_url(std::string_view url) {
    static const std::regex re(R"(^(https?)://([A-Za-z0-9._~%-]+|\[[0-9A-Fa-f:.]+\])(?::([0-9]{1,5}))?(/[^?#]*)?(?:\?([^#]*))?$)",
                               std::regex::icase);
    std::cmatch m;
    if (!std::regex_match(url.data(), url.data() + url.size(), m, re))
        return std::nullopt;
    ParsedUrl out;
    out.scheme = m[1].str();
    std::transform(out.scheme.begin(), out.scheme.end(), out.scheme.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.host = m[2].str();
    if (m[3].matched) {
        out.port = std::stoi(m[3].str());
        if (out.port < 1 || out.port > 65535)
            return std::nullopt;
    } else {
        out.port = out.scheme == "https" ? 443 : 80;
    }
    out.path = m[4].matched && m[4].length() > 0 ? m[4].str() : "/";
    out.query = m[5].matched ? m[5].str() : "";
    return out;
}

std::string url_encode(std::string_view s) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += kHex[c >> 4];
            out += kHex[c & 15];
        }
    }
    return out;
}

Client::Client(EndpointConfig config, std::unique_ptr<HttpTransport> transport, Sleeper sleeper)
    : config_(std::move(config)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
    config_.validate();
    if (!transport_)
        transport_ = make_http_transport(config_.request_timeout);
    if (!sleeper_)
        sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string Client::identify_url() const {
    char sep = config_.base_url.find('?') == std::string::npos ? '?' : '&';
    return config_.base_url + sep + "verb=Identify";
}

std::string Client::list_records_url(const std::optional<std::string>& token) const {
    char sep = config_.base_url.find('?') == std::string::npos ? '?' : '&';
    std::string url = config_.base_url + sep + "verb=ListRecords";
    // resumptionToken is an exclusive argument.
    if (token)
        return url + "&resumptionToken=" + url_encode(*token);
    url += "&metadataPrefix=" + url_encode(config_.metadata_prefix);
    if (config_.set_spec)
        url += "&set=" + url_encode(*config_.set_spec);
    if (config_.from)
        url += "&from=" + url_encode(config_.from->str());
    if (config_.until)
        url += "&until=" + url_encode(config_.until->str());
    return url;
}

xml::Element Client::fetch(const std::string& url) {
    std::chrono::milliseconds last_delay{0};
    std::string last_problem;
    const int attempts = config_.max_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        std::optional<std::chrono::milliseconds> server_delay;
        auto response = transport_->get(url);
        if (!response) {
            last_problem = "no response from " + url;
        } else if (response->status == 200) {
            try {
                return xml::parse(response->body, url);
            } catch (const xml::ParseError& e) {
                throw MalformedResponse(std::string("response is not well-formed XML: ") + e.what());
            }
        } else if (response->status == 503 || response->status == 429 || response->status >= 500) {
            last_problem = "HTTP " + std::to_string(response->status) + " from " + url;
            server_delay = parse_retry_after(response->retry_after);
        } else {
            throw HarvestError("HTTP " + std::to_string(response->status) + " from " + url);
        }

        if (attempt + 1 == attempts)
            break;
        auto backoff = config_.backoff_base * (1LL << std::min(attempt, 20));
        auto delay = std::max(server_delay.value_or(backoff), last_delay);
        delay = std::min<std::chrono::milliseconds>(delay, kRetryAfterCap);
        last_delay = delay;
        spdlog::warn("{}; retry {}/{} in {} ms", last_problem, attempt + 1, config_.max_retries, delay.count());
        sleeper_(delay);
    }
    throw NetworkError(last_problem + " (gave up after " + std::to_string(attempts) + " attempts)", attempts);
}

RepositoryDescription Client::identify() {
    xml::Element root = fetch(identify_url());
    if (!is_oai(root, "OAI-PMH"))
        throw MalformedResponse("Identify response has no OAI-PMH root element");
    check_error(root);
    const xml::Element* id = oai_child(root, "Identify");
    if (!id)
        throw MalformedResponse("Identify response lacks an Identify element");
    auto text_of = [&](std::string_view name) {
        const xml::Element* e = oai_child(*id, name);
        return e ? trim(e->text) : std::string();
    };
    RepositoryDescription out{text_of("repositoryName"), text_of("protocolVersion"), text_of("earliestDatestamp"),
                              text_of("granularity")};
    if (out.protocol_version.empty())
        throw MalformedResponse("Identify response lacks protocolVersion");
    return out;
}

RawRecord parse_record(const xml::Element& record) {
    const xml::Element* header = oai_child(record, "header");
    if (!header)
        throw MalformedResponse("record without header");
    RawRecord out;
    const xml::Element* identifier = oai_child(*header, "identifier");
    if (!identifier || trim(identifier->text).empty())
        throw MalformedResponse("record header without identifier");
    out.identifier = trim(identifier->text);
    const xml::Element* datestamp = oai_child(*header, "datestamp");
    auto parsed = datestamp ? Datestamp::parse(trim(datestamp->text)) : std::nullopt;
    if (!parsed)
        throw MalformedResponse("record '" + out.identifier + "' has a missing or invalid datestamp");
    out.datestamp = *parsed;
    const std::string* status = header->attribute("", "status");
    out.deleted = status && *status == "deleted";
    if (const xml::Element* metadata = oai_child(record, "metadata"); metadata && !metadata->children.empty())
        out.metadata_xml = xml::serialize(metadata->children.front());
    return out;
}

HarvestPage Client::harvest_page(const std::optional<std::string>& token) {
    xml::Element root = fetch(list_records_url(token));
    if (!is_oai(root, "OAI-PMH"))
        throw MalformedResponse("ListRecords response has no OAI-PMH root element");

    HarvestPage page;
    try {
        check_error(root);
    } catch (const BadResumptionToken&) {
        throw;
    } catch (const ProtocolError& e) {
        if (e.code() != "noRecordsMatch")
            throw;
        page.no_records_match = true;
        return page;
    }

    const xml::Element* list = oai_child(root, "ListRecords");
    if (!list)
        throw MalformedResponse("ListRecords response lacks a ListRecords element");
    for (const auto& child : list->children)
        if (is_oai(child, "record"))
            page.records.push_back(parse_record(child));
    if (const xml::Element* rt = oai_child(*list, "resumptionToken")) {
        std::string value = trim(rt->text);
        if (!value.empty())
            page.resumption_token = value;
        if (const std::string* size = rt->attribute("", "completeListSize")) {
            try {
                page.complete_list_size = static_cast<std::size_t>(std::stoull(*size));
            } catch (const std::exception&) {
            }
        }
    }
    return page;
}

std::vector<RawRecord> Client::harvest_all(const ProgressFn& progress) {
    RecordDeduplicator records;
    bool restarted = false;
    for (;;) {
        std::optional<std::string> token;
        try {
            do {
                HarvestPage page = harvest_page(token);
                for (auto& r : page.records)
                    records.add(std::move(r));
                if (progress)
                    progress(records.size());
                if (page.resumption_token && page.resumption_token == token)
                    throw MalformedResponse("resumption token did not advance: '" + *token + "'");
                token = std::move(page.resumption_token);
            } while (token);
            return std::move(records).take();
        } catch (const BadResumptionToken& e) {
            if (restarted)
                throw RestartLoop(std::string("harvest restarted once and failed again: ") + e.what());
            spdlog::warn("{}: restarting harvest from the beginning", e.what());
            restarted = true;
        }
    }
}

bool RecordDeduplicator::add(RawRecord record) {
    auto [it, inserted] = positions_.try_emplace(record.identifier, records_.size());
    if (inserted) {
        records_.push_back(std::move(record));
        return true;
    }
    RawRecord& existing = records_[it->second];
    if (record.datestamp >= existing.datestamp)
        existing = std::move(record);
    return false;
}

IngestResult ingest_files(std::span<const std::filesystem::path> paths) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    for (const auto& p : paths) {
        std::error_code ec;
        if (fs::is_directory(p, ec)) {
            std::vector<fs::path> found;
            for (const auto& entry : fs::recursive_directory_iterator(p, ec))
                if (entry.is_regular_file() && entry.path().extension() == ".xml")
                    found.push_back(entry.path());
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        } else {
            files.push_back(p);
        }
    }

    RecordDeduplicator dedup;
    IngestResult result;
    for (const auto& file : files) {
        std::ifstream in(file, std::ios::binary);
        if (!in) {
            result.failures.push_back({file, std::nullopt, "cannot open file"});
            continue;
        }
        std::stringstream buffer;
        buffer << in.rdbuf();
        if (in.bad()) {
            result.failures.push_back({file, std::nullopt, "read error"});
            continue;
        }
        std::vector<RawRecord> from_file;
        try {
            xml::Element root = xml::parse(buffer.str(), file.string());
            std::vector<const xml::Element*> records;
            collect_records(root, records);
            for (const auto* r : records)
                from_file.push_back(parse_record(*r));
            if (records.empty()) {
                std::vector<const xml::Element*> bare;
                xml::collect(root, kOaiDcNamespace, "dc", bare);
                std::error_code ec;
                auto mtime = fs::last_write_time(file, ec);
                Datestamp stamp;
                if (!ec) {
                    auto sys = std::chrono::file_clock::to_sys(mtime);
                    stamp = Datestamp(std::chrono::floor<std::chrono::seconds>(sys), Datestamp::Granularity::second);
                }
                for (std::size_t i = 0; i < bare.size(); ++i) {
                    RawRecord r;
                    const xml::Element* id = bare[i]->first_child(kDcNamespace, "identifier");
                    r.identifier = id && !trim(id->text).empty() ? trim(id->text)
                                                                 : file.string() + "#" + std::to_string(i + 1);
                    r.datestamp = stamp;
                    r.metadata_xml = xml::serialize(*bare[i]);
                    from_file.push_back(std::move(r));
                }
            }
        } catch (const xml::ParseError& e) {
            result.failures.push_back({file, e.byte_offset(), e.what()});
            continue;
        } catch (const HarvestError& e) {
            result.failures.push_back({file, std::nullopt, e.what()});
            continue;
        }
        for (auto& r : from_file)
            dedup.add(std::move(r));
    }
    result.records = std::move(dedup).take();
    return result;
}

std::string write_records_document(std::span<const RawRecord> records) {
    std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<OAI-PMH xmlns=\"";
    out += kOaiNamespace;
    out += "\">\n<ListRecords>\n";
    for (const auto& r : records) {
        out += "<record><header";
        if (r.deleted)
            out += " status=\"deleted\"";
        out += "><identifier>" + xml::escape(r.identifier) + "</identifier><datestamp>" + r.datestamp.str() +
               "</datestamp></header>";
        if (r.metadata_xml)
            out += "<metadata>" + *r.metadata_xml + "</metadata>";
        out += "</record>\n";
    }
    out += "</ListRecords>\n</OAI-PMH>\n";
    return out;
}

}  // namespace termrec::oai
