#include <httplib.h>

#include <map>

#include "termrec/oai_harvester.hpp"

namespace termrec::oai {

namespace {

class HttplibTransport final : public HttpTransport {
public:
    explicit HttplibTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

    std::optional<HttpResponse> get(const std::string& url) override {
        auto parsed = parse_url(url);
        if (!parsed)
            return std::nullopt;
        auto& client = client_for(*parsed);
        std::string target = parsed->path + (parsed->query.empty() ? "" : "?" + parsed->query);
        auto result = client.Get(target);
        if (!result)
            return std::nullopt;
        HttpResponse out;
        out.status = result->status;
        out.body = std::move(result->body);
        if (result->has_header("Retry-After"))
            out.retry_after = result->get_header_value("Retry-After");
        return out;
    }

private:
    httplib::Client& client_for(const ParsedUrl& url) {
        auto origin = url.origin();
        auto it = clients_.find(origin);
        if (it == clients_.end()) {
            auto client = std::make_unique<httplib::Client>(origin);
            client->set_connection_timeout(timeout_);
            client->set_read_timeout(timeout_);
            client->set_follow_location(true);
            it = clients_.emplace(origin, std::move(client)).first;
        }
        return *it->second;
    }

    std::chrono::seconds timeout_;
    std::map<std::string, std::unique_ptr<httplib::Client>> clients_;
};

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(std::chrono::seconds timeout) {
    return std::make_unique<HttplibTransport>(timeout);
}

}  // namespace termrec::oai
