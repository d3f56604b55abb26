#include <httplib.h>
#include <spdlog/spdlog.h>

#include <thread>

#include "termrec/suggestion_service.hpp"

namespace termrec::service {

struct HttpServer::Impl {
    explicit Impl(Service& s) : service(s) {}

    void dispatch(const httplib::Request& req, httplib::Response& res) {
        ApiRequest request;
        request.method = req.method;
        request.path = req.path;
        for (const auto& [key, value] : req.params)
            request.query.try_emplace(key, value);
        if (req.has_header("Authorization"))
            request.authorization = req.get_header_value("Authorization");
        request.body = req.body;

        auto response = service.handle(request);
        res.status = response.status;
        for (const auto& [name, value] : response.headers)
            res.set_header(name, value);
        res.set_content(response.body.dump(), std::string(kMediaType));
    }

    Service& service;
    httplib::Server server;
    std::thread thread;
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) { impl_->dispatch(req, res); };
    auto& s = impl_->server;
    s.Get(".*", handler);
    s.Post(".*", handler);
    s.Put(".*", handler);
    s.Delete(".*", handler);
    s.Patch(".*", handler);
    s.set_payload_max_length(1 << 20);
    s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
        res.status = 500;
        res.set_content(R"({"error":{"code":"internal","message":"unhandled error"}})", std::string(kMediaType));
    });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
    auto& s = impl_->server;
    int bound = port;
    if (port == 0) {
        bound = s.bind_to_any_port(host);
        if (bound < 0)
            throw std::runtime_error("cannot bind to " + host);
    } else if (!s.bind_to_port(host, port)) {
        throw std::runtime_error("cannot bind to " + host + ":" + std::to_string(port));
    }
    impl_->thread = std::thread([&s] { s.listen_after_bind(); });
    s.wait_until_ready();
    spdlog::info("listening on {}:{}", host, bound);
    return bound;
}

void HttpServer::stop() {
    if (!impl_ || !impl_->thread.joinable())
        return;
    impl_->server.stop();
    impl_->thread.join();
}

}  // namespace termrec::service
