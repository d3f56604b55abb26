#include <doctest.h>

#include "fixtures.hpp"
#include "mock_oai.hpp"
#include "termrec/suggestion_service.hpp"

using namespace termrec;
using namespace termrec::testing;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

constexpr const char* kAdmin = "admin-secret";

struct Harness {
    MockOaiServer oai{to_raw(youth_fixture())};
    TempDir dir;
    store::FileStore store{dir.path()};
    pipeline::Scheduler scheduler{store, [] {
                                      pipeline::SchedulerOptions o;
                                      o.sleeper = [](std::chrono::milliseconds) {};
                                      return o;
                                  }()};
    service::KeyRegistry keys{store};
    service::Service api;

    explicit Harness(service::ServiceOptions options = with_admin())
        : api(store, scheduler, keys, std::move(options)) {}

    static service::ServiceOptions with_admin() {
        service::ServiceOptions o;
        o.admin_token = kAdmin;
        return o;
    }

    service::ApiResponse call(const std::string& method, const std::string& path,
                              const std::optional<std::string>& key, std::map<std::string, std::string> query = {},
                              std::string body = "") {
        service::ApiRequest r;
        r.method = method;
        r.path = path;
        r.query = std::move(query);
        if (key)
            r.authorization = "Bearer " + *key;
        r.body = std::move(body);
        return api.handle(r);
    }

    std::string register_repo(const std::string& key, const std::string& name) {
        json body{{"name", name}, {"source", {{"base_url", oai.base_url()}, {"max_retries", 0}}}};
        auto r = call("POST", "/v1/repositories", key, {}, body.dump());
        REQUIRE(r.status == 201);
        return r.body["repo_id"].get<std::string>();
    }

    void build(const std::string& key, const std::string& repo_id) {
        auto r = call("POST", "/v1/repositories/" + repo_id + "/schedule", key);
        REQUIRE(r.status == 202);
        auto job = scheduler.run_job(r.body["job_id"].get<std::string>());
        REQUIRE(job.stage == JobStage::done);
    }
};

std::vector<std::pair<std::string, double>> pairs(const json& body) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& s : body["suggestions"])
        out.emplace_back(s["term"].get<std::string>(), s["score"].get<double>());
    return out;
}

}  // namespace

TEST_SUITE("suggestion_service") {
    TEST_CASE("keys are distinct, hashed and revocable") {
        Harness h;
        auto a = h.keys.issue("alice");
        auto b = h.keys.issue("alice");
        CHECK(a.key != b.key);
        CHECK(a.key_id != b.key_id);
        CHECK(a.key.rfind(a.key_id + ".", 0) == 0);
        CHECK(h.keys.authenticate(a.key) == std::optional<std::string>("alice"));
        CHECK_FALSE(h.keys.authenticate(a.key_id + ".wrong"));
        CHECK_FALSE(h.keys.authenticate("garbage"));
        for (const auto& k : h.store.load_keys()) {
            CHECK(k.hash_hex.find(a.key.substr(a.key.find('.') + 1)) == std::string::npos);
            CHECK(k.hash_hex.find(b.key.substr(b.key.find('.') + 1)) == std::string::npos);
        }

        // Another registry over the same store sees revocations.
        service::KeyRegistry other(h.store);
        CHECK(other.authenticate(b.key));
        CHECK(h.keys.revoke(b.key_id));
        CHECK_FALSE(other.authenticate(b.key));
        CHECK_FALSE(h.keys.revoke("k-none"));
        CHECK(other.authenticate(a.key));
        CHECK(h.keys.list().size() == 2);
    }

    TEST_CASE("requests need a valid key") {
        Harness h;
        auto key = h.keys.issue("alice").key;
        CHECK(h.call("GET", "/v1/health", std::nullopt).status == 200);
        CHECK(h.call("POST", "/v1/repositories", std::nullopt, {}, "{}").status == 401);
        CHECK(h.call("GET", "/v1/repositories/x/suggest", std::string("nope"), {{"term", "youth"}}).status == 401);
        service::ApiRequest bad_scheme{"GET", "/v1/repositories/x", {}, "Basic " + key, ""};
        CHECK(h.api.handle(bad_scheme).status == 401);
        CHECK(h.call("GET", "/v1/repositories/x", key).status == 404);
        h.keys.revoke(key);
        auto revoked = h.call("GET", "/v1/repositories/x", key);
        CHECK(revoked.status == 401);
        CHECK(revoked.body["error"]["code"] == "unauthorized");
    }

    TEST_CASE("registration validates and identifies the endpoint") {
        Harness h;
        auto key = h.keys.issue("alice").key;
        auto post = [&](const json& body) { return h.call("POST", "/v1/repositories", key, {}, body.dump()); };
        json source{{"base_url", h.oai.base_url()}};

        auto created = post({{"name", "demo"}, {"source", source}});
        CHECK(created.status == 201);
        CHECK(created.body["status"] == "registered");
        CHECK(created.body["owner"] == "alice");
        CHECK(created.headers["Location"] == "/v1/repositories/" + created.body["repo_id"].get<std::string>());

        CHECK(post({{"name", "demo"}, {"source", source}}).status == 409);
        CHECK(h.call("POST", "/v1/repositories", key, {}, "not json").status == 400);
        CHECK(post({{"source", source}}).status == 400);
        CHECK(post({{"name", "nosrc"}}).body["error"]["code"] == "invalid_source");
        auto mapping = post({{"name", "m"},
                             {"source", source},
                             {"mapping", {{"source_elements", {"subject"}}, {"target_element", "subject"}}}});
        CHECK(mapping.status == 422);
        CHECK(mapping.body["error"]["code"] == "invalid_mapping");
        auto element = post({{"name", "e"}, {"source", source}, {"mapping", {{"target_element", "abstract"}}}});
        CHECK(element.body["error"]["code"] == "invalid_mapping");
        auto pipe = post({{"name", "p"}, {"source", source}, {"pipeline", {{"min_token_length", 0}}}});
        CHECK(pipe.status == 422);
        CHECK(pipe.body["error"]["code"] == "invalid_pipeline");
        CHECK(post({{"name", "f"}, {"source", {{"type", "files"}, {"paths", {"/etc"}}}}}).status == 422);
        CHECK(post({{"name", "u"}, {"source", {{"base_url", "ftp://x"}}}}).status == 422);

        MockOaiServer dead;
        dead.set_options([] {
            MockOaiOptions o;
            o.persistent_status = 404;
            return o;
        }());
        auto unreachable = post({{"name", "dead"}, {"source", {{"base_url", dead.base_url()}, {"max_retries", 0}}}});
        CHECK(unreachable.status == 422);
        CHECK(unreachable.body["error"]["code"] == "invalid_source");
        CHECK(h.store.repositories().size() == 1);
    }

    TEST_CASE("file sources need to be enabled") {
        auto options = Harness::with_admin();
        options.allow_file_sources = true;
        Harness h(options);
        auto key = h.keys.issue("alice").key;
        json body{{"name", "files"}, {"source", {{"type", "files"}, {"paths", {fixture_path("youth.xml").string()}}}}};
        CHECK(h.call("POST", "/v1/repositories", key, {}, body.dump()).status == 201);
    }

    TEST_CASE("scheduling, job polling and suggestions") {
        Harness h;
        auto key = h.keys.issue("alice").key;
        auto repo = h.register_repo(key, "demo");
        std::string base = "/v1/repositories/" + repo;

        auto early = h.call("GET", base + "/suggest", key, {{"term", "youth"}});
        CHECK(early.status == 409);
        CHECK(early.body["error"]["code"] == "no_snapshot");

        auto queued = h.call("POST", base + "/schedule", key);
        REQUIRE(queued.status == 202);
        CHECK(queued.body["status"] == "queued");
        auto job_id = queued.body["job_id"].get<std::string>();
        CHECK(queued.body["status_url"] == "/v1/jobs/" + job_id);
        auto dup = h.call("POST", base + "/schedule", key);
        CHECK(dup.status == 409);
        CHECK(dup.body["error"]["code"] == "job_active");
        CHECK(dup.body["error"]["job_id"] == job_id);
        CHECK(h.call("GET", base, key).body["active_job"] == job_id);
        CHECK(h.call("GET", "/v1/jobs/" + job_id, key).body["stage"] == "queued");

        h.scheduler.run_job(job_id);
        auto finished = h.call("GET", "/v1/jobs/" + job_id, key);
        CHECK(finished.status == 200);
        CHECK(finished.body["stage"] == "done");
        CHECK(finished.body["progress"]["harvested"] == 4);
        CHECK(h.call("GET", "/v1/jobs/job-none", key).status == 404);

        auto r = h.call("GET", base + "/suggest", key, {{"term", "youth"}, {"k", "2"}});
        REQUIRE(r.status == 200);
        CHECK(pairs(r.body) == std::vector<std::pair<std::string, double>>{{"adolescent", 1.0}, {"labor market", 1.0 / 3}});
        CHECK(r.body["corpus_size"] == 4);
        CHECK(r.body["term_not_found"] == false);
        CHECK(r.body["suggestions"][0]["df_joint"] == 2);
        CHECK(r.body["metric"] == "jaccard");

        auto limited = h.call("GET", base + "/suggest", key, {{"term", "youth"}, {"k", "1"}});
        CHECK(limited.body["suggestions"].size() == 1);
        auto upper = h.call("GET", base + "/suggest", key, {{"term", "  YOUTH "}});
        CHECK(pairs(upper.body) == pairs(r.body));

        auto multi = h.call("GET", base + "/suggest", key, {{"term", "youth unemployment"}});
        CHECK(multi.body["tokens"] == json{"youth", "unemployment"});
        REQUIRE(multi.body["suggestions"].size() == 2);
        CHECK(multi.body["suggestions"][0]["score"].get<double>() == doctest::Approx(4.0 / 3));
        CHECK(multi.body["suggestions"][1]["score"].get<double>() == doctest::Approx(4.0 / 3));

        auto missing = h.call("GET", base + "/suggest", key, {{"term", "astronomy"}});
        CHECK(missing.status == 200);
        CHECK(missing.body["term_not_found"] == true);
        CHECK(missing.body["suggestions"].empty());

        auto nwd = h.call("GET", base + "/suggest", key, {{"term", "youth"}, {"metric", "nwd"}});
        CHECK(nwd.body["suggestions"][0]["term"] == "adolescent");
        CHECK(nwd.body["suggestions"][0]["score"].get<double>() == doctest::Approx(0.0));

        CHECK(h.call("GET", base + "/suggest", key, {}).status == 400);
        CHECK(h.call("GET", base + "/suggest", key, {{"term", "  "}}).status == 400);
        CHECK(h.call("GET", base + "/suggest", key, {{"term", "youth"}, {"k", "0"}}).status == 400);
        CHECK(h.call("GET", base + "/suggest", key, {{"term", "youth"}, {"k", "-1"}}).status == 400);
        CHECK(h.call("GET", base + "/suggest", key, {{"term", "youth"}, {"metric", "cosine"}}).status == 400);
        CHECK(h.call("GET", base + "/suggest", key, {{"term", "youth"}, {"k", "5000"}}).body["k"] == 100);
        CHECK(h.call("POST", base + "/suggest", key, {{"term", "youth"}}).status == 405);
        CHECK(h.call("GET", base + "/schedule", key).status == 405);
        CHECK(h.call("GET", base + "/bogus", key).status == 404);

        auto exported = h.call("GET", base + "/export", key);
        CHECK(exported.status == 200);
        CHECK(exported.body["rows"].size() == 6);
    }

    TEST_CASE("owners only see their own repositories and jobs") {
        Harness h;
        auto alice = h.keys.issue("alice").key;
        auto bob = h.keys.issue("bob").key;
        auto repo = h.register_repo(alice, "demo");
        std::string base = "/v1/repositories/" + repo;
        auto queued = h.call("POST", base + "/schedule", alice);
        auto job = queued.body["job_id"].get<std::string>();

        CHECK(h.call("GET", base, bob).status == 403);
        CHECK(h.call("POST", base + "/schedule", bob).status == 403);
        CHECK(h.call("GET", base + "/suggest", bob, {{"term", "youth"}}).status == 403);
        CHECK(h.call("GET", base + "/export", bob).status == 403);
        CHECK(h.call("GET", "/v1/jobs/" + job, bob).status == 403);
        CHECK(h.call("GET", "/v1/jobs/" + job, alice).status == 200);
        // Same name under another owner is a different repository.
        CHECK(h.register_repo(bob, "demo") != repo);
    }

    TEST_CASE("anonymous suggest is opt-in per repository") {
        Harness h;
        auto key = h.keys.issue("alice").key;
        json body{{"name", "open"}, {"source", {{"base_url", h.oai.base_url()}}}, {"anonymous_suggest", true}};
        auto open = h.call("POST", "/v1/repositories", key, {}, body.dump()).body["repo_id"].get<std::string>();
        auto closed = h.register_repo(key, "closed");
        h.build(key, open);
        h.build(key, closed);
        CHECK(h.call("GET", "/v1/repositories/" + open + "/suggest", std::nullopt, {{"term", "youth"}}).status == 200);
        CHECK(h.call("GET", "/v1/repositories/" + open + "/export", std::nullopt).status == 401);
        CHECK(h.call("GET", "/v1/repositories/" + closed + "/suggest", std::nullopt, {{"term", "youth"}}).status == 401);
    }

    TEST_CASE("rate limiting per key") {
        auto options = Harness::with_admin();
        options.rate_limit = 1;
        Harness h(options);
        auto a = h.keys.issue("alice").key;
        auto b = h.keys.issue("alice").key;
        CHECK(h.call("GET", "/v1/repositories/x", a).status == 404);
        auto limited = h.call("GET", "/v1/repositories/x", a);
        CHECK(limited.status == 429);
        CHECK(limited.headers.count("Retry-After") == 1);
        CHECK(h.call("GET", "/v1/repositories/x", b).status == 404);

        service::RateLimiter limiter(2, 2);
        auto t0 = std::chrono::steady_clock::now();
        CHECK(limiter.allow("k", t0));
        CHECK(limiter.allow("k", t0));
        CHECK_FALSE(limiter.allow("k", t0));
        CHECK(limiter.allow("k", t0 + 500ms));
        service::RateLimiter off(0);
        for (int i = 0; i < 1000; ++i)
            REQUIRE(off.allow("k", t0));
    }

    TEST_CASE("key management endpoints") {
        Harness h;
        CHECK(h.call("POST", "/v1/keys", std::nullopt, {}, R"({"owner":"carol"})").status == 401);
        CHECK(h.call("POST", "/v1/keys", std::string("wrong"), {}, R"({"owner":"carol"})").status == 401);
        CHECK(h.call("POST", "/v1/keys", std::string(kAdmin), {}, "{}").status == 400);
        auto issued = h.call("POST", "/v1/keys", std::string(kAdmin), {}, R"({"owner":"carol"})");
        REQUIRE(issued.status == 201);
        auto key = issued.body["key"].get<std::string>();
        CHECK(h.keys.authenticate(key) == std::optional<std::string>("carol"));
        auto listed = h.call("GET", "/v1/keys", std::string(kAdmin));
        CHECK(listed.body["keys"].size() == 1);
        CHECK(listed.body["keys"][0].dump().find(key.substr(key.find('.') + 1)) == std::string::npos);
        auto id = issued.body["key_id"].get<std::string>();
        CHECK(h.call("DELETE", "/v1/keys/" + id, std::string(kAdmin)).status == 200);
        CHECK(h.call("DELETE", "/v1/keys/k-none", std::string(kAdmin)).status == 404);
        CHECK_FALSE(h.keys.authenticate(key));
        // The admin credential is not an API key.
        CHECK(h.call("GET", "/v1/repositories/x", std::string(kAdmin)).status == 401);

        CHECK_THROWS_AS(h.api.issue_api_key("wrong", "dave"), service::AuthError);
        CHECK(h.api.issue_api_key(kAdmin, "dave").owner == "dave");

        Harness closed(service::ServiceOptions{});
        CHECK(closed.call("GET", "/v1/keys", std::string(kAdmin)).status == 404);
        CHECK_THROWS_AS(closed.api.issue_api_key(kAdmin, "dave"), service::AuthError);
    }

    TEST_CASE("served over HTTP with the versioned media type") {
        Harness h;
        auto key = h.keys.issue("alice").key;
        auto repo = h.register_repo(key, "demo");
        h.build(key, repo);
        service::HttpServer server(h.api);
        int port = server.start("127.0.0.1", 0);
        REQUIRE(port > 0);

        auto r = http_request(port, "GET", "/v1/repositories/" + repo + "/suggest?term=youth%20unemployment&k=2", key);
        CHECK(r.status == 200);
        CHECK(r.headers["Content-Type"] == std::string(service::kMediaType));
        auto body = json::parse(r.body);
        CHECK(body["tokens"].size() == 2);
        CHECK(pairs(body) == pairs(h.call("GET", "/v1/repositories/" + repo + "/suggest", key,
                                          {{"term", "youth unemployment"}, {"k", "2"}})
                                       .body));
        CHECK(http_request(port, "GET", "/v1/repositories/" + repo + "/suggest?term=youth").status == 401);
        auto created = http_request(port, "POST", "/v1/repositories", key,
                                    json{{"name", "two"}, {"source", {{"base_url", h.oai.base_url()}}}}.dump());
        CHECK(created.status == 201);
        CHECK(created.headers.count("Location") == 1);
        CHECK(http_request(port, "GET", "/v1/health").status == 200);
        server.stop();
    }

    TEST_CASE("listen addresses") {
        CHECK(service::parse_listen("0.0.0.0:9000") == std::pair<std::string, int>{"0.0.0.0", 9000});
        CHECK(service::parse_listen("8081") == std::pair<std::string, int>{"127.0.0.1", 8081});
        CHECK_THROWS(service::parse_listen("host:notaport"));
    }
}
