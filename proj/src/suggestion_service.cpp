#include "termrec/suggestion_service.hpp"

#include <sodium.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstring>
#include <set>

namespace termrec::service {

using nlohmann::json;

namespace {

constexpr std::size_t kSaltBytes = 16;
constexpr std::size_t kSecretBytes = 32;
constexpr std::size_t kHashBytes = 32;

void ensure_sodium() {
    static const bool ready = sodium_init() >= 0;
    if (!ready)
        throw std::runtime_error("libsodium failed to initialize");
}

std::string to_hex(const unsigned char* data, std::size_t n) {
    std::string out(n * 2 + 1, '\0');
    sodium_bin2hex(out.data(), out.size(), data, n);
    out.pop_back();
    return out;
}

std::optional<std::vector<unsigned char>> from_hex(const std::string& hex) {
    std::vector<unsigned char> out(hex.size() / 2);
    std::size_t len = 0;
    if (sodium_hex2bin(out.data(), out.size(), hex.data(), hex.size(), nullptr, &len, nullptr) != 0 ||
        len != out.size())
        return std::nullopt;
    return out;
}

std::array<unsigned char, kHashBytes> hash_secret(std::string_view secret, const std::vector<unsigned char>& salt) {
    std::array<unsigned char, kHashBytes> out{};
    crypto_generichash(out.data(), out.size(), reinterpret_cast<const unsigned char*>(secret.data()), secret.size(),
                       salt.data(), salt.size());
    return out;
}

bool constant_time_equal(std::string_view a, std::string_view b) {
    if (a.size() != b.size())
        return false;
    return sodium_memcmp(a.data(), b.data(), a.size()) == 0;
}

std::vector<std::string> split_path(std::string_view path) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= path.size()) {
        auto next = path.find('/', pos);
        if (next == std::string_view::npos)
            next = path.size();
        if (next > pos)
            out.emplace_back(path.substr(pos, next - pos));
        pos = next + 1;
    }
    return out;
}

std::optional<std::string> bearer_token(const std::optional<std::string>& header) {
    if (!header)
        return std::nullopt;
    std::string_view h = *header;
    constexpr std::string_view scheme = "bearer ";
    if (h.size() <= scheme.size())
        return std::nullopt;
    for (std::size_t i = 0; i < scheme.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(h[i])) != scheme[i])
            return std::nullopt;
    h.remove_prefix(scheme.size());
    while (!h.empty() && h.front() == ' ')
        h.remove_prefix(1);
    while (!h.empty() && h.back() == ' ')
        h.remove_suffix(1);
    if (h.empty())
        return std::nullopt;
    return std::string(h);
}

std::optional<std::size_t> parse_size(std::string_view text) {
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        return std::nullopt;
    return value;
}

json recommendation_json(const cooc::Recommendation& r) {
    return {{"term", r.term}, {"score", r.score}, {"df_term", r.df_term}, {"df_joint", r.df_joint}};
}

cooc::Metric metric_param(const ApiRequest& request) {
    auto it = request.query.find("metric");
    if (it == request.query.end())
        return cooc::Metric::jaccard;
    auto m = cooc::metric_from_name(it->second);
    if (!m)
        throw BadQuery("unknown metric '" + it->second + "' (expected jaccard, dice or nwd)");
    return *m;
}

}  // namespace

KeyRegistry::KeyRegistry(store::Store& store) : store_(store) { ensure_sodium(); }

void KeyRegistry::refresh() const {
    auto version = store_.keys_version();
    if (version_ && *version_ == version)
        return;
    keys_.clear();
    for (auto& k : store_.load_keys())
        keys_[k.key_id] = std::move(k);
    version_ = std::move(version);
}

IssuedKey KeyRegistry::issue(const std::string& owner) {
    if (owner.empty())
        throw std::invalid_argument("key owner must not be empty");
    std::lock_guard lock(mutex_);
    refresh();

    std::array<unsigned char, 8> id_bytes{};
    std::string key_id;
    do {
        randombytes_buf(id_bytes.data(), id_bytes.size());
        key_id = "k" + to_hex(id_bytes.data(), id_bytes.size());
    } while (keys_.contains(key_id));

    std::array<unsigned char, kSecretBytes> secret_bytes{};
    randombytes_buf(secret_bytes.data(), secret_bytes.size());
    constexpr int variant = sodium_base64_VARIANT_URLSAFE_NO_PADDING;
    std::string secret(sodium_base64_ENCODED_LEN(kSecretBytes, variant), '\0');
    sodium_bin2base64(secret.data(), secret.size(), secret_bytes.data(), secret_bytes.size(), variant);
    secret.resize(std::strlen(secret.c_str()));
    sodium_memzero(secret_bytes.data(), secret_bytes.size());

    std::vector<unsigned char> salt(kSaltBytes);
    randombytes_buf(salt.data(), salt.size());
    auto digest = hash_secret(secret, salt);

    StoredKey stored{key_id, owner, to_hex(salt.data(), salt.size()), to_hex(digest.data(), digest.size()),
                     Clock::now(), false};
    std::vector<StoredKey> all;
    for (const auto& [id, k] : keys_)
        all.push_back(k);
    all.push_back(stored);
    store_.save_keys(all);
    keys_[key_id] = stored;
    version_ = store_.keys_version();
    return {key_id, owner, key_id + "." + secret, stored.created_at};
}

bool KeyRegistry::revoke(std::string_view key_or_id) {
    std::string id(key_or_id.substr(0, key_or_id.find('.')));
    std::lock_guard lock(mutex_);
    refresh();
    auto it = keys_.find(id);
    if (it == keys_.end())
        return false;
    it->second.revoked = true;
    std::vector<StoredKey> all;
    for (const auto& [_, k] : keys_)
        all.push_back(k);
    store_.save_keys(all);
    version_ = store_.keys_version();
    return true;
}

std::optional<std::string> KeyRegistry::authenticate(std::string_view presented) const {
    auto dot = presented.find('.');
    if (dot == std::string_view::npos)
        return std::nullopt;
    std::string id(presented.substr(0, dot));
    auto secret = presented.substr(dot + 1);

    StoredKey key;
    {
        std::lock_guard lock(mutex_);
        refresh();
        auto it = keys_.find(id);
        if (it == keys_.end() || it->second.revoked)
            return std::nullopt;
        key = it->second;
    }
    auto salt = from_hex(key.salt_hex);
    auto expected = from_hex(key.hash_hex);
    if (!salt || !expected || expected->size() != kHashBytes)
        return std::nullopt;
    auto digest = hash_secret(secret, *salt);
    if (sodium_memcmp(digest.data(), expected->data(), kHashBytes) != 0)
        return std::nullopt;
    return key.owner;
}

std::vector<StoredKey> KeyRegistry::list() const {
    std::lock_guard lock(mutex_);
    refresh();
    std::vector<StoredKey> out;
    for (const auto& [_, k] : keys_)
        out.push_back(k);
    return out;
}

RateLimiter::RateLimiter(double per_second, double burst)
    : rate_(per_second), burst_(burst > 0 ? burst : std::max(per_second, 1.0)) {}

bool RateLimiter::allow(const std::string& key, std::chrono::steady_clock::time_point now) {
    if (rate_ <= 0)
        return true;
    std::lock_guard lock(mutex_);
    auto [it, inserted] = buckets_.try_emplace(key, Bucket{burst_, now});
    auto& b = it->second;
    if (!inserted) {
        std::chrono::duration<double> dt = now - b.last;
        if (dt.count() > 0) {
            b.tokens = std::min(burst_, b.tokens + dt.count() * rate_);
            b.last = now;
        }
    }
    if (b.tokens < 1.0)
        return false;
    b.tokens -= 1.0;
    return true;
}

json suggest(const store::PublishedSnapshot& snapshot, const SuggestParams& params) {
    if (params.k == 0)
        throw BadQuery("k must be at least 1");
    std::vector<std::string> tokens;
    std::set<std::string> seen;
    for (auto& t : text::tokenize_free_text(params.term, snapshot.pipeline))
        if (seen.insert(t).second)
            tokens.push_back(std::move(t));
    if (tokens.empty())
        throw BadQuery("term is empty after normalization");

    std::size_t k = std::min(params.k, kMaxK);
    const auto& index = *snapshot.index;
    auto list = tokens.size() == 1
                    ? cooc::recommend(index, tokens.front(), k, params.metric, snapshot.min_target_df)
                    : cooc::recommend_multi(index, tokens, k, params.metric, snapshot.min_target_df);

    std::string query;
    for (const auto& t : tokens)
        query += (query.empty() ? "" : " ") + t;
    json suggestions = json::array();
    for (const auto& r : list.items)
        suggestions.push_back(recommendation_json(r));
    return {{"query", query},
            {"tokens", tokens},
            {"repo_id", snapshot.id.repo_id},
            {"metric", cooc::metric_name(params.metric)},
            {"k", k},
            {"suggestions", suggestions},
            {"term_not_found", !list.term_found},
            {"corpus_size", index.n_docs()},
            {"snapshot", snapshot.id.str()}};
}

json export_table(const store::PublishedSnapshot& snapshot, cooc::Metric metric, std::size_t per_term) {
    json rows = json::array();
    for (const auto& row : cooc::recommendation_table(*snapshot.index, metric, per_term, snapshot.min_target_df)) {
        auto r = recommendation_json(row.recommendation);
        r["source"] = row.source;
        rows.push_back(std::move(r));
    }
    return {{"repo_id", snapshot.id.repo_id},
            {"snapshot", snapshot.id.str()},
            {"metric", cooc::metric_name(metric)},
            {"corpus_size", snapshot.index->n_docs()},
            {"rows", rows}};
}

ApiResponse error_response(int status, std::string_view code, std::string_view message) {
    return {status, {{"error", {{"code", code}, {"message", message}}}}, {}};
}

Service::Service(store::Store& store, pipeline::Scheduler& scheduler, KeyRegistry& keys, ServiceOptions options)
    : store_(store), scheduler_(scheduler), keys_(keys), options_(std::move(options)), limiter_(options_.rate_limit) {
    ensure_sodium();
}

IssuedKey Service::issue_api_key(std::string_view admin_credential, const std::string& owner) {
    if (!options_.admin_token || !constant_time_equal(admin_credential, *options_.admin_token))
        throw AuthError("invalid admin credential");
    return keys_.issue(owner);
}

bool Service::admin_ok(const ApiRequest& request) const {
    auto token = bearer_token(request.authorization);
    return options_.admin_token && token && constant_time_equal(*token, *options_.admin_token);
}

ApiResponse Service::handle(const ApiRequest& request) {
    auto segments = split_path(request.path);
    if (segments.empty() || segments[0] != "v1")
        return error_response(404, "not_found", "no such endpoint");
    try {
        if (segments.size() == 2 && segments[1] == "health") {
            if (request.method != "GET")
                return error_response(405, "method_not_allowed", "use GET");
            return {200, {{"status", "ok"}}, {}};
        }
        if (segments[1] == "keys")
            return key_management(request, segments);

        auto token = bearer_token(request.authorization);
        std::optional<std::string> owner;
        if (token)
            owner = keys_.authenticate(*token);

        std::optional<RepositoryRecord> repo;
        bool is_repo_path = segments.size() >= 3 && segments[1] == "repositories";
        if (is_repo_path)
            repo = store_.repository(segments[2]);

        bool anonymous = !owner && repo && repo->anonymous_suggest && segments.size() == 4 &&
                         segments[3] == "suggest" && request.method == "GET";
        if (!owner && !anonymous)
            return error_response(401, "unauthorized", token ? "invalid or revoked API key" : "missing API key");

        std::string bucket = owner ? std::string(token->substr(0, token->find('.'))) : "anonymous";
        if (!limiter_.allow(bucket)) {
            auto r = error_response(429, "rate_limited", "request rate limit exceeded");
            r.headers["Retry-After"] = "1";
            return r;
        }

        if (segments.size() == 2 && segments[1] == "repositories") {
            if (request.method != "POST")
                return error_response(405, "method_not_allowed", "use POST");
            return register_repository(*owner, request);
        }
        if (segments.size() == 3 && segments[1] == "jobs") {
            if (request.method != "GET")
                return error_response(405, "method_not_allowed", "use GET");
            return get_job(owner, segments[2]);
        }
        if (!is_repo_path || segments.size() > 4)
            return error_response(404, "not_found", "no such endpoint");
        if (!repo)
            return error_response(404, "not_found", "unknown repository '" + segments[2] + "'");
        if (!anonymous && repo->owner != *owner)
            return error_response(403, "forbidden", "repository belongs to another owner");

        std::string action = segments.size() == 4 ? segments[3] : "";
        std::string expected_method = action == "schedule" ? "POST" : "GET";
        if (action != "" && action != "schedule" && action != "suggest" && action != "export")
            return error_response(404, "not_found", "no such endpoint");
        if (request.method != expected_method)
            return error_response(405, "method_not_allowed", "use " + expected_method);
        if (action.empty())
            return get_repository(*repo);
        if (action == "schedule")
            return schedule(*repo);
        if (action == "suggest")
            return suggest_endpoint(*repo, request);
        return export_endpoint(*repo, request);
    } catch (const BadQuery& e) {
        return error_response(400, "bad_request", e.what());
    } catch (const store::NotFound& e) {
        return error_response(404, "not_found", e.what());
    } catch (const std::exception& e) {
        spdlog::error("{} {}: {}", request.method, request.path, e.what());
        return error_response(500, "internal", e.what());
    }
}

ApiResponse Service::register_repository(const std::string& owner, const ApiRequest& request) {
    json body = json::parse(request.body, nullptr, false);
    if (body.is_discarded() || !body.is_object())
        return error_response(400, "bad_request", "request body must be a JSON object");
    if (!body.contains("name") || !body["name"].is_string() || body["name"].get<std::string>().empty())
        return error_response(400, "bad_request", "'name' is required");
    if (!body.contains("source"))
        return error_response(422, "invalid_source", "'source' is required");

    RepositoryRecord draft;
    draft.name = body["name"].get<std::string>();
    draft.owner = owner;
    try {
        draft.source = source_from_json(body["source"]);
        if (auto* endpoint = std::get_if<oai::EndpointConfig>(&draft.source))
            endpoint->validate();
        else if (!options_.allow_file_sources)
            return error_response(422, "invalid_source", "file sources are disabled on this service");
    } catch (const std::exception& e) {
        return error_response(422, "invalid_source", e.what());
    }
    try {
        if (body.contains("mapping"))
            draft.mapping = mapping_from_json(body["mapping"]);
        draft.mapping.validate();
    } catch (const std::exception& e) {
        return error_response(422, "invalid_mapping", e.what());
    }
    try {
        if (body.contains("pipeline"))
            draft.pipeline = pipeline_from_json(body["pipeline"]);
        draft.pipeline.validate();
        draft.min_target_df = body.value("min_target_df", std::uint64_t{1});
        draft.anonymous_suggest = body.value("anonymous_suggest", false);
        if (draft.min_target_df == 0)
            throw std::invalid_argument("min_target_df must be at least 1");
    } catch (const std::exception& e) {
        return error_response(422, "invalid_pipeline", e.what());
    }

    if (auto* endpoint = std::get_if<oai::EndpointConfig>(&draft.source)) {
        try {
            auto transport = options_.transport_factory ? options_.transport_factory(*endpoint) : nullptr;
            oai::Client client(*endpoint, std::move(transport));
            auto description = client.identify();
            spdlog::info("registered endpoint '{}' ({})", description.name, endpoint->base_url);
        } catch (const std::exception& e) {
            return error_response(422, "invalid_source", std::string("identify failed: ") + e.what());
        }
    }

    try {
        auto created = store_.create_repository(std::move(draft));
        return {201, json(created), {{"Location", "/v1/repositories/" + created.repo_id}}};
    } catch (const store::Conflict& e) {
        return error_response(409, "conflict", e.what());
    }
}

ApiResponse Service::get_repository(const RepositoryRecord& repo) {
    json body = repo;
    if (auto job = scheduler_.active_job(repo.repo_id))
        body["active_job"] = job->job_id;
    return {200, body, {}};
}

ApiResponse Service::schedule(const RepositoryRecord& repo) {
    try {
        auto job = scheduler_.schedule(repo.repo_id);
        std::string url = "/v1/jobs/" + job.job_id;
        return {202, {{"job_id", job.job_id}, {"status", stage_name(job.stage)}, {"status_url", url}},
                {{"Location", url}}};
    } catch (const pipeline::JobAlreadyActive& e) {
        auto r = error_response(409, "job_active", e.what());
        r.body["error"]["job_id"] = e.job_id();
        return r;
    } catch (const LifecycleError& e) {
        return error_response(409, "conflict", e.what());
    } catch (const pipeline::UnknownRepository& e) {
        return error_response(404, "not_found", e.what());
    }
}

ApiResponse Service::get_job(const std::optional<std::string>& owner, const std::string& job_id) {
    Job job;
    try {
        job = scheduler_.job_status(job_id);
    } catch (const pipeline::UnknownJob& e) {
        return error_response(404, "not_found", e.what());
    }
    auto repo = store_.repository(job.repo_id);
    if (!repo || !owner || repo->owner != *owner)
        return error_response(403, "forbidden", "job belongs to another owner");
    return {200, json(job), {}};
}

ApiResponse Service::suggest_endpoint(const RepositoryRecord& repo, const ApiRequest& request) {
    SuggestParams params;
    auto term = request.query.find("term");
    if (term == request.query.end())
        return error_response(400, "bad_request", "'term' is required");
    params.term = term->second;
    if (auto k = request.query.find("k"); k != request.query.end()) {
        auto value = parse_size(k->second);
        if (!value || *value == 0)
            return error_response(400, "bad_request", "'k' must be a positive integer");
        params.k = std::min(*value, kMaxK);
    }
    params.metric = metric_param(request);
    auto snapshot = store_.published(repo.repo_id);
    if (!snapshot)
        return error_response(409, "no_snapshot", "repository has no published snapshot yet");
    return {200, suggest(*snapshot, params), {}};
}

ApiResponse Service::export_endpoint(const RepositoryRecord& repo, const ApiRequest& request) {
    std::size_t per_term = 0;
    if (auto p = request.query.find("per_term"); p != request.query.end()) {
        auto value = parse_size(p->second);
        if (!value)
            return error_response(400, "bad_request", "'per_term' must be a non-negative integer");
        per_term = *value;
    }
    auto metric = metric_param(request);
    auto snapshot = store_.published(repo.repo_id);
    if (!snapshot)
        return error_response(409, "no_snapshot", "repository has no published snapshot yet");
    return {200, export_table(*snapshot, metric, per_term), {}};
}

ApiResponse Service::key_management(const ApiRequest& request, const std::vector<std::string>& segments) {
    if (!options_.admin_token)
        return error_response(404, "not_found", "key management is disabled on this service");
    if (!admin_ok(request))
        return error_response(401, "unauthorized", "invalid admin credential");
    if (segments.size() == 2 && request.method == "GET") {
        json keys = json::array();
        for (const auto& k : keys_.list())
            keys.push_back({{"key_id", k.key_id},
                            {"owner", k.owner},
                            {"created_at", time_to_string(k.created_at)},
                            {"revoked", k.revoked}});
        return {200, {{"keys", keys}}, {}};
    }
    if (segments.size() == 2 && request.method == "POST") {
        json body = json::parse(request.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("owner") || !body["owner"].is_string() ||
            body["owner"].get<std::string>().empty())
            return error_response(400, "bad_request", "'owner' is required");
        auto issued = keys_.issue(body["owner"].get<std::string>());
        return {201,
                {{"key_id", issued.key_id},
                 {"owner", issued.owner},
                 {"key", issued.key},
                 {"created_at", time_to_string(issued.created_at)}},
                {}};
    }
    if (segments.size() == 3 && request.method == "DELETE") {
        if (!keys_.revoke(segments[2]))
            return error_response(404, "not_found", "unknown key '" + segments[2] + "'");
        return {200, {{"key_id", segments[2]}, {"revoked", true}}, {}};
    }
    return error_response(404, "not_found", "no such endpoint");
}

std::pair<std::string, int> parse_listen(std::string_view text) {
    std::string host = "127.0.0.1";
    std::string_view port_text = text;
    if (auto colon = text.rfind(':'); colon != std::string_view::npos) {
        host = std::string(text.substr(0, colon));
        port_text = text.substr(colon + 1);
        if (host.size() >= 2 && host.front() == '[' && host.back() == ']')
            host = host.substr(1, host.size() - 2);
        if (host.empty())
            host = "0.0.0.0";
    }
    auto port = parse_size(port_text);
    if (!port || *port > 65535)
        throw std::invalid_argument("bad listen address '" + std::string(text) + "'");
    return {host, static_cast<int>(*port)};
}

}  // namespace termrec::service
