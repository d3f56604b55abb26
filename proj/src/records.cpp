#include "termrec/records.hpp"

#include <cstdio>

namespace termrec {

using nlohmann::json;

std::string SnapshotId::str() const { return repo_id + ":" + std::to_string(sequence); }

std::optional<SnapshotId> SnapshotId::parse(std::string_view text) {
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size())
        return std::nullopt;
    std::uint64_t seq = 0;
    for (char c : text.substr(colon + 1)) {
        if (c < '0' || c > '9')
            return std::nullopt;
        seq = seq * 10 + static_cast<std::uint64_t>(c - '0');
    }
    return SnapshotId{std::string(text.substr(0, colon)), seq};
}

namespace {

constexpr std::string_view kStatusNames[] = {"registered", "scheduled", "harvesting",
                                             "processing", "published", "failed"};
constexpr std::string_view kStageNames[] = {"queued", "harvesting", "processing", "persisting", "done", "failed"};

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::string_view (&names)[N], std::string_view name) {
    for (std::size_t i = 0; i < N; ++i)
        if (names[i] == name)
            return static_cast<Enum>(i);
    return std::nullopt;
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null())
        return std::nullopt;
    return j.at(key).get<T>();
}

dc::Element element_or_throw(const std::string& name) {
    auto e = dc::element_from_name(name);
    if (!e)
        throw std::invalid_argument("'" + name + "' is not a Dublin Core element");
    return *e;
}

}  // namespace

std::string_view status_name(RepoStatus s) { return kStatusNames[static_cast<std::size_t>(s)]; }
std::optional<RepoStatus> status_from_name(std::string_view name) { return lookup<RepoStatus>(kStatusNames, name); }
std::string_view stage_name(JobStage s) { return kStageNames[static_cast<std::size_t>(s)]; }
std::optional<JobStage> stage_from_name(std::string_view name) { return lookup<JobStage>(kStageNames, name); }

bool can_transition(RepoStatus from, RepoStatus to) {
    using S = RepoStatus;
    switch (to) {
        case S::registered: return false;
        case S::scheduled: return from == S::registered || from == S::published || from == S::failed;
        case S::harvesting: return from == S::scheduled;
        case S::processing: return from == S::harvesting;
        case S::published: return from == S::processing || from == S::published;
        case S::failed: return from == S::scheduled || from == S::harvesting || from == S::processing;
    }
    return false;
}

std::string time_to_string(Clock::time_point t) {
    using namespace std::chrono;
    auto ms = duration_cast<milliseconds>(t.time_since_epoch()).count();
    auto secs = floor<seconds>(t);
    auto base = iso_utc(secs);  // YYYY-MM-DDThh:mm:ssZ
    char frac[8];
    std::snprintf(frac, sizeof frac, ".%03lldZ", static_cast<long long>(((ms % 1000) + 1000) % 1000));
    return base.substr(0, base.size() - 1) + frac;
}

Clock::time_point time_from_string(const std::string& s) {
    // Accepts the form written by time_to_string and plain second-granularity stamps.
    std::string whole = s;
    long long ms = 0;
    if (auto dot = s.find('.'); dot != std::string::npos && s.size() > dot + 1) {
        whole = s.substr(0, dot) + "Z";
        ms = std::stoll(s.substr(dot + 1, 3));
    }
    auto d = Datestamp::parse(whole);
    if (!d)
        throw std::invalid_argument("bad timestamp '" + s + "'");
    return Clock::time_point(d->time()) + std::chrono::milliseconds(ms);
}

void to_json(json& j, const SnapshotId& id) { j = id.str(); }

void from_json(const json& j, SnapshotId& id) {
    auto parsed = SnapshotId::parse(j.get<std::string>());
    if (!parsed)
        throw std::invalid_argument("bad snapshot id '" + j.get<std::string>() + "'");
    id = *parsed;
}

json source_to_json(const RepositorySource& source) {
    if (const auto* endpoint = std::get_if<oai::EndpointConfig>(&source)) {
        json j = {{"type", "oai"},
                  {"base_url", endpoint->base_url},
                  {"metadata_prefix", endpoint->metadata_prefix},
                  {"max_retries", endpoint->max_retries},
                  {"backoff_ms", endpoint->backoff_base.count()},
                  {"timeout_s", endpoint->request_timeout.count()}};
        if (endpoint->set_spec)
            j["set"] = *endpoint->set_spec;
        if (endpoint->from)
            j["from"] = endpoint->from->str();
        if (endpoint->until)
            j["until"] = endpoint->until->str();
        return j;
    }
    json paths = json::array();
    for (const auto& p : std::get<FileSet>(source).paths)
        paths.push_back(p.string());
    return {{"type", "files"}, {"paths", paths}};
}

RepositorySource source_from_json(const json& j) {
    if (!j.is_object())
        throw std::invalid_argument("source must be an object");
    std::string type = j.value("type", j.contains("base_url") ? "oai" : "files");
    if (type == "files") {
        FileSet files;
        for (const auto& p : j.at("paths"))
            files.paths.emplace_back(p.get<std::string>());
        return files;
    }
    if (type != "oai")
        throw std::invalid_argument("unknown source type '" + type + "'");
    oai::EndpointConfig c;
    c.base_url = j.at("base_url").get<std::string>();
    c.metadata_prefix = j.value("metadata_prefix", std::string("oai_dc"));
    c.set_spec = optional_field<std::string>(j, "set");
    auto stamp = [&](const char* key) -> std::optional<Datestamp> {
        auto text = optional_field<std::string>(j, key);
        if (!text)
            return std::nullopt;
        auto d = Datestamp::parse(*text);
        if (!d)
            throw std::invalid_argument(std::string("bad '") + key + "' datestamp '" + *text + "'");
        return d;
    };
    c.from = stamp("from");
    c.until = stamp("until");
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_base = std::chrono::milliseconds(j.value("backoff_ms", c.backoff_base.count()));
    c.request_timeout = std::chrono::seconds(j.value("timeout_s", c.request_timeout.count()));
    return c;
}

json mapping_to_json(const dc::FieldMapping& m) {
    json sources = json::array();
    for (auto e : m.source_elements)
        sources.push_back(dc::name_of(e));
    json j = {{"source_elements", sources}, {"target_element", dc::name_of(m.target_element)}};
    j["language_filter"] = m.language_filter ? json(*m.language_filter) : json(nullptr);
    return j;
}

dc::FieldMapping mapping_from_json(const json& j) {
    dc::FieldMapping m;
    if (j.contains("source_elements")) {
        m.source_elements.clear();
        for (const auto& e : j.at("source_elements"))
            m.source_elements.push_back(element_or_throw(e.get<std::string>()));
    }
    if (j.contains("target_element"))
        m.target_element = element_or_throw(j.at("target_element").get<std::string>());
    m.language_filter = optional_field<std::string>(j, "language_filter");
    return m;
}

json pipeline_to_json(const text::PipelineConfig& p) {
    return {{"lowercase", p.lowercase},
            {"min_token_length", p.min_token_length},
            {"stopwords", p.stopwords},
            {"strip_punctuation", p.strip_punctuation}};
}

text::PipelineConfig pipeline_from_json(const json& j) {
    text::PipelineConfig p;
    p.lowercase = j.value("lowercase", p.lowercase);
    p.min_token_length = j.value("min_token_length", p.min_token_length);
    p.strip_punctuation = j.value("strip_punctuation", p.strip_punctuation);
    if (j.contains("stopwords")) {
        p.stopwords.clear();
        for (const auto& w : j.at("stopwords"))
            p.stopwords.insert(w.get<std::string>());
    }
    return p;
}

void to_json(json& j, const RepositoryRecord& r) {
    j = {{"repo_id", r.repo_id},
         {"name", r.name},
         {"owner", r.owner},
         {"source", source_to_json(r.source)},
         {"mapping", mapping_to_json(r.mapping)},
         {"pipeline", pipeline_to_json(r.pipeline)},
         {"min_target_df", r.min_target_df},
         {"anonymous_suggest", r.anonymous_suggest},
         {"status", status_name(r.status)},
         {"published_snapshot", r.published_snapshot ? json(r.published_snapshot->str()) : json(nullptr)},
         {"last_error", r.last_error ? json(*r.last_error) : json(nullptr)},
         {"last_sequence", r.last_sequence},
         {"created_at", time_to_string(r.created_at)}};
}

void from_json(const json& j, RepositoryRecord& r) {
    r.repo_id = j.at("repo_id").get<std::string>();
    r.name = j.at("name").get<std::string>();
    r.owner = j.at("owner").get<std::string>();
    r.source = source_from_json(j.at("source"));
    r.mapping = mapping_from_json(j.at("mapping"));
    r.pipeline = pipeline_from_json(j.at("pipeline"));
    r.min_target_df = j.value("min_target_df", std::uint64_t{1});
    r.anonymous_suggest = j.value("anonymous_suggest", false);
    auto status = status_from_name(j.at("status").get<std::string>());
    if (!status)
        throw std::invalid_argument("bad repository status");
    r.status = *status;
    r.published_snapshot = optional_field<SnapshotId>(j, "published_snapshot");
    r.last_error = optional_field<std::string>(j, "last_error");
    r.last_sequence = j.value("last_sequence", std::uint64_t{0});
    r.created_at = time_from_string(j.at("created_at").get<std::string>());
}

void to_json(json& j, const Job& job) {
    auto opt_time = [](const std::optional<Clock::time_point>& t) { return t ? json(time_to_string(*t)) : json(nullptr); };
    j = {{"job_id", job.job_id},
         {"repo_id", job.repo_id},
         {"created_at", time_to_string(job.created_at)},
         {"started_at", opt_time(job.started_at)},
         {"finished_at", opt_time(job.finished_at)},
         {"stage", stage_name(job.stage)},
         {"progress", {{"harvested", job.progress.harvested}, {"processed", job.progress.processed}}},
         {"error", job.error ? json(*job.error) : json(nullptr)},
         {"failed_stage", job.failed_stage ? json(stage_name(*job.failed_stage)) : json(nullptr)},
         {"snapshot", job.snapshot ? json(job.snapshot->str()) : json(nullptr)}};
    if (job.files_override) {
        json paths = json::array();
        for (const auto& p : job.files_override->paths)
            paths.push_back(p.string());
        j["files_override"] = paths;
    }
}

void from_json(const json& j, Job& job) {
    auto opt_time = [&](const char* key) -> std::optional<Clock::time_point> {
        auto s = optional_field<std::string>(j, key);
        return s ? std::optional(time_from_string(*s)) : std::nullopt;
    };
    auto stage = [](const std::string& name) {
        auto s = stage_from_name(name);
        if (!s)
            throw std::invalid_argument("bad job stage '" + name + "'");
        return *s;
    };
    job.job_id = j.at("job_id").get<std::string>();
    job.repo_id = j.at("repo_id").get<std::string>();
    job.created_at = time_from_string(j.at("created_at").get<std::string>());
    job.started_at = opt_time("started_at");
    job.finished_at = opt_time("finished_at");
    job.stage = stage(j.at("stage").get<std::string>());
    job.progress.harvested = j.at("progress").value("harvested", std::uint64_t{0});
    job.progress.processed = j.at("progress").value("processed", std::uint64_t{0});
    job.error = optional_field<std::string>(j, "error");
    if (auto fs = optional_field<std::string>(j, "failed_stage"))
        job.failed_stage = stage(*fs);
    job.snapshot = optional_field<SnapshotId>(j, "snapshot");
    if (j.contains("files_override")) {
        FileSet files;
        for (const auto& p : j.at("files_override"))
            files.paths.emplace_back(p.get<std::string>());
        job.files_override = std::move(files);
    }
}

void to_json(json& j, const StoredKey& k) {
    j = {{"key_id", k.key_id},       {"owner", k.owner},
         {"salt", k.salt_hex},       {"hash", k.hash_hex},
         {"created_at", time_to_string(k.created_at)}, {"revoked", k.revoked}};
}

void from_json(const json& j, StoredKey& k) {
    k.key_id = j.at("key_id").get<std::string>();
    k.owner = j.at("owner").get<std::string>();
    k.salt_hex = j.at("salt").get<std::string>();
    k.hash_hex = j.at("hash").get<std::string>();
    k.created_at = time_from_string(j.at("created_at").get<std::string>());
    k.revoked = j.value("revoked", false);
}

}  // namespace termrec
