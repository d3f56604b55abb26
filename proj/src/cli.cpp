#include "termrec/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <pthread.h>

#include "termrec/pipeline.hpp"
#include "termrec/store.hpp"
#include "termrec/suggestion_service.hpp"

namespace termrec::cli {

namespace {

using nlohmann::json;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::string store = "termrec-data";
    std::string format = "human";
    std::size_t workers = 2;
    double rate_limit = 100;
    std::string admin_token;
    double job_timeout = 0;
    std::string log_level = "warn";
    std::string listen = "127.0.0.1:8080";
    bool allow_file_sources = false;
};

std::string fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string time_or_dash(const std::optional<Clock::time_point>& t) { return t ? time_to_string(*t) : "-"; }

RepositoryRecord resolve_repo(const store::Store& store, const std::string& ref) {
    if (auto r = store.repository(ref))
        return *r;
    std::vector<RepositoryRecord> matches;
    for (auto& r : store.repositories())
        if (r.name == ref)
            matches.push_back(std::move(r));
    if (matches.empty())
        throw std::runtime_error("unknown repository '" + ref + "'");
    if (matches.size() > 1)
        throw std::runtime_error("repository name '" + ref + "' is ambiguous; use the repository id");
    return matches.front();
}

pipeline::SchedulerOptions scheduler_options(const Globals& g) {
    pipeline::SchedulerOptions o;
    o.workers = g.workers;
    if (g.job_timeout > 0)
        o.job_timeout = std::chrono::milliseconds(static_cast<long long>(g.job_timeout * 1000));
    return o;
}

void print_job(std::ostream& out, const Globals& g, const Job& job) {
    if (g.format == "json") {
        out << json(job).dump(2) << '\n';
        return;
    }
    out << "job " << job.job_id << " " << stage_name(job.stage) << "\n"
        << "  repository  " << job.repo_id << "\n"
        << "  harvested   " << job.progress.harvested << "\n"
        << "  processed   " << job.progress.processed << "\n"
        << "  created     " << time_to_string(job.created_at) << "\n"
        << "  started     " << time_or_dash(job.started_at) << "\n"
        << "  finished    " << time_or_dash(job.finished_at) << "\n";
    if (job.snapshot)
        out << "  snapshot    " << job.snapshot->str() << "\n";
    if (job.error)
        out << "  error       " << *job.error << "\n";
}

void print_repo(std::ostream& out, const Globals& g, const RepositoryRecord& r, const std::optional<Job>& active) {
    if (g.format == "json") {
        json j = r;
        if (active)
            j["active_job"] = active->job_id;
        out << j.dump(2) << '\n';
        return;
    }
    out << "repository " << r.repo_id << " " << status_name(r.status) << "\n"
        << "  name        " << r.name << "\n"
        << "  owner       " << r.owner << "\n"
        << "  snapshot    " << (r.published_snapshot ? r.published_snapshot->str() : "-") << "\n";
    if (active)
        out << "  active job  " << active->job_id << " (" << stage_name(active->stage) << ")\n";
    if (r.last_error)
        out << "  last error  " << *r.last_error << "\n";
}

int finish_job(std::ostream& out, std::ostream& err, const Globals& g, const Job& job) {
    print_job(out, g, job);
    if (job.stage == JobStage::failed) {
        err << "error: " << job.error.value_or("job failed") << "\n";
        return 1;
    }
    return 0;
}

sigset_t termination_signals() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    return set;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Term suggestions from co-occurrence in OAI-PMH harvested metadata", "termrec"};
    app.require_subcommand(1);
    Globals g;

    app.set_config("--config", "", "key=value configuration file")->envname("TERMREC_CONFIG");
    app.add_option("--store", g.store, "storage directory")->envname("TERMREC_STORE")->capture_default_str();
    app.add_option("--format", g.format, "output format")
        ->check(CLI::IsMember({"human", "json"}))
        ->capture_default_str();
    app.add_option("--workers", g.workers, "background job workers")->envname("TERMREC_WORKERS")->capture_default_str();
    app.add_option("--rate-limit", g.rate_limit, "requests per second per key (0 disables)")
        ->envname("TERMREC_RATE_LIMIT")
        ->capture_default_str();
    app.add_option("--admin-token", g.admin_token, "credential for key management over HTTP")
        ->envname("TERMREC_ADMIN_TOKEN");
    app.add_option("--job-timeout", g.job_timeout, "job time limit in seconds (0 means none)")
        ->envname("TERMREC_JOB_TIMEOUT")
        ->capture_default_str();
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off")
        ->envname("TERMREC_LOG_LEVEL")
        ->capture_default_str();
    app.add_option("--listen", g.listen, "address for serve, host:port")->envname("TERMREC_LISTEN")->capture_default_str();
    app.add_flag("--allow-file-sources", g.allow_file_sources, "let HTTP clients register local file sources")
        ->envname("TERMREC_ALLOW_FILE_SOURCES");

    // register
    auto* reg = app.add_subcommand("register", "register a repository");
    std::string name, endpoint, set_spec, from, until, target_element = "subject", language, stopwords_file;
    std::string owner = "operator";
    std::vector<std::string> files, source_elements;
    std::uint64_t min_df = 1;
    std::size_t min_token_length = 2;
    bool no_identify = false, keep_case = false, anonymous = false;
    reg->add_option("name", name, "repository name")->required();
    auto* endpoint_opt = reg->add_option("--endpoint", endpoint, "OAI-PMH base URL");
    reg->add_option("--files", files, "local oai_dc files or directories")->excludes(endpoint_opt);
    reg->add_option("--set", set_spec, "OAI-PMH set")->needs(endpoint_opt);
    reg->add_option("--from", from, "harvest from datestamp")->needs(endpoint_opt);
    reg->add_option("--until", until, "harvest until datestamp")->needs(endpoint_opt);
    reg->add_option("--source-elements", source_elements, "free-text elements (default title,description)")
        ->delimiter(',');
    reg->add_option("--target-element", target_element, "controlled-term element")->capture_default_str();
    reg->add_option("--language", language, "only use values in this language");
    reg->add_option("--min-df", min_df, "minimum target document frequency")->capture_default_str();
    reg->add_option("--min-token-length", min_token_length, "shortest kept token")->capture_default_str();
    reg->add_option("--stopwords", stopwords_file, "stopword file, one word per line")->check(CLI::ExistingFile);
    reg->add_flag("--keep-case", keep_case, "do not lowercase terms");
    reg->add_option("--owner", owner, "owning user")->capture_default_str();
    reg->add_flag("--no-identify", no_identify, "skip the Identify check");
    reg->add_flag("--anonymous-suggest", anonymous, "answer suggest requests without an API key");

    // schedule
    auto* sched = app.add_subcommand("schedule", "queue a harvest and build job");
    std::string repo_ref;
    bool wait = false;
    sched->add_option("repo", repo_ref, "repository id or name")->required();
    sched->add_flag("--wait", wait, "run the job now and wait for it");

    auto* status = app.add_subcommand("status", "show a repository or job");
    std::string status_ref;
    status->add_option("target", status_ref, "repository id or name, or job id")->required();

    auto* sug = app.add_subcommand("suggest", "suggest related terms");
    std::string term, metric_text = "jaccard";
    std::size_t k = service::kDefaultK;
    sug->add_option("repo", repo_ref, "repository id or name")->required();
    sug->add_option("term", term, "query term or phrase")->required();
    sug->add_option("--k", k, "number of suggestions (at most 100)")->capture_default_str();
    sug->add_option("--metric", metric_text, "jaccard, dice or nwd")
        ->check(CLI::IsMember({"jaccard", "dice", "nwd"}))
        ->capture_default_str();

    auto* ingest = app.add_subcommand("ingest", "build a repository from local files");
    std::vector<std::string> ingest_files;
    ingest->add_option("repo", repo_ref, "repository id or name")->required();
    ingest->add_option("files", ingest_files, "oai_dc files or directories")->required();

    auto* exp = app.add_subcommand("export", "dump the recommendation table");
    std::size_t per_term = 0;
    std::string output;
    exp->add_option("repo", repo_ref, "repository id or name")->required();
    exp->add_option("--metric", metric_text, "jaccard, dice or nwd")
        ->check(CLI::IsMember({"jaccard", "dice", "nwd"}))
        ->capture_default_str();
    exp->add_option("--per-term", per_term, "recommendations per source term (0 means all)")->capture_default_str();
    exp->add_option("--output", output, "write to this file instead of stdout");

    auto* keys = app.add_subcommand("keys", "manage API keys");
    keys->require_subcommand(1);
    auto* keys_issue = keys->add_subcommand("issue", "issue a key");
    std::string key_owner, key_id;
    keys_issue->add_option("owner", key_owner, "user the key belongs to")->required();
    auto* keys_revoke = keys->add_subcommand("revoke", "revoke a key");
    keys_revoke->add_option("key", key_id, "key id or full key")->required();
    auto* keys_list = keys->add_subcommand("list", "list keys");

    auto* serve = app.add_subcommand("serve", "run the HTTP service and job workers");

    auto all = [](CLI::App*) { return true; };
    for (auto* sub : app.get_subcommands(all))
        sub->fallthrough();
    for (auto* sub : keys->get_subcommands(all))
        sub->fallthrough();

    CLI::App* failing = &app;
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().back();
        out << sub->help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        for (auto* sub : app.get_subcommands())
            failing = sub;
        err << "error: " << e.what() << "\n" << failing->help();
        return 2;
    }

    if (!spdlog::get("termrec"))
        spdlog::set_default_logger(spdlog::stderr_color_mt("termrec"));
    spdlog::set_level(spdlog::level::from_str(g.log_level));

    try {
        store::FileStore store(g.store);

        if (reg->parsed()) {
            RepositoryRecord draft;
            draft.name = name;
            draft.owner = owner;
            if (!files.empty()) {
                FileSet set;
                for (const auto& f : files)
                    set.paths.emplace_back(f);
                draft.source = std::move(set);
            } else if (!endpoint.empty()) {
                oai::EndpointConfig c;
                c.base_url = endpoint;
                if (!set_spec.empty())
                    c.set_spec = set_spec;
                auto stamp = [](const std::string& text) {
                    auto d = Datestamp::parse(text);
                    if (!d)
                        throw UsageError("bad datestamp '" + text + "'");
                    return *d;
                };
                if (!from.empty())
                    c.from = stamp(from);
                if (!until.empty())
                    c.until = stamp(until);
                c.validate();
                draft.source = std::move(c);
            } else {
                throw UsageError("register needs --endpoint or --files");
            }
            if (!source_elements.empty()) {
                draft.mapping.source_elements.clear();
                for (const auto& e : source_elements) {
                    auto el = dc::element_from_name(e);
                    if (!el)
                        throw UsageError("unknown Dublin Core element '" + e + "'");
                    draft.mapping.source_elements.push_back(*el);
                }
            }
            auto target = dc::element_from_name(target_element);
            if (!target)
                throw UsageError("unknown Dublin Core element '" + target_element + "'");
            draft.mapping.target_element = *target;
            if (!language.empty())
                draft.mapping.language_filter = language;
            draft.mapping.validate();
            draft.pipeline.lowercase = !keep_case;
            draft.pipeline.min_token_length = min_token_length;
            if (!stopwords_file.empty())
                draft.pipeline.stopwords = text::load_stopwords(stopwords_file);
            draft.pipeline.validate();
            if (min_df == 0)
                throw UsageError("--min-df must be at least 1");
            draft.min_target_df = min_df;
            draft.anonymous_suggest = anonymous;

            if (auto* c = std::get_if<oai::EndpointConfig>(&draft.source); c && !no_identify) {
                auto description = oai::Client(*c).identify();
                spdlog::info("endpoint identifies as '{}'", description.name);
            }
            auto created = store.create_repository(std::move(draft));
            if (g.format == "json")
                out << json(created).dump(2) << '\n';
            else
                out << "registered " << created.repo_id << " (" << created.name << ")\n";
            return 0;
        }

        if (sched->parsed() || ingest->parsed()) {
            auto repo = resolve_repo(store, repo_ref);
            pipeline::Scheduler scheduler(store, scheduler_options(g));
            std::optional<FileSet> override_files;
            if (ingest->parsed()) {
                override_files.emplace();
                for (const auto& f : ingest_files)
                    override_files->paths.emplace_back(f);
            }
            auto job = scheduler.schedule(repo.repo_id, std::move(override_files));
            if (sched->parsed() && !wait) {
                if (g.format == "json")
                    out << json(job).dump(2) << '\n';
                else
                    out << "queued " << job.job_id << " for " << repo.repo_id << "\n";
                return 0;
            }
            return finish_job(out, err, g, scheduler.run_job(job.job_id));
        }

        if (status->parsed()) {
            if (auto job = store.job(status_ref)) {
                print_job(out, g, *job);
                return 0;
            }
            auto repo = resolve_repo(store, status_ref);
            pipeline::Scheduler scheduler(store);
            print_repo(out, g, repo, scheduler.active_job(repo.repo_id));
            return 0;
        }

        if (sug->parsed()) {
            if (term.find_first_not_of(" \t\r\n") == std::string::npos)
                throw UsageError("term must not be empty");
            if (k == 0)
                throw UsageError("--k must be at least 1");
            auto repo = resolve_repo(store, repo_ref);
            auto snapshot = store.published(repo.repo_id);
            if (!snapshot)
                throw std::runtime_error("repository '" + repo_ref + "' has no published snapshot");
            json result;
            try {
                result = service::suggest(*snapshot, {term, k, *cooc::metric_from_name(metric_text)});
            } catch (const service::BadQuery& e) {
                throw UsageError(e.what());
            }
            if (g.format == "json") {
                out << result.dump(2) << '\n';
            } else {
                if (result["term_not_found"].get<bool>())
                    err << "term not found: " << result["query"].get<std::string>() << "\n";
                for (const auto& s : result["suggestions"])
                    out << s["term"].get<std::string>() << " " << fixed3(s["score"].get<double>()) << "\n";
            }
            return 0;
        }

        if (exp->parsed()) {
            auto repo = resolve_repo(store, repo_ref);
            auto snapshot = store.published(repo.repo_id);
            if (!snapshot)
                throw std::runtime_error("repository '" + repo_ref + "' has no published snapshot");
            auto table = service::export_table(*snapshot, *cooc::metric_from_name(metric_text), per_term);
            std::ofstream file;
            if (!output.empty()) {
                file.open(output);
                if (!file)
                    throw std::runtime_error("cannot write '" + output + "'");
            }
            std::ostream& sink = output.empty() ? out : file;
            if (g.format == "json") {
                sink << table.dump(2) << '\n';
            } else {
                sink << "source\tterm\tscore\tdf_term\tdf_joint\n";
                for (const auto& r : table["rows"])
                    sink << r["source"].get<std::string>() << '\t' << r["term"].get<std::string>() << '\t'
                         << r["score"].dump() << '\t' << r["df_term"] << '\t' << r["df_joint"] << '\n';
            }
            return 0;
        }

        if (keys->parsed()) {
            service::KeyRegistry registry(store);
            if (keys_issue->parsed()) {
                auto issued = registry.issue(key_owner);
                if (g.format == "json")
                    out << json{{"key_id", issued.key_id},
                                {"owner", issued.owner},
                                {"key", issued.key},
                                {"created_at", time_to_string(issued.created_at)}}
                               .dump(2)
                        << '\n';
                else
                    out << issued.key << "\n";
                return 0;
            }
            if (keys_revoke->parsed()) {
                if (!registry.revoke(key_id))
                    throw std::runtime_error("unknown key '" + key_id + "'");
                if (g.format == "human")
                    out << "revoked " << key_id.substr(0, key_id.find('.')) << "\n";
                return 0;
            }
            if (keys_list->parsed()) {
                json list = json::array();
                for (const auto& k : registry.list()) {
                    if (g.format == "human")
                        out << k.key_id << '\t' << k.owner << '\t' << time_to_string(k.created_at) << '\t'
                            << (k.revoked ? "revoked" : "active") << '\n';
                    list.push_back({{"key_id", k.key_id},
                                    {"owner", k.owner},
                                    {"created_at", time_to_string(k.created_at)},
                                    {"revoked", k.revoked}});
                }
                if (g.format == "json")
                    out << list.dump(2) << '\n';
                return 0;
            }
        }

        if (serve->parsed()) {
            auto [host, port] = service::parse_listen(g.listen);
            // Block termination signals before any thread starts so only sigwait sees them.
            auto signals = termination_signals();
            pthread_sigmask(SIG_BLOCK, &signals, nullptr);

            pipeline::Scheduler scheduler(store, scheduler_options(g));
            scheduler.recover();
            scheduler.start();
            service::KeyRegistry registry(store);
            service::ServiceOptions options;
            options.rate_limit = g.rate_limit;
            if (!g.admin_token.empty())
                options.admin_token = g.admin_token;
            options.allow_file_sources = g.allow_file_sources;
            service::Service svc(store, scheduler, registry, options);
            service::HttpServer server(svc);
            int bound = server.start(host, port);
            out << "listening on " << host << ":" << bound << std::endl;
            int sig = 0;
            sigwait(&signals, &sig);
            server.stop();
            scheduler.stop();
            return 0;
        }
    } catch (const UsageError& e) {
        for (auto* sub : app.get_subcommands())
            failing = sub;
        err << "error: " << e.what() << "\n" << failing->help();
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << app.help();
    return 2;
}

}  // namespace termrec::cli
