#include "termrec/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

namespace termrec::pipeline {

namespace {

class JobTimeout : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace

Scheduler::Scheduler(store::Store& store, SchedulerOptions options) : store_(store), options_(std::move(options)) {}

Scheduler::~Scheduler() { stop(); }

Job Scheduler::schedule(const std::string& repo_id, std::optional<FileSet> files_override) {
    std::lock_guard lock(mutex_);
    if (!store_.repository(repo_id))
        throw UnknownRepository("unknown repository '" + repo_id + "'");
    for (const auto& [id, job] : live_)
        if (job.repo_id == repo_id && is_active(job.stage))
            throw JobAlreadyActive(repo_id, id);
    for (const auto& job : store_.jobs())
        if (job.repo_id == repo_id && is_active(job.stage))
            throw JobAlreadyActive(repo_id, job.job_id);

    store_.set_status(repo_id, RepoStatus::scheduled);
    Job job;
    job.job_id = store::random_id("job");
    job.repo_id = repo_id;
    job.created_at = Clock::now();
    job.files_override = std::move(files_override);
    store_.save_job(job);
    live_[job.job_id] = job;
    if (!workers_.empty()) {
        queue_.push_back(job.job_id);
        cv_.notify_one();
    }
    spdlog::info("scheduled {} for repository {}", job.job_id, repo_id);
    return job;
}

Job Scheduler::run_job(const std::string& job_id) {
    Job job;
    {
        std::lock_guard lock(mutex_);
        if (auto it = live_.find(job_id); it != live_.end()) {
            job = it->second;
        } else if (auto stored = store_.job(job_id)) {
            job = *stored;
        } else {
            throw UnknownJob("unknown job '" + job_id + "'");
        }
        if (job.stage != JobStage::queued)
            throw LifecycleError("job '" + job_id + "' is " + std::string(stage_name(job.stage)) + ", not queued");
        queue_.erase(std::remove(queue_.begin(), queue_.end(), job_id), queue_.end());
        // Claim the job before releasing the lock so no other caller runs it.
        job.stage = JobStage::harvesting;
        job.started_at = Clock::now();
        live_[job_id] = job;
        ++running_;
    }

    try {
        execute(job);
    } catch (const std::exception& e) {
        spdlog::error("job {} aborted: {}", job_id, e.what());
    }

    std::lock_guard lock(mutex_);
    --running_;
    live_.erase(job_id);
    idle_cv_.notify_all();
    return job;
}

void Scheduler::update(Job& job, bool force) {
    static thread_local Clock::time_point last_write{};
    {
        std::lock_guard lock(mutex_);
        live_[job.job_id] = job;
    }
    auto now = Clock::now();
    if (force || now - last_write >= options_.progress_interval) {
        store_.save_job(job);
        last_write = now;
    }
}

void Scheduler::fail(Job& job, JobStage stage, const std::string& message) {
    job.stage = JobStage::failed;
    job.failed_stage = stage;
    job.error = message;
    job.finished_at = Clock::now();
    spdlog::error("job {} failed: {}", job.job_id, message);
    try {
        store_.set_status(job.repo_id, RepoStatus::failed, message);
    } catch (const std::exception& e) {
        spdlog::error("cannot mark repository {} failed: {}", job.repo_id, e.what());
    }
    update(job, true);
}

void Scheduler::execute(Job& job) {
    auto deadline = options_.job_timeout ? std::optional(Clock::now() + *options_.job_timeout) : std::nullopt;
    auto check_deadline = [&] {
        if (deadline && Clock::now() > *deadline)
            throw JobTimeout("job exceeded its time limit");
    };

    std::optional<RepositoryRecord> repo;
    try {
        repo = store_.repository(job.repo_id);
        if (!repo)
            throw UnknownRepository("repository '" + job.repo_id + "' disappeared");
        store_.set_status(job.repo_id, RepoStatus::harvesting);
    } catch (const std::exception& e) {
        fail(job, JobStage::harvesting, std::string("harvest failed: ") + e.what());
        return;
    }
    update(job, true);

    // Harvest.
    std::vector<oai::RawRecord> records;
    try {
        const FileSet* files = job.files_override ? &*job.files_override : std::get_if<FileSet>(&repo->source);
        if (files) {
            auto result = oai::ingest_files(files->paths);
            for (const auto& f : result.failures)
                spdlog::warn("job {}: skipped {}: {}", job.job_id, f.path.string(), f.message);
            if (result.records.empty() && !result.failures.empty())
                throw oai::HarvestError(std::to_string(result.failures.size()) + " file(s) unreadable, first: " +
                                        result.failures.front().message);
            records = std::move(result.records);
            job.progress.harvested = records.size();
        } else {
            const auto& endpoint = std::get<oai::EndpointConfig>(repo->source);
            auto transport = options_.transport_factory ? options_.transport_factory(endpoint) : nullptr;
            oai::Client client(endpoint, std::move(transport), options_.sleeper);
            records = client.harvest_all([&](std::size_t n) {
                check_deadline();
                job.progress.harvested = std::max<std::uint64_t>(job.progress.harvested, n);
                update(job, false);
            });
            job.progress.harvested = records.size();
        }
        store_.save_raw_records(job.repo_id, records);
    } catch (const std::exception& e) {
        fail(job, JobStage::harvesting, std::string("harvest failed: ") + e.what());
        return;
    }

    // Process.
    cooc::CooccurrenceIndex index;
    try {
        job.stage = JobStage::processing;
        store_.set_status(job.repo_id, RepoStatus::processing);
        update(job, true);
        cooc::IndexBuilder builder(options_.builder);
        std::size_t skipped = 0;
        for (const auto& raw : records) {
            check_deadline();
            if (!raw.deleted) {
                try {
                    auto record = dc::parse_oai_dc(raw);
                    cooc::add_extraction(builder, dc::select_fields(record, repo->mapping), repo->pipeline);
                } catch (const dc::MetadataError& e) {
                    ++skipped;
                    spdlog::warn("job {}: skipped record: {}", job.job_id, e.what());
                }
            }
            ++job.progress.processed;
            update(job, false);
        }
        if (skipped > 0)
            spdlog::warn("job {}: {} record(s) had unusable metadata", job.job_id, skipped);
        index = std::move(builder).build();
    } catch (const std::exception& e) {
        fail(job, JobStage::processing, std::string("processing failed: ") + e.what());
        return;
    }

    // Persist and publish.
    try {
        job.stage = JobStage::persisting;
        update(job, true);
        auto id = store_.persist_snapshot(job.repo_id, index);
        check_deadline();
        store_.publish(job.repo_id, id);
        job.snapshot = id;
    } catch (const std::exception& e) {
        fail(job, JobStage::persisting, std::string("persisting failed: ") + e.what());
        return;
    }

    job.stage = JobStage::done;
    job.finished_at = Clock::now();
    update(job, true);
    spdlog::info("job {} done: {} documents, snapshot {}", job.job_id, index.n_docs(), job.snapshot->str());
}

Job Scheduler::job_status(const std::string& job_id) const {
    {
        std::lock_guard lock(mutex_);
        if (auto it = live_.find(job_id); it != live_.end())
            return it->second;
    }
    if (auto stored = store_.job(job_id))
        return *stored;
    throw UnknownJob("unknown job '" + job_id + "'");
}

std::optional<Job> Scheduler::active_job(const std::string& repo_id) const {
    {
        std::lock_guard lock(mutex_);
        for (const auto& [id, job] : live_)
            if (job.repo_id == repo_id && is_active(job.stage))
                return job;
    }
    for (const auto& job : store_.jobs())
        if (job.repo_id == repo_id && is_active(job.stage))
            return job;
    return std::nullopt;
}

void Scheduler::recover() {
    std::lock_guard lock(mutex_);
    for (auto job : store_.jobs()) {
        if (!is_active(job.stage) || live_.contains(job.job_id))
            continue;
        if (job.stage == JobStage::queued) {
            live_[job.job_id] = job;
            queue_.push_back(job.job_id);
            continue;
        }
        auto stage = job.stage;
        job.stage = JobStage::failed;
        job.failed_stage = stage;
        job.error = "interrupted: the process running this job stopped";
        job.finished_at = Clock::now();
        store_.save_job(job);
        try {
            store_.set_status(job.repo_id, RepoStatus::failed, job.error);
        } catch (const std::exception& e) {
            spdlog::warn("recover: {}", e.what());
        }
    }
    cv_.notify_all();
}

void Scheduler::start() {
    std::lock_guard lock(mutex_);
    if (!workers_.empty())
        return;
    for (const auto& [id, job] : live_)
        if (job.stage == JobStage::queued && std::find(queue_.begin(), queue_.end(), id) == queue_.end())
            queue_.push_back(id);
    for (std::size_t i = 0; i < std::max<std::size_t>(1, options_.workers); ++i)
        workers_.emplace_back([this](std::stop_token st) { worker_loop(st); });
}

void Scheduler::stop() {
    std::vector<std::jthread> workers;
    {
        std::lock_guard lock(mutex_);
        workers.swap(workers_);
    }
    for (auto& w : workers)
        w.request_stop();
    cv_.notify_all();
    workers.clear();  // joins
}

void Scheduler::wait_idle() {
    std::unique_lock lock(mutex_);
    idle_cv_.wait(lock, [this] { return queue_.empty() && running_ == 0; });
}

void Scheduler::worker_loop(std::stop_token stop) {
    for (;;) {
        std::string job_id;
        {
            std::unique_lock lock(mutex_);
            if (!cv_.wait(lock, stop, [this] { return !queue_.empty(); }))
                return;
            job_id = queue_.front();
            queue_.pop_front();
        }
        try {
            run_job(job_id);
        } catch (const std::exception& e) {
            spdlog::error("worker: job {}: {}", job_id, e.what());
            std::lock_guard lock(mutex_);
            idle_cv_.notify_all();
        }
    }
}

}  // namespace termrec::pipeline
