#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "termrec/cooccurrence.hpp"
#include "termrec/oai_harvester.hpp"
#include "termrec/records.hpp"
#include "termrec/store.hpp"

namespace termrec::pipeline {

class UnknownRepository : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownJob : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class JobAlreadyActive : public std::runtime_error {
public:
    JobAlreadyActive(const std::string& repo_id, std::string job_id)
        : std::runtime_error("job already active for repository '" + repo_id + "': " + job_id),
          job_id_(std::move(job_id)) {}
    const std::string& job_id() const noexcept { return job_id_; }

private:
    std::string job_id_;
};

using TransportFactory = std::function<std::unique_ptr<oai::HttpTransport>(const oai::EndpointConfig&)>;

struct SchedulerOptions {
    std::size_t workers = 2;
    /// Hard limit on one job's run time; unlimited when unset.
    std::optional<std::chrono::milliseconds> job_timeout;
    /// Overrides for the harvester, mostly for tests.
    TransportFactory transport_factory;
    oai::Sleeper sleeper;
    cooc::BuilderOptions builder;
    /// Minimum interval between progress writes to the store.
    std::chrono::milliseconds progress_interval{250};
};

/// Owns the job lifecycle: schedule -> harvest -> process -> persist -> publish.
/// All lifecycle transitions go through one mutex; stages of a job run
/// sequentially on a worker (or the caller of run_job).
class Scheduler {
public:
    explicit Scheduler(store::Store& store, SchedulerOptions options = {});
    ~Scheduler();
    Scheduler(const Scheduler&) = delete;
    Scheduler& operator=(const Scheduler&) = delete;

    /// Queues a job and marks the repository scheduled. Throws
    /// UnknownRepository or JobAlreadyActive. With workers running, the job
    /// is picked up automatically.
    Job schedule(const std::string& repo_id, std::optional<FileSet> files_override = std::nullopt);

    /// Runs a queued job on the calling thread and returns its final state.
    /// Stage failures are recorded in the job, not thrown.
    Job run_job(const std::string& job_id);

    /// Throws UnknownJob.
    Job job_status(const std::string& job_id) const;
    std::optional<Job> active_job(const std::string& repo_id) const;

    /// Fails jobs left mid-stage by a previous process and queues the ones
    /// still waiting. Call before start() when taking over a store.
    void recover();
    void start();
    void stop();
    /// Blocks until no job is queued or running.
    void wait_idle();

private:
    void worker_loop(std::stop_token stop);
    void execute(Job& job);
    void update(Job& job, bool force);
    void fail(Job& job, JobStage stage, const std::string& message);

    store::Store& store_;
    SchedulerOptions options_;

    mutable std::mutex mutex_;
    std::condition_variable_any cv_;
    std::condition_variable idle_cv_;
    std::deque<std::string> queue_;
    std::map<std::string, Job> live_;  // jobs queued or running in this process
    std::size_t running_ = 0;
    std::vector<std::jthread> workers_;
};

}  // namespace termrec::pipeline
