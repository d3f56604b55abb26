#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "termrec/cooccurrence.hpp"
#include "termrec/oai_harvester.hpp"
#include "termrec/records.hpp"
#include "termrec/snapshot_format.hpp"

namespace termrec::store {

class NotFound : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Conflict : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class StorageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using snapshot::CorruptSnapshot;

/// What the serving layer reads: one immutable index together with the
/// pipeline settings its queries must be normalized with.
struct PublishedSnapshot {
    SnapshotId id;
    std::shared_ptr<const cooc::CooccurrenceIndex> index;
    text::PipelineConfig pipeline;
    std::uint64_t min_target_df = 1;
};

/// Persistence for repositories, jobs, API keys, harvested records and index
/// snapshots. Writers are expected to be single per repository; readers of
/// published snapshots may be arbitrarily concurrent.
class Store {
public:
    virtual ~Store() = default;

    /// Assigns repo_id and created_at. Throws Conflict if the owner already has
    /// a repository with this name.
    virtual RepositoryRecord create_repository(RepositoryRecord draft) = 0;
    virtual std::optional<RepositoryRecord> repository(const std::string& repo_id) const = 0;
    virtual std::vector<RepositoryRecord> repositories() const = 0;
    /// Throws LifecycleError for a transition the lifecycle does not allow.
    virtual RepositoryRecord set_status(const std::string& repo_id, RepoStatus status,
                                        std::optional<std::string> error = std::nullopt) = 0;

    virtual void save_raw_records(const std::string& repo_id, std::span<const oai::RawRecord> records) = 0;
    virtual std::optional<std::vector<oai::RawRecord>> raw_records(const std::string& repo_id) const = 0;

    /// Durable once this returns. Sequence numbers strictly increase per repository.
    virtual SnapshotId persist_snapshot(const std::string& repo_id, const cooc::CooccurrenceIndex& index) = 0;
    virtual cooc::CooccurrenceIndex load_snapshot(const SnapshotId& id) const = 0;
    /// Makes `id` the served snapshot of `repo_id` in one step and sets the
    /// repository status to published.
    virtual void publish(const std::string& repo_id, const SnapshotId& id) = 0;
    /// The snapshot currently served, or null if nothing was published.
    virtual std::shared_ptr<const PublishedSnapshot> published(const std::string& repo_id) const = 0;

    virtual void save_job(const Job& job) = 0;
    virtual std::optional<Job> job(const std::string& job_id) const = 0;
    virtual std::vector<Job> jobs() const = 0;

    virtual void save_keys(const std::vector<StoredKey>& keys) = 0;
    virtual std::vector<StoredKey> load_keys() const = 0;
    /// Changes whenever the key table changes, including from another process.
    virtual std::string keys_version() const = 0;
};

struct FileStoreOptions {
    /// Snapshot files kept per repository besides the published one.
    std::size_t retain_snapshots = 2;
    bool retain_raw_records = true;
};

/// Directory layout:
///   <root>/repos/<repo_id>/repository.json
///   <root>/repos/<repo_id>/snapshots/<sequence>.snap
///   <root>/repos/<repo_id>/raw/records.xml
///   <root>/jobs/<job_id>.json
///   <root>/keys.json
/// Every file is replaced through write-to-temp and rename.
class FileStore final : public Store {
public:
    explicit FileStore(std::filesystem::path root, FileStoreOptions options = {});

    const std::filesystem::path& root() const { return root_; }

    RepositoryRecord create_repository(RepositoryRecord draft) override;
    std::optional<RepositoryRecord> repository(const std::string& repo_id) const override;
    std::vector<RepositoryRecord> repositories() const override;
    RepositoryRecord set_status(const std::string& repo_id, RepoStatus status,
                                std::optional<std::string> error = std::nullopt) override;

    void save_raw_records(const std::string& repo_id, std::span<const oai::RawRecord> records) override;
    std::optional<std::vector<oai::RawRecord>> raw_records(const std::string& repo_id) const override;

    SnapshotId persist_snapshot(const std::string& repo_id, const cooc::CooccurrenceIndex& index) override;
    cooc::CooccurrenceIndex load_snapshot(const SnapshotId& id) const override;
    void publish(const std::string& repo_id, const SnapshotId& id) override;
    std::shared_ptr<const PublishedSnapshot> published(const std::string& repo_id) const override;

    void save_job(const Job& job) override;
    std::optional<Job> job(const std::string& job_id) const override;
    std::vector<Job> jobs() const override;

    void save_keys(const std::vector<StoredKey>& keys) override;
    std::vector<StoredKey> load_keys() const override;
    std::string keys_version() const override;

    std::filesystem::path snapshot_path(const SnapshotId& id) const;

private:
    std::filesystem::path repo_dir(const std::string& repo_id) const;
    void write_repository(const RepositoryRecord& r);
    std::optional<RepositoryRecord> read_repository(const std::string& repo_id) const;
    void prune_snapshots(const RepositoryRecord& r);

    std::filesystem::path root_;
    FileStoreOptions options_;

    // Repository records are re-read when their file changes on disk.
    struct CachedRepository {
        std::string signature;
        RepositoryRecord record;
    };

    mutable std::mutex mutex_;  // guards the caches below and all metadata writes
    mutable std::map<std::string, CachedRepository> repos_;
    mutable std::map<std::string, std::shared_ptr<const PublishedSnapshot>> served_;
};

/// Writes `bytes` to `path` atomically: temp file, fsync, rename.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

/// Random lowercase hex identifier with a prefix, e.g. "repo-1f3a...".
std::string random_id(std::string_view prefix);

}  // namespace termrec::store
