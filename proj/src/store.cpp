#include "termrec/store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace termrec::store {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<std::uint64_t> sequence_of(const fs::path& file) {
    if (file.extension() != ".snap")
        return std::nullopt;
    auto stem = file.stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](char c) { return c >= '0' && c <= '9'; }))
        return std::nullopt;
    return std::stoull(stem);
}

std::vector<std::uint64_t> snapshot_sequences(const fs::path& dir) {
    std::vector<std::uint64_t> out;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec))
        if (auto seq = sequence_of(entry.path()))
            out.push_back(*seq);
    std::sort(out.begin(), out.end());
    return out;
}

std::optional<std::string> stat_signature(const fs::path& path) {
    struct stat st {};
    if (::stat(path.c_str(), &st) != 0)
        return std::nullopt;
    return std::to_string(st.st_mtim.tv_sec) + "." + std::to_string(st.st_mtim.tv_nsec) + "/" +
           std::to_string(st.st_size) + "/" + std::to_string(st.st_ino);
}

void check_repo_id(const std::string& repo_id) {
    if (repo_id.empty() || repo_id.find_first_of("/\\:.") != std::string::npos)
        throw NotFound("unknown repository '" + repo_id + "'");
}

}  // namespace

void atomic_write(const fs::path& path, std::string_view bytes) {
    static std::atomic<std::uint64_t> counter{0};
    fs::path tmp = path;
    tmp += ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1));
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
    if (fd < 0)
        throw StorageError("cannot create " + tmp.string() + ": " + std::strerror(errno));
    std::size_t written = 0;
    while (written < bytes.size()) {
        auto n = ::write(fd, bytes.data() + written, bytes.size() - written);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            int err = errno;
            ::close(fd);
            ::unlink(tmp.c_str());
            throw StorageError("cannot write " + tmp.string() + ": " + std::strerror(err));
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0 || ::close(fd) != 0) {
        int err = errno;
        ::unlink(tmp.c_str());
        throw StorageError("cannot flush " + tmp.string() + ": " + std::strerror(err));
    }
    if (::rename(tmp.c_str(), path.c_str()) != 0) {
        int err = errno;
        ::unlink(tmp.c_str());
        throw StorageError("cannot rename into " + path.string() + ": " + std::strerror(err));
    }
    int dir = ::open(path.parent_path().c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
    if (dir >= 0) {
        ::fsync(dir);
        ::close(dir);
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw NotFound("cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string random_id(std::string_view prefix) {
    thread_local std::mt19937_64 rng{std::random_device{}()};
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(prefix);
    out += '-';
    auto v = rng();
    for (int i = 0; i < 16; ++i)
        out += kHex[(v >> (4 * i)) & 15];
    return out;
}

FileStore::FileStore(fs::path root, FileStoreOptions options) : root_(std::move(root)), options_(options) {
    std::error_code ec;
    fs::create_directories(root_ / "repos", ec);
    fs::create_directories(root_ / "jobs", ec);
    if (!fs::is_directory(root_ / "repos") || !fs::is_directory(root_ / "jobs"))
        throw StorageError("cannot initialize store at " + root_.string());
}

fs::path FileStore::repo_dir(const std::string& repo_id) const { return root_ / "repos" / repo_id; }

fs::path FileStore::snapshot_path(const SnapshotId& id) const {
    char name[32];
    std::snprintf(name, sizeof name, "%012llu.snap", static_cast<unsigned long long>(id.sequence));
    return repo_dir(id.repo_id) / "snapshots" / name;
}

void FileStore::write_repository(const RepositoryRecord& r) {
    auto path = repo_dir(r.repo_id) / "repository.json";
    atomic_write(path, json(r).dump(2));
    if (auto sig = stat_signature(path))
        repos_[r.repo_id] = CachedRepository{*sig, r};
}

std::optional<RepositoryRecord> FileStore::read_repository(const std::string& repo_id) const {
    check_repo_id(repo_id);
    auto path = repo_dir(repo_id) / "repository.json";
    auto sig = stat_signature(path);
    if (!sig) {
        repos_.erase(repo_id);
        return std::nullopt;
    }
    if (auto it = repos_.find(repo_id); it != repos_.end() && it->second.signature == *sig)
        return it->second.record;
    try {
        RepositoryRecord r = json::parse(read_file(path)).get<RepositoryRecord>();
        repos_[repo_id] = CachedRepository{*sig, r};
        return r;
    } catch (const json::exception& e) {
        throw StorageError("unreadable repository record " + path.string() + ": " + e.what());
    }
}

RepositoryRecord FileStore::create_repository(RepositoryRecord draft) {
    std::lock_guard lock(mutex_);
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(root_ / "repos", ec)) {
        auto existing = read_repository(entry.path().filename().string());
        if (existing && existing->owner == draft.owner && existing->name == draft.name)
            throw Conflict("repository '" + draft.name + "' already exists for owner '" + draft.owner + "'");
    }
    do {
        draft.repo_id = random_id("repo");
    } while (fs::exists(repo_dir(draft.repo_id)));
    draft.created_at = Clock::now();
    draft.status = RepoStatus::registered;
    draft.published_snapshot.reset();
    draft.last_sequence = 0;
    fs::create_directories(repo_dir(draft.repo_id) / "snapshots", ec);
    if (ec)
        throw StorageError("cannot create repository directory: " + ec.message());
    write_repository(draft);
    return draft;
}

std::optional<RepositoryRecord> FileStore::repository(const std::string& repo_id) const {
    std::lock_guard lock(mutex_);
    try {
        return read_repository(repo_id);
    } catch (const NotFound&) {
        return std::nullopt;
    }
}

std::vector<RepositoryRecord> FileStore::repositories() const {
    std::lock_guard lock(mutex_);
    std::vector<RepositoryRecord> out;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(root_ / "repos", ec))
        if (auto r = read_repository(entry.path().filename().string()))
            out.push_back(std::move(*r));
    std::sort(out.begin(), out.end(),
              [](const RepositoryRecord& a, const RepositoryRecord& b) { return a.created_at < b.created_at; });
    return out;
}

RepositoryRecord FileStore::set_status(const std::string& repo_id, RepoStatus status, std::optional<std::string> error) {
    std::lock_guard lock(mutex_);
    auto r = read_repository(repo_id);
    if (!r)
        throw NotFound("unknown repository '" + repo_id + "'");
    if (!can_transition(r->status, status))
        throw LifecycleError("repository '" + repo_id + "' cannot go from " + std::string(status_name(r->status)) +
                             " to " + std::string(status_name(status)));
    if (status == RepoStatus::published && !r->published_snapshot)
        throw LifecycleError("repository '" + repo_id + "' has no snapshot to publish");
    r->status = status;
    if (status == RepoStatus::failed)
        r->last_error = std::move(error);
    else if (status == RepoStatus::scheduled)
        r->last_error.reset();
    write_repository(*r);
    return *r;
}

void FileStore::save_raw_records(const std::string& repo_id, std::span<const oai::RawRecord> records) {
    if (!options_.retain_raw_records)
        return;
    check_repo_id(repo_id);
    auto dir = repo_dir(repo_id) / "raw";
    std::error_code ec;
    fs::create_directories(dir, ec);
    atomic_write(dir / "records.xml", oai::write_records_document(records));
}

std::optional<std::vector<oai::RawRecord>> FileStore::raw_records(const std::string& repo_id) const {
    check_repo_id(repo_id);
    auto path = repo_dir(repo_id) / "raw" / "records.xml";
    std::error_code ec;
    if (!fs::exists(path, ec))
        return std::nullopt;
    std::vector<fs::path> paths{path};
    auto result = oai::ingest_files(paths);
    if (!result.failures.empty())
        throw StorageError("retained records unreadable: " + result.failures.front().message);
    return std::move(result.records);
}

SnapshotId FileStore::persist_snapshot(const std::string& repo_id, const cooc::CooccurrenceIndex& index) {
    SnapshotId id;
    {
        std::lock_guard lock(mutex_);
        auto r = read_repository(repo_id);
        if (!r)
            throw NotFound("unknown repository '" + repo_id + "'");
        auto on_disk = snapshot_sequences(repo_dir(repo_id) / "snapshots");
        std::uint64_t last = std::max(r->last_sequence, on_disk.empty() ? 0 : on_disk.back());
        id = SnapshotId{repo_id, last + 1};
        r->last_sequence = id.sequence;
        write_repository(*r);
    }
    auto bytes = snapshot::encode(id, index);
    std::error_code ec;
    fs::create_directories(snapshot_path(id).parent_path(), ec);
    atomic_write(snapshot_path(id), std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    return id;
}

cooc::CooccurrenceIndex FileStore::load_snapshot(const SnapshotId& id) const {
    check_repo_id(id.repo_id);
    auto path = snapshot_path(id);
    std::error_code ec;
    if (!fs::exists(path, ec))
        throw NotFound("unknown snapshot '" + id.str() + "'");
    std::string raw = read_file(path);
    auto decoded = snapshot::decode(std::as_bytes(std::span(raw.data(), raw.size())));
    if (decoded.id != id)
        throw CorruptSnapshot("snapshot file " + path.string() + " holds '" + decoded.id.str() + "'");
    return std::move(decoded.index);
}

void FileStore::publish(const std::string& repo_id, const SnapshotId& id) {
    if (id.repo_id != repo_id)
        throw Conflict("snapshot '" + id.str() + "' does not belong to repository '" + repo_id + "'");
    auto index = std::make_shared<const cooc::CooccurrenceIndex>(load_snapshot(id));

    std::lock_guard lock(mutex_);
    auto r = read_repository(repo_id);
    if (!r)
        throw NotFound("unknown repository '" + repo_id + "'");
    if (!can_transition(r->status, RepoStatus::published))
        throw LifecycleError("repository '" + repo_id + "' cannot be published from status " +
                             std::string(status_name(r->status)));
    r->published_snapshot = id;
    r->status = RepoStatus::published;
    r->last_error.reset();
    write_repository(*r);
    served_[repo_id] = std::make_shared<const PublishedSnapshot>(
        PublishedSnapshot{id, std::move(index), r->pipeline, r->min_target_df});
    prune_snapshots(*r);
}

std::shared_ptr<const PublishedSnapshot> FileStore::published(const std::string& repo_id) const {
    std::unique_lock lock(mutex_);
    std::optional<RepositoryRecord> r;
    try {
        r = read_repository(repo_id);
    } catch (const NotFound&) {
    }
    if (!r || !r->published_snapshot)
        return nullptr;
    auto it = served_.find(repo_id);
    if (it != served_.end() && it->second->id == *r->published_snapshot)
        return it->second;

    // Published by another process or before a restart.
    auto id = *r->published_snapshot;
    lock.unlock();
    auto index = std::make_shared<const cooc::CooccurrenceIndex>(load_snapshot(id));
    lock.lock();
    auto current = read_repository(repo_id);
    if (!current || current->published_snapshot != id) {
        lock.unlock();
        return published(repo_id);
    }
    auto view = std::make_shared<const PublishedSnapshot>(
        PublishedSnapshot{id, std::move(index), current->pipeline, current->min_target_df});
    served_[repo_id] = view;
    return view;
}

void FileStore::prune_snapshots(const RepositoryRecord& r) {
    auto dir = repo_dir(r.repo_id) / "snapshots";
    auto seqs = snapshot_sequences(dir);
    std::size_t keep = options_.retain_snapshots;
    for (std::size_t i = 0; i + keep < seqs.size(); ++i) {
        if (r.published_snapshot && r.published_snapshot->sequence == seqs[i])
            continue;
        std::error_code ec;
        fs::remove(snapshot_path(SnapshotId{r.repo_id, seqs[i]}), ec);
    }
}

void FileStore::save_job(const Job& job) {
    std::lock_guard lock(mutex_);
    atomic_write(root_ / "jobs" / (job.job_id + ".json"), json(job).dump(2));
}

std::optional<Job> FileStore::job(const std::string& job_id) const {
    if (job_id.empty() || job_id.find_first_of("/\\.") != std::string::npos)
        return std::nullopt;
    std::lock_guard lock(mutex_);
    auto path = root_ / "jobs" / (job_id + ".json");
    std::error_code ec;
    if (!fs::exists(path, ec))
        return std::nullopt;
    return json::parse(read_file(path)).get<Job>();
}

std::vector<Job> FileStore::jobs() const {
    std::lock_guard lock(mutex_);
    std::vector<Job> out;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(root_ / "jobs", ec)) {
        if (entry.path().extension() != ".json")
            continue;
        try {
            out.push_back(json::parse(read_file(entry.path())).get<Job>());
        } catch (const std::exception&) {
            // A partially written job file cannot exist (atomic rename); skip foreign files.
        }
    }
    std::sort(out.begin(), out.end(), [](const Job& a, const Job& b) { return a.created_at < b.created_at; });
    return out;
}

void FileStore::save_keys(const std::vector<StoredKey>& keys) {
    std::lock_guard lock(mutex_);
    atomic_write(root_ / "keys.json", json{{"keys", keys}}.dump(2));
}

std::vector<StoredKey> FileStore::load_keys() const {
    std::lock_guard lock(mutex_);
    auto path = root_ / "keys.json";
    std::error_code ec;
    if (!fs::exists(path, ec))
        return {};
    return json::parse(read_file(path)).at("keys").get<std::vector<StoredKey>>();
}

std::string FileStore::keys_version() const {
    return stat_signature(root_ / "keys.json").value_or("absent");
}

}  // namespace termrec::store
