#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "termrec/metadata_model.hpp"
#include "termrec/oai_harvester.hpp"
#include "termrec/text_pipeline.hpp"

namespace termrec {

using Clock = std::chrono::system_clock;

/// Names one persisted index: the owning repository plus a per-repository
/// sequence number. Text form is "<repo_id>:<sequence>".
struct SnapshotId {
    std::string repo_id;
    std::uint64_t sequence = 0;

    std::string str() const;
    static std::optional<SnapshotId> parse(std::string_view text);

    friend bool operator==(const SnapshotId&, const SnapshotId&) = default;
    friend auto operator<=>(const SnapshotId&, const SnapshotId&) = default;
};

enum class RepoStatus { registered, scheduled, harvesting, processing, published, failed };

std::string_view status_name(RepoStatus s);
std::optional<RepoStatus> status_from_name(std::string_view name);

/// Lifecycle: registered -> scheduled -> harvesting -> processing -> published.
/// failed is reachable from scheduled, harvesting and processing; scheduled
/// from registered, published and failed; published may be re-entered.
bool can_transition(RepoStatus from, RepoStatus to);

class LifecycleError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Local oai_dc files used instead of an OAI-PMH endpoint.
struct FileSet {
    std::vector<std::filesystem::path> paths;
};

using RepositorySource = std::variant<oai::EndpointConfig, FileSet>;

struct RepositoryRecord {
    std::string repo_id;
    std::string name;
    std::string owner;
    RepositorySource source;
    dc::FieldMapping mapping;
    text::PipelineConfig pipeline;
    /// Targets below this document frequency are never recommended.
    std::uint64_t min_target_df = 1;
    /// Lets the suggest endpoint answer without an API key.
    bool anonymous_suggest = false;
    RepoStatus status = RepoStatus::registered;
    std::optional<SnapshotId> published_snapshot;
    std::optional<std::string> last_error;
    std::uint64_t last_sequence = 0;
    Clock::time_point created_at{};
};

enum class JobStage { queued, harvesting, processing, persisting, done, failed };

std::string_view stage_name(JobStage s);
std::optional<JobStage> stage_from_name(std::string_view name);
constexpr bool is_active(JobStage s) { return s != JobStage::done && s != JobStage::failed; }

struct JobProgress {
    std::uint64_t harvested = 0;
    std::uint64_t processed = 0;
};

struct Job {
    std::string job_id;
    std::string repo_id;
    Clock::time_point created_at{};
    std::optional<Clock::time_point> started_at;
    std::optional<Clock::time_point> finished_at;
    JobStage stage = JobStage::queued;
    JobProgress progress;
    std::optional<std::string> error;
    /// Stage that was running when the job failed.
    std::optional<JobStage> failed_stage;
    std::optional<SnapshotId> snapshot;
    /// When set, these files replace the repository's configured source.
    std::optional<FileSet> files_override;
};

/// A hashed API key as kept at rest.
struct StoredKey {
    std::string key_id;
    std::string owner;
    std::string salt_hex;
    std::string hash_hex;
    Clock::time_point created_at{};
    bool revoked = false;
};

// JSON conversions, shared by the file store and the HTTP wire format.
void to_json(nlohmann::json& j, const SnapshotId& id);
void from_json(const nlohmann::json& j, SnapshotId& id);
void to_json(nlohmann::json& j, const RepositoryRecord& r);
void from_json(const nlohmann::json& j, RepositoryRecord& r);
void to_json(nlohmann::json& j, const Job& job);
void from_json(const nlohmann::json& j, Job& job);
void to_json(nlohmann::json& j, const StoredKey& k);
void from_json(const nlohmann::json& j, StoredKey& k);

nlohmann::json source_to_json(const RepositorySource& source);
/// Throws std::invalid_argument on an unusable description.
RepositorySource source_from_json(const nlohmann::json& j);
nlohmann::json mapping_to_json(const dc::FieldMapping& m);
dc::FieldMapping mapping_from_json(const nlohmann::json& j);
nlohmann::json pipeline_to_json(const text::PipelineConfig& p);
text::PipelineConfig pipeline_from_json(const nlohmann::json& j);

std::string time_to_string(Clock::time_point t);
Clock::time_point time_from_string(const std::string& s);

}  // namespace termrec
