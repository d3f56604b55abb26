#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "termrec/metadata_model.hpp"
#include "termrec/text_pipeline.hpp"

namespace termrec::cooc {

enum class Metric { jaccard, dice, nwd };

std::string_view metric_name(Metric m);
std::optional<Metric> metric_from_name(std::string_view name);

/// NWD is a distance (lower is better); Jaccard and Dice are similarities.
constexpr bool is_distance(Metric m) { return m == Metric::nwd; }

/// Scores a source/target pair from document counts.
///
///   Jaccard = df_xy / (df_x + df_y - df_xy)
///   Dice    = 2 df_xy / (df_x + df_y)
///   NWD     = (max(ln df_x, ln df_y) - ln df_xy) / (ln n - min(ln df_x, ln df_y))
///
/// For NWD with min(df_x, df_y) == n the denominator vanishes; the result is 0
/// if df_xy == df_x and +infinity otherwise.
///
/// Throws std::invalid_argument on inconsistent counts.
double similarity(Metric metric, std::uint64_t df_x, std::uint64_t df_y, std::uint64_t df_xy, std::uint64_t n_docs);

struct TermDf {
    std::string term;
    std::uint64_t df = 0;
    friend bool operator==(const TermDf&, const TermDf&) = default;
};

struct PairRow {
    std::uint32_t source = 0;  // index into the sorted source table
    std::uint32_t target = 0;  // index into the sorted target table
    std::uint64_t df = 0;
    friend bool operator==(const PairRow&, const PairRow&) = default;
};

struct PairEntry {
    std::uint32_t target = 0;
    std::uint64_t df = 0;
};

/// Immutable document-frequency tables. Term tables are sorted by byte order
/// and pairs by (source, target), so two indices over the same documents are
/// equal regardless of the order the documents were added in.
class CooccurrenceIndex {
public:
    CooccurrenceIndex() = default;

    /// Validates every table invariant and throws std::invalid_argument on
    /// violation. Term tables must be strictly sorted and pairs strictly
    /// ordered with no zero counts.
    static CooccurrenceIndex from_tables(std::uint64_t n_docs, std::vector<TermDf> source, std::vector<TermDf> target,
                                         std::vector<PairRow> pairs);

    std::uint64_t n_docs() const { return n_docs_; }
    std::size_t source_count() const { return source_.size(); }
    std::size_t target_count() const { return target_.size(); }
    std::size_t pair_count() const { return pair_target_.size(); }

    const std::vector<TermDf>& source_table() const { return source_; }
    const std::vector<TermDf>& target_table() const { return target_; }
    std::vector<PairRow> pair_table() const;

    std::optional<std::uint32_t> source_id(std::string_view term) const;
    std::optional<std::uint32_t> target_id(std::string_view term) const;

    std::uint64_t source_df(std::string_view term) const;
    std::uint64_t target_df(std::string_view term) const;
    std::uint64_t pair_df(std::string_view source, std::string_view target) const;

    /// Co-occurring targets of one source term, ordered by target id.
    std::vector<PairEntry> pairs_of(std::uint32_t source) const;

    /// FNV-1a over the canonical tables.
    std::uint64_t fingerprint() const;

    friend bool operator==(const CooccurrenceIndex&, const CooccurrenceIndex&) = default;

private:
    std::uint64_t n_docs_ = 0;
    std::vector<TermDf> source_;
    std::vector<TermDf> target_;
    std::vector<std::uint64_t> offsets_{0};  // CSR row starts, size source_count()+1
    std::vector<std::uint32_t> pair_target_;
    std::vector<std::uint64_t> pair_df_;
};

struct BuilderOptions {
    /// Distinct pairs kept in memory before a sorted run is written to disk.
    std::size_t max_resident_pairs = std::size_t{1} << 24;
    /// Where spill runs go; defaults to the system temp directory.
    std::filesystem::path spill_dir;
};

/// Single-writer accumulator for a CooccurrenceIndex.
class IndexBuilder {
public:
    explicit IndexBuilder(BuilderOptions options = {});
    ~IndexBuilder();
    IndexBuilder(IndexBuilder&&) noexcept;
    IndexBuilder& operator=(IndexBuilder&&) noexcept;
    IndexBuilder(const IndexBuilder&) = delete;
    IndexBuilder& operator=(const IndexBuilder&) = delete;

    /// Counts one document. Every source term, every target term and every
    /// (source, target) combination gains one document.
    void add_document(const std::set<std::string>& source_terms, const std::set<std::string>& target_terms);

    /// Folds another builder's counts into this one.
    void merge(IndexBuilder&& other);

    std::uint64_t n_docs() const { return n_docs_; }
    std::size_t spilled_runs() const { return runs_.size(); }

    CooccurrenceIndex build() &&;

private:
    using PairKey = std::uint64_t;  // source id << 32 | target id

    std::uint32_t intern(std::unordered_map<std::string, std::uint32_t>& ids, std::vector<TermDf>& terms,
                         const std::string& term);
    void bump_pair(PairKey key, std::uint64_t count);
    void spill();
    template <typename Fn>
    void for_each_pair(Fn&& fn) const;
    void remove_runs();

    BuilderOptions options_;
    std::uint64_t n_docs_ = 0;
    std::unordered_map<std::string, std::uint32_t> source_ids_;
    std::unordered_map<std::string, std::uint32_t> target_ids_;
    std::vector<TermDf> source_;
    std::vector<TermDf> target_;
    std::unordered_map<PairKey, std::uint64_t> pairs_;
    std::vector<std::filesystem::path> runs_;
};

/// Tokenizes the source side and normalizes the target side of each
/// extraction, deduplicates both per document and counts the document.
/// Documents with an empty side still count toward n_docs.
template <typename Range>
CooccurrenceIndex build_index(const Range& extractions, const text::PipelineConfig& config,
                              BuilderOptions options = {});

void add_extraction(IndexBuilder& builder, const dc::FieldExtraction& extraction,
                    const text::PipelineConfig& config);

struct Recommendation {
    std::string term;
    double score = 0.0;
    std::uint64_t df_term = 0;
    std::uint64_t df_joint = 0;

    friend bool operator==(const Recommendation&, const Recommendation&) = default;
};

struct RecommendationList {
    std::vector<Recommendation> items;
    /// False when the query (every token, for multi-token queries) is not a
    /// source term of the corpus.
    bool term_found = false;
};

/// Ranking order: best score first (highest similarity or lowest distance),
/// then higher df_joint, then byte-wise smaller term.
bool ranks_before(Metric metric, const Recommendation& a, const Recommendation& b);

/// Target terms with min_df <= df and at least one joint document, scored
/// against `query` and truncated to k. Throws std::invalid_argument if k == 0.
RecommendationList recommend(const CooccurrenceIndex& index, std::string_view query, std::size_t k, Metric metric,
                             std::uint64_t min_df = 1);

/// Sums each target's per-token scores (absent pairs add nothing) and
/// per-token joint counts, then ranks like recommend.
RecommendationList recommend_multi(const CooccurrenceIndex& index, std::span<const std::string> tokens,
                                   std::size_t k, Metric metric, std::uint64_t min_df = 1);

struct TableRow {
    std::string source;
    Recommendation recommendation;
};

/// Every source term's ranked recommendations, up to `per_term` each
/// (0 means unlimited), in source-term order.
std::vector<TableRow> recommendation_table(const CooccurrenceIndex& index, Metric metric, std::size_t per_term = 0,
                                           std::uint64_t min_df = 1);

template <typename Range>
CooccurrenceIndex build_index(const Range& extractions, const text::PipelineConfig& config, BuilderOptions options) {
    IndexBuilder builder(std::move(options));
    for (const dc::FieldExtraction& e : extractions)
        add_extraction(builder, e, config);
    return std::move(builder).build();
}

}  // namespace termrec::cooc
