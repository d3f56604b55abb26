#include "termrec/cooccurrence.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <system_error>
#include <unistd.h>

namespace termrec::cooc {

namespace {

std::uint32_t find_term(const std::vector<TermDf>& table, std::string_view term, bool& found) {
    auto it = std::lower_bound(table.begin(), table.end(), term,
                               [](const TermDf& t, std::string_view v) { return t.term < v; });
    found = it != table.end() && it->term == term;
    return static_cast<std::uint32_t>(it - table.begin());
}

struct Fnv1a {
    std::uint64_t h = 1469598103934665603ULL;
    void bytes(const void* p, std::size_t n) {
        auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            unsigned char b = static_cast<unsigned char>(v >> (8 * i));
            bytes(&b, 1);
        }
    }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
};

}  // namespace

std::string_view metric_name(Metric m) {
    switch (m) {
        case Metric::jaccard: return "jaccard";
        case Metric::dice: return "dice";
        case Metric::nwd: return "nwd";
    }
    return "unknown";
}

std::optional<Metric> metric_from_name(std::string_view name) {
    if (name == "jaccard")
        return Metric::jaccard;
    if (name == "dice")
        return Metric::dice;
    if (name == "nwd")
        return Metric::nwd;
    return std::nullopt;
}

double similarity(Metric metric, std::uint64_t df_x, std::uint64_t df_y, std::uint64_t df_xy, std::uint64_t n_docs) {
    if (df_x == 0 || df_y == 0)
        throw std::invalid_argument("document frequencies must be at least 1");
    if (df_xy > std::min(df_x, df_y))
        throw std::invalid_argument("joint frequency exceeds a marginal frequency");
    if (n_docs < std::max(df_x, df_y))
        throw std::invalid_argument("document frequency exceeds corpus size");

    switch (metric) {
        case Metric::jaccard:
            return static_cast<double>(df_xy) / static_cast<double>(df_x + df_y - df_xy);
        case Metric::dice:
            return static_cast<double>(2 * df_xy) / static_cast<double>(df_x + df_y);
        case Metric::nwd: {
            if (df_xy == 0)
                throw std::invalid_argument("NWD needs at least one joint document");
            if (std::min(df_x, df_y) == n_docs)
                return df_xy == df_x ? 0.0 : std::numeric_limits<double>::infinity();
            double lx = std::log(static_cast<double>(df_x));
            double ly = std::log(static_cast<double>(df_y));
            double lxy = std::log(static_cast<double>(df_xy));
            double ln = std::log(static_cast<double>(n_docs));
            return (std::max(lx, ly) - lxy) / (ln - std::min(lx, ly));
        }
    }
    throw std::invalid_argument("unknown metric");
}

// ---------------------------------------------------------------------------
// CooccurrenceIndex

CooccurrenceIndex CooccurrenceIndex::from_tables(std::uint64_t n_docs, std::vector<TermDf> source,
                                                 std::vector<TermDf> target, std::vector<PairRow> pairs) {
    auto check_terms = [n_docs](const std::vector<TermDf>& table, const char* side) {
        for (std::size_t i = 0; i < table.size(); ++i) {
            if (table[i].df == 0 || table[i].df > n_docs)
                throw std::invalid_argument(std::string(side) + " term '" + table[i].term +
                                            "' has a document frequency outside [1, n_docs]");
            if (i > 0 && !(table[i - 1].term < table[i].term))
                throw std::invalid_argument(std::string(side) + " terms are not strictly sorted");
        }
    };
    check_terms(source, "source");
    check_terms(target, "target");

    CooccurrenceIndex out;
    out.n_docs_ = n_docs;
    out.offsets_.assign(source.size() + 1, 0);
    out.pair_target_.reserve(pairs.size());
    out.pair_df_.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const PairRow& p = pairs[i];
        if (p.source >= source.size() || p.target >= target.size())
            throw std::invalid_argument("pair refers to a term outside the tables");
        if (p.df == 0 || p.df > std::min(source[p.source].df, target[p.target].df))
            throw std::invalid_argument("pair count is zero or exceeds a marginal count");
        if (i > 0 && !(std::pair(pairs[i - 1].source, pairs[i - 1].target) < std::pair(p.source, p.target)))
            throw std::invalid_argument("pairs are not strictly ordered");
        ++out.offsets_[p.source + 1];
        out.pair_target_.push_back(p.target);
        out.pair_df_.push_back(p.df);
    }
    std::partial_sum(out.offsets_.begin(), out.offsets_.end(), out.offsets_.begin());
    out.source_ = std::move(source);
    out.target_ = std::move(target);
    return out;
}

std::vector<PairRow> CooccurrenceIndex::pair_table() const {
    std::vector<PairRow> out;
    out.reserve(pair_count());
    for (std::uint32_t s = 0; s < source_.size(); ++s)
        for (auto i = offsets_[s]; i < offsets_[s + 1]; ++i)
            out.push_back({s, pair_target_[i], pair_df_[i]});
    return out;
}

std::optional<std::uint32_t> CooccurrenceIndex::source_id(std::string_view term) const {
    bool found;
    auto id = find_term(source_, term, found);
    return found ? std::optional(id) : std::nullopt;
}

std::optional<std::uint32_t> CooccurrenceIndex::target_id(std::string_view term) const {
    bool found;
    auto id = find_term(target_, term, found);
    return found ? std::optional(id) : std::nullopt;
}

std::uint64_t CooccurrenceIndex::source_df(std::string_view term) const {
    auto id = source_id(term);
    return id ? source_[*id].df : 0;
}

std::uint64_t CooccurrenceIndex::target_df(std::string_view term) const {
    auto id = target_id(term);
    return id ? target_[*id].df : 0;
}

std::uint64_t CooccurrenceIndex::pair_df(std::string_view source, std::string_view target) const {
    auto s = source_id(source);
    auto t = target_id(target);
    if (!s || !t)
        return 0;
    auto begin = pair_target_.begin() + static_cast<std::ptrdiff_t>(offsets_[*s]);
    auto end = pair_target_.begin() + static_cast<std::ptrdiff_t>(offsets_[*s + 1]);
    auto it = std::lower_bound(begin, end, *t);
    if (it == end || *it != *t)
        return 0;
    return pair_df_[static_cast<std::size_t>(it - pair_target_.begin())];
}

std::vector<PairEntry> CooccurrenceIndex::pairs_of(std::uint32_t source) const {
    std::vector<PairEntry> out;
    if (source >= source_.size())
        return out;
    out.reserve(offsets_[source + 1] - offsets_[source]);
    for (auto i = offsets_[source]; i < offsets_[source + 1]; ++i)
        out.push_back({pair_target_[i], pair_df_[i]});
    return out;
}

std::uint64_t CooccurrenceIndex::fingerprint() const {
    Fnv1a f;
    f.u64(n_docs_);
    for (const auto* table : {&source_, &target_}) {
        f.u64(table->size());
        for (const auto& t : *table) {
            f.str(t.term);
            f.u64(t.df);
        }
    }
    f.u64(pair_count());
    for (std::uint32_t s = 0; s < source_.size(); ++s)
        for (auto i = offsets_[s]; i < offsets_[s + 1]; ++i) {
            f.u64(s);
            f.u64(pair_target_[i]);
            f.u64(pair_df_[i]);
        }
    return f.h;
}

// ---------------------------------------------------------------------------
// IndexBuilder

IndexBuilder::IndexBuilder(BuilderOptions options) : options_(std::move(options)) {
    if (options_.max_resident_pairs == 0)
        options_.max_resident_pairs = 1;
    if (options_.spill_dir.empty())
        options_.spill_dir = std::filesystem::temp_directory_path();
}

IndexBuilder::~IndexBuilder() { remove_runs(); }

IndexBuilder::IndexBuilder(IndexBuilder&& other) noexcept
    : options_(std::move(other.options_)),
      n_docs_(other.n_docs_),
      source_ids_(std::move(other.source_ids_)),
      target_ids_(std::move(other.target_ids_)),
      source_(std::move(other.source_)),
      target_(std::move(other.target_)),
      pairs_(std::move(other.pairs_)),
      runs_(std::exchange(other.runs_, {})) {}

IndexBuilder& IndexBuilder::operator=(IndexBuilder&& other) noexcept {
    if (this != &other) {
        remove_runs();
        options_ = std::move(other.options_);
        n_docs_ = other.n_docs_;
        source_ids_ = std::move(other.source_ids_);
        target_ids_ = std::move(other.target_ids_);
        source_ = std::move(other.source_);
        target_ = std::move(other.target_);
        pairs_ = std::move(other.pairs_);
        runs_ = std::exchange(other.runs_, {});
    }
    return *this;
}

void IndexBuilder::remove_runs() {
    for (const auto& run : runs_) {
        std::error_code ec;
        std::filesystem::remove(run, ec);
    }
    runs_.clear();
}

std::uint32_t IndexBuilder::intern(std::unordered_map<std::string, std::uint32_t>& ids, std::vector<TermDf>& terms,
                                   const std::string& term) {
    auto [it, inserted] = ids.try_emplace(term, static_cast<std::uint32_t>(terms.size()));
    if (inserted)
        terms.push_back({term, 0});
    return it->second;
}

void IndexBuilder::bump_pair(PairKey key, std::uint64_t count) {
    pairs_[key] += count;
    if (pairs_.size() >= options_.max_resident_pairs)
        spill();
}

void IndexBuilder::spill() {
    std::vector<std::pair<PairKey, std::uint64_t>> sorted(pairs_.begin(), pairs_.end());
    std::sort(sorted.begin(), sorted.end());
    static std::atomic<std::uint64_t> counter{0};
    auto path = options_.spill_dir / ("termrec-run-" + std::to_string(::getpid()) + "-" +
                                      std::to_string(counter.fetch_add(1)) + ".bin");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::system_error(errno, std::generic_category(), "cannot create spill run " + path.string());
    for (const auto& [key, count] : sorted) {
        out.write(reinterpret_cast<const char*>(&key), sizeof key);
        out.write(reinterpret_cast<const char*>(&count), sizeof count);
    }
    out.close();
    if (!out)
        throw std::system_error(errno, std::generic_category(), "cannot write spill run " + path.string());
    runs_.push_back(std::move(path));
    pairs_.clear();
}

void IndexBuilder::add_document(const std::set<std::string>& source_terms, const std::set<std::string>& target_terms) {
    ++n_docs_;
    std::vector<std::uint32_t> sources;
    sources.reserve(source_terms.size());
    for (const auto& term : source_terms) {
        auto id = intern(source_ids_, source_, term);
        ++source_[id].df;
        sources.push_back(id);
    }
    for (const auto& term : target_terms) {
        auto t = intern(target_ids_, target_, term);
        ++target_[t].df;
        for (auto s : sources)
            bump_pair((PairKey{s} << 32) | t, 1);
    }
}

// Visits every (key, count) entry, in memory and spilled. Keys may repeat
// across runs.
template <typename Fn>
void IndexBuilder::for_each_pair(Fn&& fn) const {
    for (const auto& [key, count] : pairs_)
        fn(key, count);
    for (const auto& run : runs_) {
        std::ifstream in(run, std::ios::binary);
        if (!in)
            throw std::runtime_error("cannot reopen spill run " + run.string());
        PairKey key;
        std::uint64_t count;
        while (in.read(reinterpret_cast<char*>(&key), sizeof key) &&
               in.read(reinterpret_cast<char*>(&count), sizeof count))
            fn(key, count);
    }
}

void IndexBuilder::merge(IndexBuilder&& other) {
    if (&other == this)
        return;
    n_docs_ += other.n_docs_;
    std::vector<std::uint32_t> source_map(other.source_.size());
    std::vector<std::uint32_t> target_map(other.target_.size());
    for (std::size_t i = 0; i < other.source_.size(); ++i) {
        auto id = intern(source_ids_, source_, other.source_[i].term);
        source_[id].df += other.source_[i].df;
        source_map[i] = id;
    }
    for (std::size_t i = 0; i < other.target_.size(); ++i) {
        auto id = intern(target_ids_, target_, other.target_[i].term);
        target_[id].df += other.target_[i].df;
        target_map[i] = id;
    }
    other.for_each_pair([&](PairKey key, std::uint64_t count) {
        PairKey s = source_map[key >> 32];
        PairKey t = target_map[key & 0xFFFFFFFFu];
        bump_pair((s << 32) | t, count);
    });
    other = IndexBuilder(options_);
}

CooccurrenceIndex IndexBuilder::build() && {
    // Canonical term order.
    auto canonical = [](const std::vector<TermDf>& terms) {
        std::vector<std::uint32_t> order(terms.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::uint32_t a, std::uint32_t b) { return terms[a].term < terms[b].term; });
        std::vector<std::uint32_t> remap(terms.size());
        std::vector<TermDf> sorted;
        sorted.reserve(terms.size());
        for (std::uint32_t i = 0; i < order.size(); ++i) {
            remap[order[i]] = i;
            sorted.push_back(terms[order[i]]);
        }
        return std::pair(std::move(sorted), std::move(remap));
    };
    auto [source, source_remap] = canonical(source_);
    auto [target, target_remap] = canonical(target_);

    std::vector<PairRow> rows;
    auto emit = [&](PairKey key, std::uint64_t count) {
        rows.push_back({source_remap[key >> 32], target_remap[key & 0xFFFFFFFFu], count});
    };

    if (runs_.empty()) {
        rows.reserve(pairs_.size());
        for (const auto& [key, count] : pairs_)
            emit(key, count);
    } else {
        spill();
        // k-way merge of sorted runs, summing equal keys.
        struct Cursor {
            std::ifstream in;
            PairKey key = 0;
            std::uint64_t count = 0;
            bool next() {
                return static_cast<bool>(in.read(reinterpret_cast<char*>(&key), sizeof key) &&
                                         in.read(reinterpret_cast<char*>(&count), sizeof count));
            }
        };
        std::vector<Cursor> cursors(runs_.size());
        using Head = std::pair<PairKey, std::size_t>;
        std::priority_queue<Head, std::vector<Head>, std::greater<>> heap;
        for (std::size_t i = 0; i < runs_.size(); ++i) {
            cursors[i].in.open(runs_[i], std::ios::binary);
            if (!cursors[i].in)
                throw std::runtime_error("cannot reopen spill run " + runs_[i].string());
            if (cursors[i].next())
                heap.emplace(cursors[i].key, i);
        }
        while (!heap.empty()) {
            PairKey key = heap.top().first;
            std::uint64_t total = 0;
            while (!heap.empty() && heap.top().first == key) {
                auto i = heap.top().second;
                heap.pop();
                total += cursors[i].count;
                if (cursors[i].next())
                    heap.emplace(cursors[i].key, i);
            }
            emit(key, total);
        }
        remove_runs();
    }
    pairs_.clear();
    std::sort(rows.begin(), rows.end(),
              [](const PairRow& a, const PairRow& b) { return std::pair(a.source, a.target) < std::pair(b.source, b.target); });
    return CooccurrenceIndex::from_tables(n_docs_, std::move(source), std::move(target), std::move(rows));
}

void add_extraction(IndexBuilder& builder, const dc::FieldExtraction& extraction, const text::PipelineConfig& config) {
    std::set<std::string> sources;
    for (const auto& text : extraction.source_texts)
        for (auto& token : text::tokenize_free_text(text, config))
            sources.insert(std::move(token));
    std::set<std::string> targets;
    for (const auto& value : extraction.target_values)
        if (auto term = text::normalize_term(value, config))
            targets.insert(std::move(*term));
    builder.add_document(sources, targets);
}

// ---------------------------------------------------------------------------
// Ranking

bool ranks_before(Metric metric, const Recommendation& a, const Recommendation& b) {
    if (a.score != b.score)
        return is_distance(metric) ? a.score < b.score : a.score > b.score;
    if (a.df_joint != b.df_joint)
        return a.df_joint > b.df_joint;
    return a.term < b.term;
}

namespace {

void rank(std::vector<Recommendation>& items, std::size_t k, Metric metric) {
    auto cmp = [metric](const Recommendation& a, const Recommendation& b) { return ranks_before(metric, a, b); };
    if (items.size() > k) {
        std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(k), items.end(), cmp);
        items.resize(k);
    } else {
        std::sort(items.begin(), items.end(), cmp);
    }
}

std::vector<Recommendation> score_all(const CooccurrenceIndex& index, std::uint32_t source, Metric metric,
                                      std::uint64_t min_df) {
    std::vector<Recommendation> out;
    std::uint64_t df_x = index.source_table()[source].df;
    for (const auto& pair : index.pairs_of(source)) {
        const TermDf& target = index.target_table()[pair.target];
        if (target.df < min_df)
            continue;
        out.push_back({target.term, similarity(metric, df_x, target.df, pair.df, index.n_docs()), target.df, pair.df});
    }
    return out;
}

}  // namespace

RecommendationList recommend(const CooccurrenceIndex& index, std::string_view query, std::size_t k, Metric metric,
                             std::uint64_t min_df) {
    if (k == 0)
        throw std::invalid_argument("k must be at least 1");
    RecommendationList out;
    auto source = index.source_id(query);
    if (!source)
        return out;
    out.term_found = true;
    out.items = score_all(index, *source, metric, min_df);
    rank(out.items, k, metric);
    return out;
}

RecommendationList recommend_multi(const CooccurrenceIndex& index, std::span<const std::string> tokens,
                                   std::size_t k, Metric metric, std::uint64_t min_df) {
    if (k == 0)
        throw std::invalid_argument("k must be at least 1");
    RecommendationList out;
    std::map<std::string, Recommendation> merged;
    for (const auto& token : tokens) {
        auto source = index.source_id(token);
        if (!source)
            continue;
        out.term_found = true;
        for (auto& r : score_all(index, *source, metric, min_df)) {
            auto [it, inserted] = merged.try_emplace(r.term, r);
            if (!inserted) {
                it->second.score += r.score;
                it->second.df_joint += r.df_joint;
            }
        }
    }
    out.items.reserve(merged.size());
    for (auto& [term, r] : merged)
        out.items.push_back(std::move(r));
    rank(out.items, k, metric);
    return out;
}

std::vector<TableRow> recommendation_table(const CooccurrenceIndex& index, Metric metric, std::size_t per_term,
                                           std::uint64_t min_df) {
    std::vector<TableRow> out;
    for (std::uint32_t s = 0; s < index.source_count(); ++s) {
        auto items = score_all(index, s, metric, min_df);
        rank(items, per_term == 0 ? items.size() : per_term, metric);
        for (auto& r : items)
            out.push_back({index.source_table()[s].term, std::move(r)});
    }
    return out;
}

}  // namespace termrec::cooc
