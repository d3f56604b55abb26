#pragma once

#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "termrec/cooccurrence.hpp"
#include "termrec/oai_harvester.hpp"

namespace termrec::testing {

/// A document as the metadata author sees it.
struct Doc {
    std::string id;
    std::vector<std::string> titles;
    std::vector<std::string> subjects;
    std::string datestamp = "2024-01-01";
};

/// The four-document youth/unemployment/education corpus.
std::vector<Doc> youth_fixture();

oai::RawRecord to_raw(const Doc& doc);
std::vector<oai::RawRecord> to_raw(const std::vector<Doc>& docs);

/// A document reduced to its term sets.
struct TermSets {
    std::set<std::string> sources;
    std::set<std::string> targets;
};

/// Random corpus with up to `max_docs` documents over `n_sources` source terms
/// and `n_targets` target terms. Documents may be empty on either side.
std::vector<TermSets> random_corpus(std::mt19937_64& rng, std::size_t max_docs, std::size_t n_sources,
                                    std::size_t n_targets);

/// Fixed-size synthetic corpus with roughly `sources_per_doc` source tokens and
/// `targets_per_doc` target terms drawn from skewed vocabularies.
std::vector<TermSets> synthetic_corpus(std::mt19937_64& rng, std::size_t docs, std::size_t sources_per_doc,
                                       std::size_t targets_per_doc);

cooc::CooccurrenceIndex index_of(const std::vector<TermSets>& docs, cooc::BuilderOptions options = {});

/// Directory removed with its contents on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

std::filesystem::path fixture_path(const std::string& name);

}  // namespace termrec::testing
