#include "fixtures.hpp"

#include "termrec/metadata_model.hpp"
#include "termrec/xml.hpp"

#ifndef TERMREC_FIXTURE_DIR
#error "TERMREC_FIXTURE_DIR must be defined"
#endif

namespace termrec::testing {

std::vector<Doc> youth_fixture() {
    return {
        {"oai:example.org:d1", {"Youth unemployment"}, {"labor market", "adolescent"}},
        {"oai:example.org:d2", {"Youth education"}, {"adolescent"}},
        {"oai:example.org:d3", {"Unemployment"}, {"labor market"}},
        {"oai:example.org:d4", {"Education"}, {"school"}},
    };
}

oai::RawRecord to_raw(const Doc& doc) {
    dc::Record r;
    r.identifier = doc.id;
    r.datestamp = *Datestamp::parse(doc.datestamp);
    for (const auto& t : doc.titles)
        r.elements[dc::Element::title].push_back({t, std::nullopt});
    for (const auto& s : doc.subjects)
        r.elements[dc::Element::subject].push_back({s, std::nullopt});
    return {doc.id, r.datestamp, false, dc::serialize_oai_dc(r)};
}

std::vector<oai::RawRecord> to_raw(const std::vector<Doc>& docs) {
    std::vector<oai::RawRecord> out;
    for (const auto& d : docs)
        out.push_back(to_raw(d));
    return out;
}

std::vector<TermSets> random_corpus(std::mt19937_64& rng, std::size_t max_docs, std::size_t n_sources,
                                    std::size_t n_targets) {
    std::uniform_int_distribution<std::size_t> n_docs(1, max_docs);
    std::bernoulli_distribution coin(0.25);
    std::vector<TermSets> docs(n_docs(rng));
    for (auto& d : docs) {
        for (std::size_t s = 0; s < n_sources; ++s)
            if (coin(rng))
                d.sources.insert("s" + std::to_string(s));
        for (std::size_t t = 0; t < n_targets; ++t)
            if (coin(rng))
                d.targets.insert("t" + std::to_string(t));
    }
    return docs;
}

std::vector<TermSets> synthetic_corpus(std::mt19937_64& rng, std::size_t docs, std::size_t sources_per_doc,
                                       std::size_t targets_per_doc) {
    // Zipf-like vocabularies: word i is drawn with weight 1/(i+1).
    auto make_dist = [](std::size_t n) {
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i)
            w[i] = 1.0 / static_cast<double>(i + 1);
        return std::discrete_distribution<std::size_t>(w.begin(), w.end());
    };
    auto source_dist = make_dist(20000);
    auto target_dist = make_dist(3000);
    std::vector<TermSets> out(docs);
    for (auto& d : out) {
        for (std::size_t i = 0; i < sources_per_doc; ++i)
            d.sources.insert("w" + std::to_string(source_dist(rng)));
        for (std::size_t i = 0; i < targets_per_doc; ++i)
            d.targets.insert("subject " + std::to_string(target_dist(rng)));
    }
    return out;
}

cooc::CooccurrenceIndex index_of(const std::vector<TermSets>& docs, cooc::BuilderOptions options) {
    cooc::IndexBuilder builder(std::move(options));
    for (const auto& d : docs)
        builder.add_document(d.sources, d.targets);
    return std::move(builder).build();
}

TempDir::TempDir() {
    static std::mt19937_64 rng{std::random_device{}()};
    do {
        path_ = std::filesystem::temp_directory_path() / ("termrec-test-" + std::to_string(rng()));
    } while (std::filesystem::exists(path_));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::filesystem::path fixture_path(const std::string& name) { return std::filesystem::path(TERMREC_FIXTURE_DIR) / name; }

}  // namespace termrec::testing
