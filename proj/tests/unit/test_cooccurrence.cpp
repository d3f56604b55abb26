#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "oracle.hpp"
#include "termrec/cooccurrence.hpp"
#include "termrec/metadata_model.hpp"

using namespace termrec;
using namespace termrec::testing;
using cooc::Metric;

namespace {

std::vector<TermSets> fixture_sets() {
    return {
        {{"youth", "unemployment"}, {"labor market", "adolescent"}},
        {{"youth", "education"}, {"adolescent"}},
        {{"unemployment"}, {"labor market"}},
        {{"education"}, {"school"}},
    };
}

std::vector<dc::FieldExtraction> fixture_extractions() {
    std::vector<dc::FieldExtraction> out;
    for (const auto& d : youth_fixture())
        out.push_back({d.id, d.titles, d.subjects});
    return out;
}

using Expected = std::vector<std::pair<std::string, double>>;

Expected flatten(const cooc::RecommendationList& list) {
    Expected out;
    for (const auto& r : list.items)
        out.emplace_back(r.term, r.score);
    return out;
}

OracleMetric to_oracle(Metric m) {
    switch (m) {
        case Metric::jaccard:
            return OracleMetric::jaccard;
        case Metric::dice:
            return OracleMetric::dice;
        case Metric::nwd:
            return OracleMetric::nwd;
    }
    return OracleMetric::jaccard;
}

void check_against_oracle(const cooc::RecommendationList& got, const OracleResult& want) {
    CHECK(got.term_found == want.term_found);
    REQUIRE(got.items.size() == want.items.size());
    for (std::size_t i = 0; i < want.items.size(); ++i) {
        CHECK(got.items[i].term == want.items[i].term);
        CHECK(got.items[i].df_term == want.items[i].df_term);
        CHECK(got.items[i].df_joint == want.items[i].df_joint);
        if (std::isinf(want.items[i].score))
            CHECK(std::isinf(got.items[i].score));
        else
            CHECK(std::abs(got.items[i].score - want.items[i].score) <= 1e-12);
    }
}

}  // namespace

TEST_SUITE("cooccurrence") {
    TEST_CASE("one document") {
        cooc::IndexBuilder b;
        b.add_document({"youth"}, {"adolescent"});
        auto idx = std::move(b).build();
        CHECK(idx.n_docs() == 1);
        CHECK(idx.source_df("youth") == 1);
        CHECK(idx.target_df("adolescent") == 1);
        CHECK(idx.pair_df("youth", "adolescent") == 1);
    }

    TEST_CASE("documents without targets still count") {
        cooc::IndexBuilder b;
        b.add_document({"youth"}, {"adolescent"});
        b.add_document({"youth", "work"}, {});
        auto idx = std::move(b).build();
        CHECK(idx.n_docs() == 2);
        CHECK(idx.source_df("youth") == 2);
        CHECK(idx.source_df("work") == 1);
        CHECK(idx.pair_df("youth", "adolescent") == 1);
        CHECK(idx.pair_count() == 1);
    }

    TEST_CASE("fixture counts") {
        auto idx = index_of(fixture_sets());
        CHECK(idx.n_docs() == 4);
        CHECK(idx.source_df("youth") == 2);
        CHECK(idx.target_df("labor market") == 2);
        CHECK(idx.pair_df("youth", "labor market") == 1);
        CHECK(idx.pair_df("youth", "school") == 0);
        CHECK(idx.source_df("absent") == 0);
    }

    TEST_CASE("fixture records build the hand-built index") {
        auto from_records = cooc::build_index(fixture_extractions(), text::PipelineConfig{}, {});
        CHECK(from_records == index_of(fixture_sets()));
    }

    TEST_CASE("empty input and repeated documents") {
        auto empty = cooc::build_index(std::vector<dc::FieldExtraction>{}, text::PipelineConfig{}, {});
        CHECK(empty.n_docs() == 0);
        CHECK(empty.source_table().empty());
        auto twice = fixture_extractions();
        twice.push_back(twice.front());
        auto idx = cooc::build_index(twice, text::PipelineConfig{}, {});
        CHECK(idx.n_docs() == 5);
        CHECK(idx.pair_df("youth", "labor market") == 2);
    }

    TEST_CASE("similarity values") {
        CHECK(cooc::similarity(Metric::jaccard, 5, 5, 5, 10) == 1.0);
        CHECK(cooc::similarity(Metric::jaccard, 3, 4, 0, 10) == 0.0);
        CHECK(cooc::similarity(Metric::jaccard, 2, 2, 1, 4) == doctest::Approx(1.0 / 3).epsilon(1e-15));
        CHECK(cooc::similarity(Metric::dice, 2, 2, 1, 4) == 0.5);
        CHECK(cooc::similarity(Metric::nwd, 2, 2, 1, 4) == doctest::Approx(1.0).epsilon(1e-15));
        double j = cooc::similarity(Metric::jaccard, 7, 5, 3, 20);
        CHECK(cooc::similarity(Metric::dice, 7, 5, 3, 20) == doctest::Approx(2 * j / (1 + j)).epsilon(1e-15));
        CHECK(cooc::similarity(Metric::nwd, 4, 4, 4, 4) == 0.0);
        CHECK_THROWS_AS(cooc::similarity(Metric::nwd, 4, 4, 0, 4), std::invalid_argument);
        CHECK_THROWS_AS(cooc::similarity(Metric::nwd, 3, 2, 0, 10), std::invalid_argument);
        CHECK_THROWS_AS(cooc::similarity(Metric::jaccard, 2, 2, 3, 4), std::invalid_argument);
        CHECK_THROWS_AS(cooc::similarity(Metric::jaccard, 5, 2, 1, 4), std::invalid_argument);
        CHECK_THROWS_AS(cooc::similarity(Metric::jaccard, 0, 0, 0, 4), std::invalid_argument);
    }

    TEST_CASE("metric names") {
        for (auto m : {Metric::jaccard, Metric::dice, Metric::nwd})
            CHECK(cooc::metric_from_name(cooc::metric_name(m)) == m);
        CHECK_FALSE(cooc::metric_from_name("cosine"));
        CHECK(cooc::is_distance(Metric::nwd));
        CHECK_FALSE(cooc::is_distance(Metric::dice));
    }

    TEST_CASE("youth") {
        auto idx = index_of(fixture_sets());
        auto got = cooc::recommend(idx, "youth", 10, Metric::jaccard);
        CHECK(got.term_found);
        REQUIRE(got.items.size() == 2);
        CHECK(got.items[0].term == "adolescent");
        CHECK(got.items[0].score == 1.0);
        CHECK(got.items[1].term == "labor market");
        CHECK(got.items[1].score == doctest::Approx(1.0 / 3).epsilon(1e-15));
        check_against_oracle(got, oracle_recommend(fixture_sets(), "youth", 10, OracleMetric::jaccard));
    }

    TEST_CASE("education ranks school above adolescent") {
        auto idx = index_of(fixture_sets());
        auto got = cooc::recommend(idx, "education", 10, Metric::jaccard);
        // school appears only in d4, so its set equals half of education's union.
        CHECK(flatten(got) == Expected{{"school", 0.5}, {"adolescent", 1.0 / 3}});
        check_against_oracle(got, oracle_recommend(fixture_sets(), "education", 10, OracleMetric::jaccard));
    }

    TEST_CASE("ties fall back to joint count, then term") {
        std::vector<TermSets> docs{
            {{"q"}, {"b", "a"}},
            {{"q"}, {"c"}},
            {{"x"}, {"c"}},
        };
        // a and b tie on score and joint count; c has a lower score.
        auto got = cooc::recommend(index_of(docs), "q", 10, Metric::jaccard);
        REQUIRE(got.items.size() == 3);
        CHECK(got.items[0].term == "a");
        CHECK(got.items[1].term == "b");
        check_against_oracle(got, oracle_recommend(docs, "q", 10, OracleMetric::jaccard));
    }

    TEST_CASE("unknown query, k truncation and minimum df") {
        auto idx = index_of(fixture_sets());
        auto none = cooc::recommend(idx, "absent", 10, Metric::jaccard);
        CHECK_FALSE(none.term_found);
        CHECK(none.items.empty());
        CHECK(cooc::recommend(idx, "youth", 1, Metric::jaccard).items.size() == 1);
        CHECK_THROWS_AS(cooc::recommend(idx, "youth", 0, Metric::jaccard), std::invalid_argument);
        auto filtered = cooc::recommend(idx, "education", 10, Metric::jaccard, 2);
        CHECK(flatten(filtered) == Expected{{"adolescent", 1.0 / 3}});
    }

    TEST_CASE("distance metrics rank ascending") {
        auto idx = index_of(fixture_sets());
        auto got = cooc::recommend(idx, "youth", 10, Metric::nwd);
        REQUIRE(got.items.size() == 2);
        CHECK(got.items[0].term == "adolescent");
        CHECK(got.items[0].score < got.items[1].score);
        check_against_oracle(got, oracle_recommend(fixture_sets(), "youth", 10, OracleMetric::nwd));
    }

    TEST_CASE("youth unemployment aggregates both tokens") {
        auto idx = index_of(fixture_sets());
        std::vector<std::string> tokens{"youth", "unemployment"};
        auto got = cooc::recommend_multi(idx, tokens, 10, Metric::jaccard);
        auto want = oracle_recommend_multi(fixture_sets(), tokens, 10, OracleMetric::jaccard);
        check_against_oracle(got, want);
        // unemployment also co-occurs with adolescent in d1, so both targets
        // reach 4/3 with three joint documents; the term breaks the tie.
        REQUIRE(want.items.size() == 2);
        CHECK(want.items[0].exact == Fraction(4, 3));
        CHECK(want.items[1].exact == Fraction(4, 3));
        CHECK(got.items[0].df_joint == 3);
        CHECK(got.items[1].df_joint == 3);
        CHECK(got.items[0].term == "adolescent");
        CHECK(got.items[1].term == "labor market");
    }

    TEST_CASE("multi-token with one token equals the single query") {
        auto idx = index_of(fixture_sets());
        std::vector<std::string> one{"youth"};
        for (auto m : {Metric::jaccard, Metric::dice, Metric::nwd})
            CHECK(cooc::recommend_multi(idx, one, 10, m).items == cooc::recommend(idx, "youth", 10, m).items);
    }

    TEST_CASE("unknown tokens contribute nothing") {
        auto idx = index_of(fixture_sets());
        std::vector<std::string> tokens{"youth", "zzz-unknown"};
        auto got = cooc::recommend_multi(idx, tokens, 10, Metric::jaccard);
        CHECK(got.term_found);
        CHECK(got.items == cooc::recommend(idx, "youth", 10, Metric::jaccard).items);
        std::vector<std::string> unknown{"zzz"};
        CHECK_FALSE(cooc::recommend_multi(idx, unknown, 10, Metric::jaccard).term_found);
    }

    TEST_CASE("randomized agreement with the brute-force reference") {
        std::mt19937_64 rng(7);
        for (int round = 0; round < 60; ++round) {
            auto docs = random_corpus(rng, 30, 12, 8);
            auto idx = index_of(docs);
            for (auto m : {Metric::jaccard, Metric::dice, Metric::nwd}) {
                for (int s = 0; s < 12; ++s) {
                    auto q = "s" + std::to_string(s);
                    check_against_oracle(cooc::recommend(idx, q, 5, m), oracle_recommend(docs, q, 5, to_oracle(m)));
                }
                std::vector<std::string> pair{"s0", "s1"};
                auto want = oracle_recommend_multi(docs, pair, 20, to_oracle(m), 2);
                auto got = cooc::recommend_multi(idx, pair, 20, m, 2);
                CHECK(got.items.size() == want.items.size());
            }
        }
    }

    TEST_CASE("document order, merging and spilling do not change the index") {
        std::mt19937_64 rng(11);
        auto docs = synthetic_corpus(rng, 400, 8, 3);
        auto reference = index_of(docs);
        std::shuffle(docs.begin(), docs.end(), rng);
        CHECK(index_of(docs) == reference);

        cooc::IndexBuilder left, right;
        for (std::size_t i = 0; i < docs.size(); ++i)
            (i % 2 ? left : right).add_document(docs[i].sources, docs[i].targets);
        left.merge(std::move(right));
        CHECK(std::move(left).build() == reference);

        TempDir spill;
        cooc::BuilderOptions small{64, spill.path()};
        cooc::IndexBuilder spilling(small);
        for (const auto& d : docs)
            spilling.add_document(d.sources, d.targets);
        CHECK(spilling.spilled_runs() > 0);
        auto built = std::move(spilling).build();
        CHECK(built == reference);
        CHECK(built.fingerprint() == reference.fingerprint());
        CHECK(std::filesystem::is_empty(spill.path()));
    }

    TEST_CASE("tables are validated") {
        using cooc::CooccurrenceIndex;
        std::vector<cooc::TermDf> src{{"a", 2}, {"b", 1}};
        std::vector<cooc::TermDf> tgt{{"x", 1}};
        CHECK_NOTHROW(CooccurrenceIndex::from_tables(2, src, tgt, {{0, 0, 1}}));
        CHECK_THROWS_AS(CooccurrenceIndex::from_tables(1, src, tgt, {{0, 0, 1}}), std::invalid_argument);
        CHECK_THROWS_AS(CooccurrenceIndex::from_tables(2, {{"b", 1}, {"a", 2}}, tgt, {}), std::invalid_argument);
        CHECK_THROWS_AS(CooccurrenceIndex::from_tables(2, src, tgt, {{0, 0, 2}}), std::invalid_argument);
        CHECK_THROWS_AS(CooccurrenceIndex::from_tables(2, src, tgt, {{0, 5, 1}}), std::invalid_argument);
        CHECK_THROWS_AS(CooccurrenceIndex::from_tables(2, src, tgt, {{0, 0, 0}}), std::invalid_argument);
    }

    TEST_CASE("recommendation table covers every source term") {
        auto idx = index_of(fixture_sets());
        auto table = cooc::recommendation_table(idx, Metric::jaccard);
        CHECK(table.size() == 6);
        CHECK(table.front().source == "education");
        CHECK(table.front().recommendation.term == "school");
        CHECK(cooc::recommendation_table(idx, Metric::jaccard, 1).size() == 3);
    }
}
