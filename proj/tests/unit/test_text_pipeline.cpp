#include <doctest.h>

#include <fstream>

#include "fixtures.hpp"
#include "termrec/text_pipeline.hpp"

using namespace termrec;
using text::PipelineConfig;
using Tokens = std::vector<std::string>;

TEST_SUITE("text_pipeline") {
    TEST_CASE("controlled terms are trimmed, collapsed and lowercased") {
        PipelineConfig c;
        CHECK(text::normalize_term("  Labor   Market ", c) == std::optional<std::string>("labor market"));
        CHECK(text::normalize_term("Adolescent", c) == std::optional<std::string>("adolescent"));
        CHECK_FALSE(text::normalize_term("   ", c));
        CHECK_FALSE(text::normalize_term("", c));
        CHECK(text::normalize_term("Labor-market", c) == std::optional<std::string>("labor-market"));
    }

    TEST_CASE("case folding beyond ASCII") {
        PipelineConfig c;
        CHECK(text::normalize_term("ÄRGER Über", c) == std::optional<std::string>("ärger über"));
        CHECK(text::normalize_term("ΣΟΦΙΑ", c) == std::optional<std::string>("σοφια"));
        CHECK(text::normalize_term("МОСКВА", c) == std::optional<std::string>("москва"));
        CHECK(text::normalize_term("a  b", c) == std::optional<std::string>("a b"));
        c.lowercase = false;
        CHECK(text::normalize_term("Labor Market", c) == std::optional<std::string>("Labor Market"));
    }

    TEST_CASE("free text tokenization") {
        PipelineConfig c;
        CHECK(text::tokenize_free_text("Youth unemployment in Europe", c) == Tokens{"youth", "unemployment", "europe"});
        CHECK(text::tokenize_free_text("", c).empty());
        CHECK(text::tokenize_free_text("Labor-market dynamics, 2012", c) ==
              Tokens{"labor", "market", "dynamics", "2012"});
        CHECK(text::tokenize_free_text("a b c", c).empty());
        CHECK(text::tokenize_free_text("Youth youth", c) == Tokens{"youth", "youth"});
    }

    TEST_CASE("minimum length counts code points") {
        PipelineConfig c;
        c.stopwords.clear();
        c.min_token_length = 3;
        CHECK(text::tokenize_free_text("äö abc xy", c) == Tokens{"abc"});
        c.min_token_length = 2;
        CHECK(text::tokenize_free_text("äö x", c) == Tokens{"äö"});
        CHECK(text::utf8_length("äö") == 2);
        CHECK(text::utf8_length("abc") == 3);
    }

    TEST_CASE("punctuation handling is configurable") {
        PipelineConfig c;
        c.strip_punctuation = false;
        CHECK(text::tokenize_free_text("Labor-market dynamics, 2012", c) == Tokens{"labor-market", "dynamics,", "2012"});
    }

    TEST_CASE("stopword files") {
        auto words = text::parse_stopwords("# comment\nThe\n\nand # trailing\n  of  \n");
        CHECK(words == std::set<std::string>{"the", "and", "of"});
        testing::TempDir dir;
        std::ofstream(dir.path() / "stop.txt") << "youth\n";
        PipelineConfig c;
        c.stopwords = text::load_stopwords(dir.path() / "stop.txt");
        CHECK(text::tokenize_free_text("Youth unemployment in Europe", c) == Tokens{"unemployment", "in", "europe"});
        CHECK_THROWS(text::load_stopwords(dir.path() / "missing.txt"));
    }

    TEST_CASE("configuration is validated") {
        PipelineConfig c;
        CHECK_NOTHROW(c.validate());
        c.min_token_length = 0;
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    }
}
