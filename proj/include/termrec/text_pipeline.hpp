#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace termrec::text {

/// Minimal English stopword list used when a repository does not supply one.
const std::set<std::string>& default_stopwords();

struct PipelineConfig {
    bool lowercase = true;
    std::size_t min_token_length = 2;
    std::set<std::string> stopwords = default_stopwords();
    bool strip_punctuation = true;

    /// Throws std::invalid_argument.
    void validate() const;
};

/// Trims, collapses internal whitespace and optionally lowercases. Controlled
/// terms go through here unsplit.
std::optional<std::string> normalize_term(std::string_view raw, const PipelineConfig& config);

/// Splits free text into normalized tokens, dropping stopwords and short
/// tokens. Duplicates are kept.
std::vector<std::string> tokenize_free_text(std::string_view text, const PipelineConfig& config);

/// Reads one stopword per line; blank lines and lines starting with '#' are
/// skipped, and text after a '#' is a comment. Entries are normalized.
std::set<std::string> load_stopwords(const std::filesystem::path& path);
std::set<std::string> parse_stopwords(std::string_view contents);

/// Number of code points in a UTF-8 string. Invalid bytes count as one each.
std::size_t utf8_length(std::string_view s);

}  // namespace termrec::text
