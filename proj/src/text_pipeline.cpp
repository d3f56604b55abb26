#include "termrec/text_pipeline.hpp"

#include <fstream>
#include <sstream>

namespace termrec::text {

namespace {

struct Decoded {
    char32_t cp;
    std::size_t len;
    bool valid;
};

Decoded decode(std::string_view s, std::size_t pos) {
    auto byte = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
    unsigned char b0 = byte(pos);
    if (b0 < 0x80)
        return {b0, 1, true};
    std::size_t len = (b0 & 0xE0) == 0xC0 ? 2 : (b0 & 0xF0) == 0xE0 ? 3 : (b0 & 0xF8) == 0xF0 ? 4 : 0;
    if (len == 0 || pos + len > s.size())
        return {b0, 1, false};
    char32_t cp = b0 & (0x7F >> len);
    for (std::size_t i = 1; i < len; ++i) {
        unsigned char b = byte(pos + i);
        if ((b & 0xC0) != 0x80)
            return {b0, 1, false};
        cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
        return {b0, 1, false};
    return {cp, len, true};
}

void encode(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

bool is_space(char32_t c) {
    return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
           (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F ||
           c == 0x3000;
}

bool is_punct(char32_t c) {
    if (c < 0x80)
        return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
               (c >= 0x7B && c <= 0x7E);
    if (c >= 0xA1 && c <= 0xBF)
        return c != 0xAA && c != 0xB2 && c != 0xB3 && c != 0xB5 && c != 0xB9 && c != 0xBA;
    return c == 0xD7 || c == 0xF7 || (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) ||
           (c >= 0x3001 && c <= 0x3003) || (c >= 0x3008 && c <= 0x3011) || (c >= 0xFF01 && c <= 0xFF0F) ||
           (c >= 0xFF1A && c <= 0xFF20);
}

// Simple case folding for Latin, Greek and Cyrillic.
char32_t to_lower(char32_t c) {
    if (c >= 'A' && c <= 'Z')
        return c + 32;
    if (c < 0xC0)
        return c;
    if (c <= 0xDE)
        return c == 0xD7 ? c : c + 32;
    if (c >= 0x100 && c <= 0x137)
        return c % 2 == 0 ? c + 1 : c;
    if (c >= 0x139 && c <= 0x148)
        return c % 2 == 1 ? c + 1 : c;
    if (c >= 0x14A && c <= 0x177)
        return c % 2 == 0 ? c + 1 : c;
    if (c == 0x178)
        return 0xFF;
    if (c >= 0x179 && c <= 0x17E)
        return c % 2 == 1 ? c + 1 : c;
    if (c == 0x386)
        return 0x3AC;
    if (c >= 0x388 && c <= 0x38A)
        return c + 37;
    if (c == 0x38C)
        return 0x3CC;
    if (c == 0x38E || c == 0x38F)
        return c + 63;
    if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2)
        return c + 32;
    if (c >= 0x400 && c <= 0x40F)
        return c + 80;
    if (c >= 0x410 && c <= 0x42F)
        return c + 32;
    if ((c >= 0x1E00 && c <= 0x1E95) || (c >= 0x1EA0 && c <= 0x1EFF))
        return c % 2 == 0 ? c + 1 : c;
    return c;
}

std::string lowercase(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        Decoded d = decode(s, i);
        if (d.valid)
            encode(to_lower(d.cp), out);
        else
            out += s[i];
        i += d.len;
    }
    return out;
}

}  // namespace

const std::set<std::string>& default_stopwords() {
    static const std::set<std::string> kWords = {
        "a",     "about", "after", "all",   "also",  "an",    "and",   "any",   "are",  "as",    "at",
        "be",    "been",  "but",   "by",    "can",   "could", "do",    "does",  "for",  "from",  "had",
        "has",   "have",  "he",    "her",   "his",   "how",   "if",    "in",    "into", "is",    "it",
        "its",   "may",   "more",  "no",    "not",   "of",    "on",    "or",    "other", "our",  "she",
        "should", "so",   "such",  "than",  "that",  "the",   "their", "them",  "then", "there", "these",
        "they",  "this",  "those", "to",    "under", "up",    "was",   "we",    "were", "what",  "when",
        "which", "while", "who",   "will",  "with",  "within", "would", "you",
    };
    return kWords;
}

void PipelineConfig::validate() const {
    if (min_token_length < 1)
        throw std::invalid_argument("min_token_length must be at least 1");
    PipelineConfig canonical;
    canonical.lowercase = true;
    for (const auto& word : stopwords) {
        auto normalized = normalize_term(word, canonical);
        if (!normalized || *normalized != word)
            throw std::invalid_argument("stopword '" + word + "' is not normalized (lowercase, trimmed)");
    }
}

std::optional<std::string> normalize_term(std::string_view raw, const PipelineConfig& config) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (std::size_t i = 0; i < raw.size();) {
        Decoded d = decode(raw, i);
        if (d.valid && is_space(d.cp)) {
            pending_space = !out.empty();
        } else {
            if (pending_space)
                out += ' ';
            pending_space = false;
            out.append(raw.substr(i, d.len));
        }
        i += d.len;
    }
    if (out.empty())
        return std::nullopt;
    if (config.lowercase)
        out = lowercase(out);
    return out;
}

std::vector<std::string> tokenize_free_text(std::string_view text, const PipelineConfig& config) {
    std::vector<std::string> tokens;
    auto flush = [&](std::size_t begin, std::size_t end) {
        if (begin >= end)
            return;
        auto term = normalize_term(text.substr(begin, end - begin), config);
        if (!term || utf8_length(*term) < config.min_token_length)
            return;
        const std::string& key = config.lowercase ? *term : lowercase(*term);
        if (config.stopwords.contains(key))
            return;
        tokens.push_back(std::move(*term));
    };
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size();) {
        Decoded d = decode(text, i);
        bool boundary = d.valid && (is_space(d.cp) || (config.strip_punctuation && is_punct(d.cp)));
        if (boundary) {
            flush(start, i);
            start = i + d.len;
        }
        i += d.len;
    }
    flush(start, text.size());
    return tokens;
}

std::set<std::string> parse_stopwords(std::string_view contents) {
    PipelineConfig canonical;
    std::set<std::string> out;
    std::size_t pos = 0;
    while (pos <= contents.size()) {
        auto eol = contents.find('\n', pos);
        std::string_view line = contents.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        if (auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        if (auto word = normalize_term(line, canonical))
            out.insert(std::move(*word));
        if (eol == std::string_view::npos)
            break;
        pos = eol + 1;
    }
    return out;
}

std::set<std::string> load_stopwords(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read stopword file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_stopwords(buffer.str());
}

std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.size(); i += decode(s, i).len)
        ++n;
    return n;
}

}  // namespace termrec::text
