#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "termrec/datestamp.hpp"
#include "termrec/oai_harvester.hpp"

namespace termrec::dc {

/// The fifteen unqualified Dublin Core elements.
enum class Element {
    title,
    creator,
    subject,
    description,
    publisher,
    contributor,
    date,
    type,
    format,
    identifier,
    source,
    language,
    relation,
    coverage,
    rights,
};

inline constexpr std::array<std::string_view, 15> kElementNames = {
    "title",      "creator", "subject", "description", "publisher", "contributor", "date",     "type",
    "format",     "identifier", "source",  "language",  "relation",  "coverage",    "rights",
};

std::string_view name_of(Element e);
std::optional<Element> element_from_name(std::string_view name);

struct Value {
    std::string text;
    std::optional<std::string> language;

    friend bool operator==(const Value&, const Value&) = default;
};

struct Record {
    std::string identifier;
    Datestamp datestamp;
    bool deleted = false;
    std::map<Element, std::vector<Value>> elements;
    /// Children of the oai_dc container that are not Dublin Core elements.
    std::size_t unknown_elements = 0;

    const std::vector<Value>& values(Element e) const;
};

class MetadataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Captures every DC child of the oai_dc:dc container in document order.
/// Values are trimmed; values that are empty after trimming are dropped.
Record parse_oai_dc(const oai::RawRecord& raw);

/// Renders the element multimap as an oai_dc:dc fragment.
std::string serialize_oai_dc(const Record& record);

class MappingError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct FieldMapping {
    std::vector<Element> source_elements{Element::title, Element::description};
    Element target_element = Element::subject;
    std::optional<std::string> language_filter;

    void validate() const;
};

struct FieldExtraction {
    std::string doc_id;
    std::vector<std::string> source_texts;
    std::vector<std::string> target_values;
};

/// True if a value with `tag` survives `filter`. Untagged values always pass;
/// "en" also accepts regional variants such as "en-GB".
bool language_matches(const std::optional<std::string>& tag, const std::optional<std::string>& filter);

/// Source values are concatenated in mapping order; target values are kept whole.
FieldExtraction select_fields(const Record& record, const FieldMapping& mapping);

}  // namespace termrec::dc
