#include "termrec/metadata_model.hpp"

#include <algorithm>
#include <cctype>

#include "termrec/xml.hpp"

namespace termrec::dc {

namespace {

std::string trim(std::string_view s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos)
        return {};
    auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

const xml::Element* find_container(const xml::Element& root) {
    if (root.name.is(oai::kOaiDcNamespace, "dc"))
        return &root;
    for (const auto& c : root.children)
        if (auto* found = find_container(c))
            return found;
    return nullptr;
}

}  // namespace

std::string_view name_of(Element e) {
    return kElementNames[static_cast<std::size_t>(e)];
}

std::optional<Element> element_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kElementNames.size(); ++i)
        if (kElementNames[i] == name)
            return static_cast<Element>(i);
    return std::nullopt;
}

const std::vector<Value>& Record::values(Element e) const {
    static const std::vector<Value> kEmpty;
    auto it = elements.find(e);
    return it == elements.end() ? kEmpty : it->second;
}

Record parse_oai_dc(const oai::RawRecord& raw) {
    Record out;
    out.identifier = raw.identifier;
    out.datestamp = raw.datestamp;
    out.deleted = raw.deleted;
    if (raw.deleted)
        return out;
    if (!raw.metadata_xml)
        throw MetadataError("record '" + raw.identifier + "' has no metadata");

    xml::Element root;
    try {
        root = xml::parse(*raw.metadata_xml, raw.identifier);
    } catch (const xml::ParseError& e) {
        throw MetadataError(e.what());
    }
    const xml::Element* container = find_container(root);
    if (!container)
        throw MetadataError("record '" + raw.identifier + "' has no oai_dc:dc container");

    for (const auto& child : container->children) {
        auto element = child.name.ns == oai::kDcNamespace ? element_from_name(child.name.local) : std::nullopt;
        if (!element) {
            ++out.unknown_elements;
            continue;
        }
        std::string text = trim(child.text);
        if (text.empty())
            continue;
        Value v{std::move(text), std::nullopt};
        if (const std::string* lang = child.attribute(xml::kXmlNamespace, "lang"); lang && !lang->empty())
            v.language = *lang;
        out.elements[*element].push_back(std::move(v));
    }
    return out;
}

std::string serialize_oai_dc(const Record& record) {
    xml::Element dc;
    dc.name = {std::string(oai::kOaiDcNamespace), "dc"};
    for (const auto& [element, values] : record.elements) {
        for (const auto& v : values) {
            xml::Element child;
            child.name = {std::string(oai::kDcNamespace), std::string(name_of(element))};
            child.text = v.text;
            if (v.language)
                child.attributes.push_back({{std::string(xml::kXmlNamespace), "lang"}, *v.language});
            dc.children.push_back(std::move(child));
        }
    }
    return xml::serialize(dc);
}

void FieldMapping::validate() const {
    if (source_elements.empty())
        throw MappingError("mapping needs at least one source element");
    if (std::find(source_elements.begin(), source_elements.end(), target_element) != source_elements.end())
        throw MappingError("target element '" + std::string(name_of(target_element)) +
                           "' must not also be a source element");
    if (language_filter && trim(*language_filter).empty())
        throw MappingError("language filter must not be blank");
}

bool language_matches(const std::optional<std::string>& tag, const std::optional<std::string>& filter) {
    if (!filter || !tag)
        return true;
    std::string t = ascii_lower(*tag);
    std::string f = ascii_lower(*filter);
    return t == f || (t.size() > f.size() && t.compare(0, f.size(), f) == 0 && t[f.size()] == '-');
}

FieldExtraction select_fields(const Record& record, const FieldMapping& mapping) {
    if (record.deleted)
        throw std::invalid_argument("select_fields called on deleted record '" + record.identifier + "'");
    FieldExtraction out;
    out.doc_id = record.identifier;
    for (Element e : mapping.source_elements)
        for (const auto& v : record.values(e))
            if (language_matches(v.language, mapping.language_filter))
                out.source_texts.push_back(v.text);
    for (const auto& v : record.values(mapping.target_element))
        if (language_matches(v.language, mapping.language_filter))
            out.target_values.push_back(v.text);
    return out;
}

}  // namespace termrec::dc
