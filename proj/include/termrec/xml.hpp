#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace termrec::xml {

inline constexpr std::string_view kXmlNamespace = "http://www.w3.org/XML/1998/namespace";

/// Expanded element or attribute name. An empty namespace means "no namespace".
struct QName {
    std::string ns;
    std::string local;

    bool is(std::string_view want_ns, std::string_view want_local) const {
        return ns == want_ns && local == want_local;
    }
    friend bool operator==(const QName&, const QName&) = default;
};

struct Attribute {
    QName name;
    std::string value;
};

/// A minimal element tree. Character data of an element is concatenated into
/// `text` regardless of where it appears between child elements.
struct Element {
    QName name;
    std::vector<Attribute> attributes;
    std::vector<Element> children;
    std::string text;

    const std::string* attribute(std::string_view ns, std::string_view local) const;
    const Element* first_child(std::string_view ns, std::string_view local) const;
    std::vector<const Element*> children_named(std::string_view ns, std::string_view local) const;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::string source, std::size_t byte_offset, std::size_t line, const std::string& message);

    const std::string& source() const noexcept { return source_; }
    std::size_t byte_offset() const noexcept { return byte_offset_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string source_;
    std::size_t byte_offset_;
    std::size_t line_;
};

/// Parses a complete document and returns its root element. `source_name` is
/// only used in error reports.
Element parse(std::string_view document, std::string_view source_name = "<memory>");

/// Serializes `root` as a standalone fragment. Namespaces are declared where
/// they are first needed, so the result parses back to an equal tree.
std::string serialize(const Element& root);

std::string escape(std::string_view text);

/// Depth-first search for every element named {ns}local. Matches nested under a
/// match are not visited.
void collect(const Element& root, std::string_view ns, std::string_view local,
             std::vector<const Element*>& out);

}  // namespace termrec::xml
