#include "termrec/xml.hpp"

#include <expat.h>

#include <map>
#include <memory>

namespace termrec::xml {

namespace {

constexpr char kNsSeparator = '\x1F';

QName split_name(const XML_Char* raw) {
    std::string_view name(raw);
    auto sep = name.find(kNsSeparator);
    if (sep == std::string_view::npos)
        return {std::string(), std::string(name)};
    return {std::string(name.substr(0, sep)), std::string(name.substr(sep + 1))};
}

struct BuildState {
    Element root;
    bool have_root = false;
    std::vector<Element*> stack;
};

void XMLCALL on_start(void* user, const XML_Char* name, const XML_Char** attrs) {
    auto* state = static_cast<BuildState*>(user);
    Element* element;
    if (state->stack.empty()) {
        state->have_root = true;
        element = &state->root;
    } else {
        element = &state->stack.back()->children.emplace_back();
    }
    element->name = split_name(name);
    for (auto** a = attrs; *a != nullptr; a += 2)
        element->attributes.push_back({split_name(a[0]), a[1]});
    state->stack.push_back(element);
}

void XMLCALL on_end(void* user, const XML_Char*) {
    static_cast<BuildState*>(user)->stack.pop_back();
}

void XMLCALL on_text(void* user, const XML_Char* s, int len) {
    auto* state = static_cast<BuildState*>(user);
    if (!state->stack.empty())
        state->stack.back()->text.append(s, static_cast<std::size_t>(len));
}

struct ParserDeleter {
    void operator()(XML_Parser p) const { XML_ParserFree(p); }
};

struct Scope {
    std::string default_ns;
    std::map<std::string, std::string> prefixes;  // namespace -> prefix
};

void write(const Element& e, const Scope& parent, std::string& out, int& prefix_counter) {
    Scope scope = parent;
    std::string decls;
    if (e.name.ns != scope.default_ns) {
        scope.default_ns = e.name.ns;
        decls += " xmlns=\"" + escape(e.name.ns) + "\"";
    }
    std::string attrs;
    for (const auto& a : e.attributes) {
        std::string qualified;
        if (a.name.ns.empty()) {
            qualified = a.name.local;
        } else if (a.name.ns == kXmlNamespace) {
            qualified = "xml:" + a.name.local;
        } else {
            auto it = scope.prefixes.find(a.name.ns);
            if (it == scope.prefixes.end()) {
                std::string prefix = "ns" + std::to_string(prefix_counter++);
                it = scope.prefixes.emplace(a.name.ns, prefix).first;
                decls += " xmlns:" + prefix + "=\"" + escape(a.name.ns) + "\"";
            }
            qualified = it->second + ":" + a.name.local;
        }
        attrs += " " + qualified + "=\"" + escape(a.value) + "\"";
    }
    out += "<" + e.name.local + decls + attrs;
    if (e.children.empty() && e.text.empty()) {
        out += "/>";
        return;
    }
    out += ">";
    out += escape(e.text);
    for (const auto& child : e.children)
        write(child, scope, out, prefix_counter);
    out += "</" + e.name.local + ">";
}

}  // namespace

ParseError::ParseError(std::string source, std::size_t byte_offset, std::size_t line,
                       const std::string& message)
    : std::runtime_error(source + ": byte " + std::to_string(byte_offset) + " (line " +
                         std::to_string(line) + "): " + message),
      source_(std::move(source)),
      byte_offset_(byte_offset),
      line_(line) {}

const std::string* Element::attribute(std::string_view ns, std::string_view local) const {
    for (const auto& a : attributes)
        if (a.name.is(ns, local))
            return &a.value;
    return nullptr;
}

const Element* Element::first_child(std::string_view ns, std::string_view local) const {
    for (const auto& c : children)
        if (c.name.is(ns, local))
            return &c;
    return nullptr;
}

std::vector<const Element*> Element::children_named(std::string_view ns, std::string_view local) const {
    std::vector<const Element*> out;
    for (const auto& c : children)
        if (c.name.is(ns, local))
            out.push_back(&c);
    return out;
}

Element parse(std::string_view document, std::string_view source_name) {
    std::unique_ptr<XML_ParserStruct, ParserDeleter> parser(XML_ParserCreateNS("UTF-8", kNsSeparator));
    if (!parser)
        throw std::bad_alloc();
    BuildState state;
    XML_SetUserData(parser.get(), &state);
    XML_SetElementHandler(parser.get(), on_start, on_end);
    XML_SetCharacterDataHandler(parser.get(), on_text);

    // Expat takes an int length; feed large documents in chunks.
    constexpr std::size_t kChunk = 1 << 30;
    std::size_t pos = 0;
    do {
        std::size_t len = std::min(kChunk, document.size() - pos);
        bool last = pos + len == document.size();
        if (XML_Parse(parser.get(), document.data() + pos, static_cast<int>(len), last) == XML_STATUS_ERROR) {
            throw ParseError(std::string(source_name),
                             static_cast<std::size_t>(XML_GetCurrentByteIndex(parser.get())),
                             static_cast<std::size_t>(XML_GetCurrentLineNumber(parser.get())),
                             XML_ErrorString(XML_GetErrorCode(parser.get())));
        }
        pos += len;
    } while (pos < document.size());

    if (!state.have_root)
        throw ParseError(std::string(source_name), 0, 1, "no root element");
    return std::move(state.root);
}

std::string serialize(const Element& root) {
    std::string out;
    int counter = 0;
    write(root, Scope{}, out, counter);
    return out;
}

std::string escape(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\r': out += "&#13;"; break;
            default: out += c;
        }
    }
    return out;
}

void collect(const Element& root, std::string_view ns, std::string_view local,
             std::vector<const Element*>& out) {
    if (root.name.is(ns, local)) {
        out.push_back(&root);
        return;
    }
    for (const auto& child : root.children)
        collect(child, ns, local, out);
}

}  // namespace termrec::xml
