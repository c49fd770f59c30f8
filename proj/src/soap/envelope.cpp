#include "wsec/soap/envelope.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace wsec::soap {

namespace pt = boost::property_tree;

Bytes dummy_signature() { return {0x4E, 0x00, 0x6F, 0x00}; }

const std::string* DSHeader::find_extra(std::string_view name) const {
    for (const auto& [k, v] : extra)
        if (k == name) return &v;
    return nullptr;
}

const std::string* BodyElement::find(std::string_view child) const {
    for (const auto& [k, v] : children)
        if (k == child) return &v;
    return nullptr;
}

const BodyElement& SoapEnvelope::element() const {
    if (const auto* b = std::get_if<BodyElement>(&body)) return *b;
    throw EnvelopeError("envelope body is encrypted");
}

const Bytes& SoapEnvelope::cipher() const {
    if (const auto* b = std::get_if<Bytes>(&body)) return *b;
    throw EnvelopeError("envelope body is not encrypted");
}

// ---- writing ----

namespace {

std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&apos;"; break;
        default: out += c;
        }
    }
    return out;
}

void leaf(std::ostringstream& os, int indent, const std::string& name, const std::string& value) {
    os << std::string(indent, ' ') << '<' << name << '>' << escape(value) << "</" << name << ">\n";
}

constexpr std::size_t kOctetsPerLine = 19;
constexpr std::size_t kSignatureOctetsPerLine = 20;
constexpr std::size_t kInlineSignature = 4;

// Colon-hex over several lines; every line but the last ends in ':'.
void block(std::ostringstream& os, int indent, const Bytes& c, std::size_t per_line) {
    for (std::size_t i = 0; i < c.size(); i += per_line) {
        Bytes line(c.begin() + static_cast<std::ptrdiff_t>(i),
                   c.begin() + static_cast<std::ptrdiff_t>(std::min(c.size(), i + per_line)));
        os << std::string(indent, ' ') << hex_colon(line) << (i + per_line < c.size() ? ":" : "") << "\n";
    }
}

} // namespace

std::string serialize_envelope(const SoapEnvelope& e) {
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n";
    os << "<soap:Envelope xmlns:soap=\"" << kSoapNs << "\"\n";
    os << "               xmlns:xsi=\"" << kXsiNs << "\"\n";
    os << "               xmlns:xsd=\"" << kXsdNs << "\">\n";
    if (e.header) {
        const DSHeader& h = *e.header;
        os << "  <soap:Header>\n";
        os << "    <DSHeader xmlns=\"" << kServiceNs << "\">\n";
        leaf(os, 6, "callerid", h.callerid);
        leaf(os, 6, "calleeid", h.calleeid);
        leaf(os, 6, "np", h.np);
        leaf(os, 6, "nq", h.nq);
        if (h.signature.size() <= kInlineSignature) {
            leaf(os, 6, "signature", hex_colon(h.signature));
        } else {
            os << "      <signature>\n";
            block(os, 8, h.signature, kSignatureOctetsPerLine);
            os << "      </signature>\n";
        }
        for (const auto& [k, v] : h.extra) leaf(os, 6, k, v);
        os << "    </DSHeader>\n";
        os << "  </soap:Header>\n";
    }
    os << "  <soap:Body>\n";
    if (const auto* b = std::get_if<BodyElement>(&e.body)) {
        if (b->children.empty()) {
            os << "    <" << b->name << " xmlns=\"" << kServiceNs << "\"/>\n";
        } else {
            os << "    <" << b->name << " xmlns=\"" << kServiceNs << "\">\n";
            for (const auto& [k, v] : b->children) leaf(os, 6, k, v);
            os << "    </" << b->name << ">\n";
        }
    } else {
        block(os, 4, std::get<Bytes>(e.body), kOctetsPerLine);
    }
    os << "  </soap:Body>\n";
    os << "</soap:Envelope>\n";
    return os.str();
}

std::string canonical_element(const BodyElement& b) {
    std::string out = "<" + b.name + " xmlns=\"" + std::string(kServiceNs) + "\">";
    for (const auto& [k, v] : b.children) out += "<" + k + ">" + escape(v) + "</" + k + ">";
    out += "</" + b.name + ">";
    return out;
}

// ---- reading ----

namespace {

std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

using Scope = std::map<std::string, std::string>; // prefix ("" for default) -> namespace

XmlNode build(const std::string& qname, const pt::ptree& node, Scope scope) {
    XmlNode out;
    if (auto attrs = node.get_child_optional("<xmlattr>")) {
        for (const auto& [k, v] : *attrs) {
            if (k == "xmlns")
                scope[""] = v.data();
            else if (k.rfind("xmlns:", 0) == 0)
                scope[k.substr(6)] = v.data();
            else
                out.attributes.emplace_back(k, v.data());
        }
    }
    std::sort(out.attributes.begin(), out.attributes.end());
    auto colon = qname.find(':');
    std::string prefix = colon == std::string::npos ? "" : qname.substr(0, colon);
    out.local = colon == std::string::npos ? qname : qname.substr(colon + 1);
    auto it = scope.find(prefix);
    if (it != scope.end())
        out.ns = it->second;
    else if (!prefix.empty())
        throw EnvelopeError("undeclared namespace prefix " + prefix);
    out.text = trim(node.data());
    for (const auto& [k, v] : node) {
        if (k == "<xmlattr>" || k == "<xmlcomment>") continue;
        if (k == "<xmltext>") {
            out.text = trim(out.text + v.data());
            continue;
        }
        out.children.push_back(build(k, v, scope));
    }
    return out;
}

std::string strip_ws(std::string_view s) {
    std::string out;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) out += c;
    return out;
}

const XmlNode* child(const XmlNode& n, std::string_view ns, std::string_view local) {
    for (const auto& c : n.children)
        if (c.local == local && c.ns == ns) return &c;
    return nullptr;
}

BodyElement element_of(const XmlNode& n) {
    BodyElement b;
    b.name = n.local;
    for (const auto& c : n.children) {
        if (!c.children.empty()) throw EnvelopeError("nested element inside <" + c.local + ">");
        b.children.emplace_back(c.local, c.text);
    }
    return b;
}

} // namespace

XmlNode parse_xml_tree(std::string_view xml) {
    pt::ptree tree;
    try {
        std::istringstream in{std::string(xml)};
        pt::read_xml(in, tree);
    } catch (const pt::xml_parser_error& e) {
        throw EnvelopeError(std::string("malformed XML: ") + e.message() + " at line " + std::to_string(e.line()));
    }
    const pt::ptree* root = nullptr;
    std::string root_name;
    for (const auto& [k, v] : tree) {
        if (k == "<xmlcomment>") continue;
        if (root) throw EnvelopeError("malformed XML: more than one root element");
        root = &v;
        root_name = k;
    }
    if (!root) throw EnvelopeError("malformed XML: no root element");
    return build(root_name, *root, {});
}

std::string first_difference(const XmlNode& a, const XmlNode& b) {
    std::string here = "{" + a.ns + "}" + a.local;
    if (a.ns != b.ns || a.local != b.local) return here + " vs {" + b.ns + "}" + b.local;
    if (a.attributes != b.attributes) return here + ": attributes differ";
    if (strip_ws(a.text) != strip_ws(b.text)) return here + ": text '" + a.text + "' vs '" + b.text + "'";
    if (a.children.size() != b.children.size())
        return here + ": " + std::to_string(a.children.size()) + " vs " + std::to_string(b.children.size()) +
               " children";
    for (std::size_t i = 0; i < a.children.size(); ++i) {
        std::string d = first_difference(a.children[i], b.children[i]);
        if (!d.empty()) return here + "/" + d;
    }
    return "";
}

SoapEnvelope parse_envelope(std::string_view xml) {
    XmlNode root = parse_xml_tree(xml);
    if (root.ns != kSoapNs || root.local != "Envelope") throw EnvelopeError("root element is not soap:Envelope");
    SoapEnvelope e;
    if (const XmlNode* header = child(root, kSoapNs, "Header")) {
        const XmlNode* ds = child(*header, kServiceNs, "DSHeader");
        if (!ds) throw EnvelopeError("missing required header element DSHeader");
        static const char* required[] = {"callerid", "calleeid", "np", "nq", "signature"};
        for (std::size_t i = 0; i < 5; ++i)
            if (i >= ds->children.size() || ds->children[i].local != required[i])
                throw EnvelopeError(std::string("missing required header element ") + required[i]);
        DSHeader h;
        h.callerid = ds->children[0].text;
        h.calleeid = ds->children[1].text;
        h.np = ds->children[2].text;
        h.nq = ds->children[3].text;
        auto sig = parse_hex_colon(ds->children[4].text);
        if (!sig) throw EnvelopeError("signature is not colon-separated hex");
        h.signature = std::move(*sig);
        for (std::size_t i = 5; i < ds->children.size(); ++i) h.extra.emplace_back(ds->children[i].local, ds->children[i].text);
        e.header = std::move(h);
    }
    const XmlNode* body = child(root, kSoapNs, "Body");
    if (!body) throw EnvelopeError("missing soap:Body");
    if (body->children.size() > 1) throw EnvelopeError("soap:Body holds more than one element");
    if (body->children.size() == 1) {
        e.body = element_of(body->children[0]);
    } else {
        auto c = parse_hex_colon(body->text);
        if (!c || c->empty()) throw EnvelopeError("soap:Body is neither an element nor colon-separated hex");
        e.body = std::move(*c);
    }
    return e;
}

BodyElement parse_element(std::string_view xml) { return element_of(parse_xml_tree(xml)); }

} // namespace wsec::soap
