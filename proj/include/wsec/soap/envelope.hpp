#pragma once

// SOAP envelopes with the DSHeader security header.
//
//   <soap:Envelope xmlns:soap=... xmlns:xsi=... xmlns:xsd=...>
//     <soap:Header>
//       <DSHeader xmlns="http://tempuri.org/">
//         <callerid/> <calleeid/> <np/> <nq/> <signature/>  [extra elements]
//       </DSHeader>
//     </soap:Header>
//     <soap:Body> method element, or colon-hex ciphertext </soap:Body>
//   </soap:Envelope>
//
// Nonce requests and replies have no DSHeader unless a protocol needs to
// carry certificates with them.

#include "wsec/soap/crypto.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace wsec::soap {

inline constexpr std::string_view kSoapNs = "http://schemas.xmlsoap.org/soap/envelope/";
inline constexpr std::string_view kXsiNs = "http://www.w3.org/2001/XMLSchema-instance";
inline constexpr std::string_view kXsdNs = "http://www.w3.org/2001/XMLSchema";
inline constexpr std::string_view kServiceNs = "http://tempuri.org/";
inline constexpr std::string_view kDummyNonce = "-1";

class EnvelopeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The placeholder signature of messages that are encrypted rather than signed.
Bytes dummy_signature();

using Fields = std::vector<std::pair<std::string, std::string>>;

struct DSHeader {
    std::string callerid;
    std::string calleeid;
    std::string np{kDummyNonce};
    std::string nq{kDummyNonce};
    Bytes signature = dummy_signature();
    Fields extra; // after signature; used by the public-key protocols

    const std::string* find_extra(std::string_view name) const;
    friend bool operator==(const DSHeader&, const DSHeader&) = default;
};

// <Balance xmlns="http://tempuri.org/"><account>12345</account></Balance>
struct BodyElement {
    std::string name;
    Fields children;

    const std::string* find(std::string_view child) const;
    friend bool operator==(const BodyElement&, const BodyElement&) = default;
};

struct SoapEnvelope {
    std::optional<DSHeader> header;
    std::variant<BodyElement, Bytes> body;

    bool encrypted() const { return std::holds_alternative<Bytes>(body); }
    const BodyElement& element() const;
    const Bytes& cipher() const;
    friend bool operator==(const SoapEnvelope&, const SoapEnvelope&) = default;
};

std::string serialize_envelope(const SoapEnvelope& e);
SoapEnvelope parse_envelope(std::string_view xml);

// Compact rendering of a body element, the input to signatures and the
// plaintext of encrypted bodies.
std::string canonical_element(const BodyElement& b);
BodyElement parse_element(std::string_view xml);

// ---- namespace-aware XML trees, for comparing envelopes ----

struct XmlNode {
    std::string ns;
    std::string local;
    Fields attributes; // without namespace declarations, sorted
    std::string text;  // trimmed
    std::vector<XmlNode> children;
};

XmlNode parse_xml_tree(std::string_view xml);
// First difference between two trees as a path, or empty when they agree up
// to namespace prefixes and whitespace inside text.
std::string first_difference(const XmlNode& a, const XmlNode& b);

} // namespace wsec::soap
