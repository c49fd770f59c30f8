#pragma once

// Cryptographic primitives behind the SOAP security headers.
//
// Two symmetric suites: "modern" (HMAC-SHA256, AES-256-GCM) and
// "paper-compat" (HMAC-SHA1, RC2-CBC), the latter only so that the wire
// formats of the original deployment can be reproduced.  Public-key
// operations use Ed25519 signatures and X25519 sealed boxes.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wsec::soap {

using Bytes = std::vector<std::uint8_t>;

Bytes to_bytes(std::string_view s);
std::string to_string(const Bytes& b);

// "3E:67:75" style: colon separated uppercase octets.
std::string hex_colon(const Bytes& b);
// Accepts any whitespace between octets; nullopt on malformed input.
std::optional<Bytes> parse_hex_colon(std::string_view s);

// Source of randomness for nonces, IVs and keys; tests pin it.
class Rng {
public:
    virtual ~Rng() = default;
    virtual Bytes bytes(std::size_t n) = 0;
    // A 128-bit nonce rendered in decimal.
    virtual std::string nonce();
};

class SystemRng : public Rng {
public:
    Bytes bytes(std::size_t n) override;
};

// Deterministic: nonces come from a fixed list (then a counter), bytes from a
// seeded generator.
class PinnedRng : public Rng {
public:
    explicit PinnedRng(std::vector<std::string> nonces = {}, std::uint64_t seed = 0);
    Bytes bytes(std::size_t n) override;
    std::string nonce() override;

private:
    std::vector<std::string> nonces_;
    std::size_t next_ = 0;
    std::uint64_t state_;
};

class SymmetricSuite {
public:
    virtual ~SymmetricSuite() = default;
    virtual std::string_view name() const = 0;
    virtual std::size_t key_size() const = 0;
    virtual Bytes mac(const Bytes& key, const Bytes& data) const = 0;
    bool verify(const Bytes& key, const Bytes& data, const Bytes& tag) const;
    virtual Bytes seal(const Bytes& key, const Bytes& plain, Rng& rng) const = 0;
    // nullopt when the ciphertext does not decrypt under key
    virtual std::optional<Bytes> open(const Bytes& key, const Bytes& cipher) const = 0;
};

std::unique_ptr<SymmetricSuite> modern_suite();
std::unique_ptr<SymmetricSuite> paper_compat_suite();
// "modern" or "paper-compat"; throws std::invalid_argument otherwise
std::unique_ptr<SymmetricSuite> suite_by_name(std::string_view name);

Bytes sha256(const Bytes& data);

// ---- public-key material ----

struct SigningKeys {
    Bytes public_key; // 32 bytes
    Bytes secret_key; // 64 bytes
};
struct BoxKeys {
    Bytes public_key; // 32 bytes
    Bytes secret_key; // 32 bytes
};

SigningKeys signing_keys_from_seed(const Bytes& seed32);
BoxKeys box_keys_from_seed(const Bytes& seed32);

Bytes sign_detached(const Bytes& msg, const SigningKeys& k);
bool verify_detached(const Bytes& msg, const Bytes& sig, const Bytes& public_key);
Bytes seal_box(const Bytes& msg, const Bytes& public_key);
std::optional<Bytes> open_box(const Bytes& cipher, const BoxKeys& k);

// name, public key, CA signature over both
struct Certificate {
    std::string subject;
    Bytes public_key;
    Bytes signature;

    Bytes encode() const;
    static std::optional<Certificate> decode(const Bytes& b);
    Bytes signed_part() const;
};

Certificate issue_certificate(const std::string& subject, const Bytes& public_key, const SigningKeys& ca);
bool check_certificate(const Certificate& c, const Bytes& ca_public_key);

// Key material of a deployment: directional shared keys K_client_server and,
// for the public-key protocols, a CA and per-principal key pairs.
class KeyStore {
public:
    void set_shared(const std::string& client, const std::string& server, Bytes key);
    const Bytes* shared(const std::string& client, const std::string& server) const;

    void set_ca(SigningKeys ca) { ca_ = std::move(ca); }
    const SigningKeys& ca() const { return ca_; }
    void add_principal(const std::string& p, SigningKeys sig, BoxKeys box);
    const SigningKeys* signing(const std::string& p) const;
    const BoxKeys* box(const std::string& p) const;
    Certificate signing_certificate(const std::string& p) const;
    Certificate box_certificate(const std::string& p) const;

    // Keys derived from a label for every ordered pair of principals and for
    // the public-key setup; reproducible, for demos and fixtures.
    static KeyStore derived(const std::vector<std::string>& principals, std::size_t shared_key_size,
                            std::string_view label = "wsec");

private:
    std::map<std::pair<std::string, std::string>, Bytes> shared_;
    SigningKeys ca_;
    std::map<std::string, std::pair<SigningKeys, BoxKeys>> principals_;
};

} // namespace wsec::soap
