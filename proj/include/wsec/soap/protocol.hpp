#pragma once

// Secure web-service calls over SOAP envelopes.
//
// Symmetric protocols, with K the key shared by client p and owner q:
//
//   None     p -> q  header(p, q), call          q -> p  header(p, q), result
//   Auth     p -> q  RequestNonce                q -> p  nq
//            p -> q  header(p, q, np, nq, MAC_K(req, w, call, s, nq)), call
//            q -> p  header(p, q, np, nq, MAC_K(res, w, result, s, np)), result
//   AuthEnc  nonce exchange as for Auth, then
//            p -> q  header(p, q, np, -1), E_K(req, w, call, s, nq)
//            q -> p  header(p, q, -1, -1), E_K(res, w, result, s, np)
//
// The public-key variants follow the same shape with certificates,
// Ed25519 signatures and, for AuthEnc, a session key sealed to the server.
// The session tag s names the transport session of the call.

#include "wsec/obj/ast.hpp"
#include "wsec/security_level.hpp"
#include "wsec/soap/crypto.hpp"
#include "wsec/soap/envelope.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace wsec::soap {

enum class ErrorKind {
    SignatureMismatch,
    ReplayDetected,
    StaleSession,
    DecryptFailure,
    CertInvalid,
    LevelMismatch, // call made below the method's declared level
    Malformed,
    Config,
    MethodFailed,
};

std::string_view to_string(ErrorKind k);

class ProtocolError : public std::runtime_error {
public:
    ProtocolError(ErrorKind kind, const std::string& what, std::string envelope = {});
    ErrorKind kind() const { return kind_; }
    // serialized envelope that caused the failure, when there is one
    const std::string& envelope() const { return envelope_; }

private:
    ErrorKind kind_;
    std::string envelope_;
};

// One envelope in flight.
struct Frame {
    std::string session;
    std::string from;
    std::string to;
    std::string label; // e.g. "nonce request", "call", "result"
    std::string xml;
};

// In-process duplex queue. The tap sees every frame as it is sent and may
// rewrite it; the log keeps the frames as delivered.
class Transport {
public:
    using Tap = std::function<void(std::size_t index, Frame&)>;

    void set_tap(Tap tap) { tap_ = std::move(tap); }
    void send(Frame f);
    // Next frame addressed to `to`.
    Frame receive(const std::string& to);
    const std::vector<Frame>& log() const { return log_; }
    void clear_log() { log_.clear(); }

private:
    Tap tap_;
    std::vector<Frame> queue_;
    std::vector<Frame> log_;
};

// Server-side nonce states: each issued nonce is spent at most once.
class NonceLedger {
public:
    enum class State { Issued, Spent };
    enum class Spend { Ok, AlreadySpent, Unknown };

    void issue(const std::string& n);
    Spend spend(const std::string& n);
    std::optional<State> state(const std::string& n) const;
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::map<std::string, State> states_;
};

struct ServerOptions {
    bool asymmetric = false;
    bool defer_certs = false; // public-key Auth only: certificates and np travel with the call
    std::uint64_t fuel = 1'000'000;
};

// The owner's side of one web service; one state machine per session id.
class Server {
public:
    Server(const obj::ExecutionEnvironment& env, std::string service, const KeyStore& keys,
           const SymmetricSuite& suite, Rng& rng, ServerOptions opts = {});

    Frame handle(const Frame& in);

    const std::string& owner() const { return owner_; }
    const std::string& url() const { return url_; }
    NonceLedger& ledger() { return ledger_; }

private:
    struct Session {
        std::string caller;
        std::optional<Certificate> caller_cert;
        std::string np;
    };

    Frame reply(const Frame& in, const std::string& label, const SoapEnvelope& e) const;
    Frame nonce_request(const Frame& in, const SoapEnvelope& e);
    Frame call(const Frame& in, const SoapEnvelope& e);
    Frame call_asym(const Frame& in, const SoapEnvelope& e);
    obj::ValuePtr invoke(const std::string& caller, const BodyElement& call, SecurityLevel level,
                         const std::string& xml) const;
    Certificate checked_certificate(const std::string& hex, const std::string& subject, const std::string& xml) const;

    const obj::ExecutionEnvironment& env_;
    std::string service_;
    std::string owner_;
    std::string url_;
    const KeyStore& keys_;
    const SymmetricSuite& suite_;
    Rng& rng_;
    ServerOptions opts_;
    NonceLedger ledger_;
    std::mutex sessions_mu_;
    std::map<std::string, Session> sessions_;
};

struct CallRequest {
    SecurityLevel level = SecurityLevel::Auth;
    std::string client;
    std::string service;
    std::string method;
    std::vector<obj::ValuePtr> args;
};

struct CallContext {
    const obj::ExecutionEnvironment& env;
    const KeyStore& keys;
    const SymmetricSuite& suite;
    Rng& rng;
    Transport& transport;
    Server& server;
};

struct CallResult {
    obj::ValuePtr value;
    std::vector<Frame> log; // frames of this call, in order
};

CallResult run_call(const CallRequest& req, CallContext& ctx);
// level Auth or AuthEnc; the server must be asymmetric
CallResult run_call_asym(const CallRequest& req, CallContext& ctx, bool defer_certs = false);

// ---- wire encodings shared by client and server ----

// Numerals as decimal, other values in object-calculus syntax.
std::string value_text(const obj::ValuePtr& v);
obj::ValuePtr parse_value_text(const std::string& text, const obj::ExecutionEnvironment& env);

BodyElement call_element(const obj::ExecutionEnvironment& env, const std::string& service, const std::string& method,
                         const std::vector<obj::ValuePtr>& args);
BodyElement result_element(const std::string& method, const obj::ValuePtr& v);

// Bytes covered by a MAC or signature, and the plaintext of encrypted
// bodies: the fields as netstrings ("3:req,").
Bytes binding(const std::vector<std::string>& fields);

} // namespace wsec::soap
