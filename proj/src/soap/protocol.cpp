#include "wsec/soap/protocol.hpp"

#include "wsec/obj/eval.hpp"
#include "wsec/obj/parser.hpp"
#include "wsec/obj/printer.hpp"

#include <algorithm>
#include <cctype>

namespace wsec::soap {

namespace {

constexpr std::size_t kMaxWireNumeral = 10'000'000;

const char* const kVkCert = "vkcert";
const char* const kEkCert = "ekcert";
const char* const kKeyNonce = "keynonce";
const char* const kSessionKey = "sessionkey";

std::vector<std::string> unbind(const Bytes& b, std::size_t n, std::string_view tag) {
    std::string text = to_string(b);
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t colon = text.find(':', i);
        if (colon == std::string::npos || colon == i || colon - i > 9) return {};
        std::size_t len = 0;
        for (std::size_t k = i; k < colon; ++k) {
            if (!std::isdigit(static_cast<unsigned char>(text[k]))) return {};
            len = len * 10 + static_cast<std::size_t>(text[k] - '0');
        }
        if (colon + 1 + len >= text.size() || text[colon + 1 + len] != ',') return {};
        out.push_back(text.substr(colon + 1, len));
        i = colon + len + 2;
    }
    if (out.size() != n || out[0] != tag) return {};
    return out;
}

[[noreturn]] void fail(ErrorKind k, const std::string& what, const std::string& xml = {}) {
    throw ProtocolError(k, what, xml);
}

Bytes hex_field(const std::string& text, const std::string& what, const std::string& xml) {
    auto b = parse_hex_colon(text);
    if (!b) fail(ErrorKind::Malformed, what + " is not colon-separated hex", xml);
    return *b;
}

DSHeader header_for(const std::string& caller, const std::string& callee) {
    DSHeader h;
    h.callerid = caller;
    h.calleeid = callee;
    return h;
}

BodyElement nonce_request_element() { return {"RequestNonce", {}}; }
BodyElement nonce_reply_element(const std::string& n) { return {"RequestNonceResponse", {{"RequestNonceResult", n}}}; }

std::string nonce_of_reply(const SoapEnvelope& e, const std::string& xml) {
    if (e.encrypted() || e.element().name != "RequestNonceResponse") fail(ErrorKind::Malformed, "expected a nonce", xml);
    const std::string* n = e.element().find("RequestNonceResult");
    if (!n || n->empty()) fail(ErrorKind::Malformed, "nonce reply without a nonce", xml);
    return *n;
}

SoapEnvelope parse_or_fail(const std::string& xml) {
    try {
        return parse_envelope(xml);
    } catch (const EnvelopeError& e) {
        fail(ErrorKind::Malformed, e.what(), xml);
    }
}

Certificate decode_cert(const std::string& hex, const std::string& xml) {
    auto b = parse_hex_colon(hex);
    if (!b) fail(ErrorKind::CertInvalid, "certificate is not colon-separated hex", xml);
    auto c = Certificate::decode(*b);
    if (!c) fail(ErrorKind::CertInvalid, "certificate does not decode", xml);
    return *c;
}

} // namespace

std::string_view to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::SignatureMismatch: return "SignatureMismatch";
    case ErrorKind::ReplayDetected: return "ReplayDetected";
    case ErrorKind::StaleSession: return "StaleSession";
    case ErrorKind::DecryptFailure: return "DecryptFailure";
    case ErrorKind::CertInvalid: return "CertInvalid";
    case ErrorKind::LevelMismatch: return "LevelMismatch";
    case ErrorKind::Malformed: return "Malformed";
    case ErrorKind::Config: return "Config";
    case ErrorKind::MethodFailed: return "MethodFailed";
    }
    return "?";
}

ProtocolError::ProtocolError(ErrorKind kind, const std::string& what, std::string envelope)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), envelope_(std::move(envelope)) {}

// ---- transport ----

void Transport::send(Frame f) {
    if (tap_) tap_(log_.size(), f);
    log_.push_back(f);
    queue_.push_back(std::move(f));
}

Frame Transport::receive(const std::string& to) {
    auto it = std::find_if(queue_.begin(), queue_.end(), [&](const Frame& f) { return f.to == to; });
    if (it == queue_.end()) fail(ErrorKind::Config, "no frame in flight for " + to);
    Frame f = std::move(*it);
    queue_.erase(it);
    return f;
}

// ---- nonces ----

void NonceLedger::issue(const std::string& n) {
    std::lock_guard lock(mu_);
    states_.emplace(n, State::Issued);
}

NonceLedger::Spend NonceLedger::spend(const std::string& n) {
    std::lock_guard lock(mu_);
    auto it = states_.find(n);
    if (it == states_.end()) return Spend::Unknown;
    if (it->second == State::Spent) return Spend::AlreadySpent;
    it->second = State::Spent;
    return Spend::Ok;
}

std::optional<NonceLedger::State> NonceLedger::state(const std::string& n) const {
    std::lock_guard lock(mu_);
    auto it = states_.find(n);
    if (it == states_.end()) return std::nullopt;
    return it->second;
}

std::size_t NonceLedger::size() const {
    std::lock_guard lock(mu_);
    return states_.size();
}

namespace {

void spend_or_fail(NonceLedger& ledger, const std::string& n, const std::string& xml) {
    switch (ledger.spend(n)) {
    case NonceLedger::Spend::Ok: return;
    case NonceLedger::Spend::AlreadySpent: fail(ErrorKind::ReplayDetected, "nonce " + n + " already spent", xml);
    case NonceLedger::Spend::Unknown: fail(ErrorKind::StaleSession, "nonce " + n + " was never issued", xml);
    }
}

} // namespace

// ---- wire encodings ----

std::string value_text(const obj::ValuePtr& v) {
    if (auto n = obj::as_num(v)) return std::to_string(*n);
    return obj::print_value(v);
}

obj::ValuePtr parse_value_text(const std::string& text, const obj::ExecutionEnvironment& env) {
    if (!text.empty() && std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isdigit(c); })) {
        if (text.size() > 8 || std::stoul(text) > kMaxWireNumeral) fail(ErrorKind::Malformed, "numeral too large: " + text);
        return obj::mk_num(std::stoul(text));
    }
    obj::BodyPtr b;
    try {
        b = obj::parse_body(text, env);
    } catch (const std::exception& e) {
        fail(ErrorKind::Malformed, "bad value '" + text + "': " + e.what());
    }
    const auto* v = b->as<obj::ValB>();
    if (!v || v->value->has_vars) fail(ErrorKind::Malformed, "not a closed value: " + text);
    return v->value;
}

BodyElement call_element(const obj::ExecutionEnvironment& env, const std::string& service, const std::string& method,
                         const std::vector<obj::ValuePtr>& args) {
    const obj::ServiceDef* w = env.find_service(service);
    if (!w) fail(ErrorKind::Config, "unknown web service " + service);
    const obj::ClassDef* c = env.find_class(w->cls);
    const obj::MethodDef* m = c ? c->method(method) : nullptr;
    if (!m) fail(ErrorKind::Config, "service " + service + " has no method " + method);
    if (m->sig.params.size() != args.size()) fail(ErrorKind::Config, "arity mismatch calling " + method);
    BodyElement b{method, {}};
    for (std::size_t i = 0; i < args.size(); ++i) b.children.emplace_back(m->sig.params[i].first, value_text(args[i]));
    return b;
}

BodyElement result_element(const std::string& method, const obj::ValuePtr& v) {
    return {method + "Response", {{method + "Result", value_text(v)}}};
}

Bytes binding(const std::vector<std::string>& fields) {
    std::string out;
    for (const auto& f : fields) out += std::to_string(f.size()) + ":" + f + ",";
    return to_bytes(out);
}

// ---- server ----

Server::Server(const obj::ExecutionEnvironment& env, std::string service, const KeyStore& keys,
               const SymmetricSuite& suite, Rng& rng, ServerOptions opts)
    : env_(env), service_(std::move(service)), keys_(keys), suite_(suite), rng_(rng), opts_(opts) {
    const obj::ServiceDef* w = env_.find_service(service_);
    if (!w) fail(ErrorKind::Config, "unknown web service " + service_);
    owner_ = w->owner;
    url_ = w->url.empty() ? w->name : w->url;
}

Frame Server::reply(const Frame& in, const std::string& label, const SoapEnvelope& e) const {
    return Frame{in.session, owner_, in.from, label, serialize_envelope(e)};
}

Frame Server::handle(const Frame& in) {
    SoapEnvelope e = parse_or_fail(in.xml);
    if (!e.encrypted() && e.element().name == "RequestNonce") return nonce_request(in, e);
    return opts_.asymmetric ? call_asym(in, e) : call(in, e);
}

Certificate Server::checked_certificate(const std::string& hex, const std::string& subject,
                                        const std::string& xml) const {
    Certificate c = decode_cert(hex, xml);
    if (!check_certificate(c, keys_.ca().public_key)) fail(ErrorKind::CertInvalid, "certificate not signed by the CA", xml);
    if (c.subject != subject) fail(ErrorKind::CertInvalid, "certificate names " + c.subject + ", not " + subject, xml);
    return c;
}

Frame Server::nonce_request(const Frame& in, const SoapEnvelope& e) {
    std::string nq = rng_.nonce();
    if (!opts_.asymmetric || (opts_.defer_certs && !(e.header && e.header->find_extra(kEkCert)))) {
        ledger_.issue(nq);
        return reply(in, "nonce", SoapEnvelope{std::nullopt, nonce_reply_element(nq)});
    }
    if (!e.header) fail(ErrorKind::Malformed, "nonce request without certificate", in.xml);
    const DSHeader& h = *e.header;
    DSHeader out = header_for(h.callerid, owner_);
    out.nq = nq;
    Session session{h.callerid, std::nullopt, ""};
    if (const std::string* vk = h.find_extra(kVkCert)) {
        session.caller_cert = checked_certificate(*vk, h.callerid, in.xml);
        session.np = h.np;
        out.np = h.np;
        out.extra.emplace_back(kVkCert, hex_colon(keys_.signing_certificate(owner_).encode()));
    } else if (const std::string* ek = h.find_extra(kEkCert)) {
        session.caller_cert = checked_certificate(*ek, h.callerid, in.xml);
        std::string nk = rng_.nonce();
        ledger_.issue(nk);
        out.extra.emplace_back(kEkCert, hex_colon(keys_.box_certificate(owner_).encode()));
        out.extra.emplace_back(kKeyNonce,
                               hex_colon(seal_box(binding({"msg2", owner_, nk}), session.caller_cert->public_key)));
    } else {
        fail(ErrorKind::Malformed, "nonce request without certificate", in.xml);
    }
    {
        std::lock_guard lock(sessions_mu_);
        sessions_[in.session] = std::move(session);
    }
    ledger_.issue(nq);
    return reply(in, "nonce", SoapEnvelope{std::move(out), nonce_reply_element(nq)});
}

obj::ValuePtr Server::invoke(const std::string& caller, const BodyElement& call, SecurityLevel level,
                             const std::string& xml) const {
    const obj::ServiceDef* w = env_.find_service(service_);
    const obj::ClassDef* c = env_.find_class(w->cls);
    const obj::MethodDef* m = c ? c->method(call.name) : nullptr;
    if (!m) fail(ErrorKind::Malformed, "no web method " + call.name, xml);
    if (static_cast<int>(level) < static_cast<int>(m->level))
        fail(ErrorKind::LevelMismatch,
             call.name + " requires " + std::string(to_string(m->level)) + ", called at " + std::string(to_string(level)),
             xml);
    if (call.children.size() != m->sig.params.size()) fail(ErrorKind::Malformed, "arity mismatch calling " + call.name, xml);
    std::vector<obj::ValuePtr> args;
    for (std::size_t i = 0; i < call.children.size(); ++i) {
        if (call.children[i].first != m->sig.params[i].first)
            fail(ErrorKind::Malformed, "expected argument " + m->sig.params[i].first, xml);
        try {
            args.push_back(parse_value_text(call.children[i].second, env_));
        } catch (const ProtocolError& e) {
            fail(e.kind(), e.what(), xml);
        }
    }
    if (!env_.is_principal(caller)) fail(ErrorKind::Malformed, "unknown caller " + caller, xml);
    auto body = obj::mk_running(owner_, obj::mk_invoke(obj::mk_new(w->cls, {obj::mk_prin(caller)}), call.name, args));
    obj::EvalResult r = obj::eval(body, caller, env_, opts_.fuel);
    if (r.status != obj::EvalStatus::Value)
        fail(ErrorKind::MethodFailed, call.name + " ended " + std::string(obj::to_string(r.status)) + " " + r.stuck_reason,
             xml);
    return r.value;
}

Frame Server::call(const Frame& in, const SoapEnvelope& e) {
    if (!e.header) fail(ErrorKind::Malformed, "call without DSHeader", in.xml);
    const DSHeader& h = *e.header;
    if (h.calleeid != owner_) fail(ErrorKind::Malformed, "call addressed to " + h.calleeid, in.xml);
    const std::string& caller = h.callerid;
    const Bytes* key = keys_.shared(caller, owner_);

    if (e.encrypted()) {
        if (!key) fail(ErrorKind::Config, "no key shared by " + caller + " and " + owner_, in.xml);
        auto plain = suite_.open(*key, e.cipher());
        if (!plain) fail(ErrorKind::DecryptFailure, "body does not decrypt", in.xml);
        auto f = unbind(*plain, 5, "req");
        if (f.empty()) fail(ErrorKind::DecryptFailure, "body does not decrypt to a request", in.xml);
        if (f[1] != url_) fail(ErrorKind::Malformed, "request for " + f[1], in.xml);
        if (f[3] != in.session) fail(ErrorKind::StaleSession, "request from another session", in.xml);
        spend_or_fail(ledger_, f[4], in.xml);
        BodyElement call;
        try {
            call = parse_element(f[2]);
        } catch (const EnvelopeError& err) {
            fail(ErrorKind::Malformed, err.what(), in.xml);
        }
        BodyElement res = result_element(call.name, invoke(caller, call, SecurityLevel::AuthEnc, in.xml));
        Bytes sealed = suite_.seal(*key, binding({"res", url_, canonical_element(res), in.session, h.np}), rng_);
        return reply(in, "result", SoapEnvelope{header_for(caller, owner_), std::move(sealed)});
    }

    const BodyElement& call = e.element();
    if (h.nq != kDummyNonce) {
        if (!key) fail(ErrorKind::Config, "no key shared by " + caller + " and " + owner_, in.xml);
        if (!suite_.verify(*key, binding({"req", url_, canonical_element(call), in.session, h.nq}), h.signature))
            fail(ErrorKind::SignatureMismatch, "request MAC does not verify", in.xml);
        spend_or_fail(ledger_, h.nq, in.xml);
        BodyElement res = result_element(call.name, invoke(caller, call, SecurityLevel::Auth, in.xml));
        DSHeader out = header_for(caller, owner_);
        out.np = h.np;
        out.nq = h.nq;
        out.signature = suite_.mac(*key, binding({"res", url_, canonical_element(res), in.session, h.np}));
        return reply(in, "result", SoapEnvelope{std::move(out), std::move(res)});
    }

    BodyElement res = result_element(call.name, invoke(caller, call, SecurityLevel::None, in.xml));
    return reply(in, "result", SoapEnvelope{header_for(caller, owner_), std::move(res)});
}

Frame Server::call_asym(const Frame& in, const SoapEnvelope& e) {
    if (!e.header) fail(ErrorKind::Malformed, "call without DSHeader", in.xml);
    const DSHeader& h = *e.header;
    if (h.calleeid != owner_) fail(ErrorKind::Malformed, "call addressed to " + h.calleeid, in.xml);
    const std::string& caller = h.callerid;

    std::optional<Session> session;
    {
        std::lock_guard lock(sessions_mu_);
        auto it = sessions_.find(in.session);
        if (it != sessions_.end()) session = it->second;
    }
    if (session && session->caller != caller) fail(ErrorKind::StaleSession, "session belongs to " + session->caller, in.xml);

    if (const std::string* sk = h.find_extra(kSessionKey)) {
        if (!session) fail(ErrorKind::StaleSession, "no session " + in.session, in.xml);
        const BoxKeys* mine = keys_.box(owner_);
        if (!mine) fail(ErrorKind::Config, "no encryption key for " + owner_, in.xml);
        auto msg3 = open_box(hex_field(*sk, "session key", in.xml), *mine);
        if (!msg3) fail(ErrorKind::DecryptFailure, "session key does not decrypt", in.xml);
        auto f = unbind(*msg3, 5, "msg3");
        if (f.empty()) fail(ErrorKind::DecryptFailure, "session key does not decrypt to msg3", in.xml);
        if (f[1] != url_ || f[2] != caller) fail(ErrorKind::SignatureMismatch, "session key bound to " + f[2], in.xml);
        spend_or_fail(ledger_, f[4], in.xml); // K is bound only once n_K checks out
        auto key = parse_hex_colon(f[3]);
        if (!key || key->size() != suite_.key_size()) fail(ErrorKind::DecryptFailure, "bad session key", in.xml);
        if (!e.encrypted()) fail(ErrorKind::Malformed, "AuthEnc call with a plaintext body", in.xml);
        auto plain = suite_.open(*key, e.cipher());
        if (!plain) fail(ErrorKind::DecryptFailure, "body does not decrypt", in.xml);
        auto r = unbind(*plain, 4, "req");
        if (r.empty()) fail(ErrorKind::DecryptFailure, "body does not decrypt to a request", in.xml);
        if (r[2] != in.session) fail(ErrorKind::StaleSession, "request from another session", in.xml);
        spend_or_fail(ledger_, r[3], in.xml);
        BodyElement call;
        try {
            call = parse_element(r[1]);
        } catch (const EnvelopeError& err) {
            fail(ErrorKind::Malformed, err.what(), in.xml);
        }
        BodyElement res = result_element(call.name, invoke(caller, call, SecurityLevel::AuthEnc, in.xml));
        Bytes sealed = suite_.seal(*key, binding({"res", canonical_element(res), in.session, h.np}), rng_);
        return reply(in, "result", SoapEnvelope{header_for(caller, owner_), std::move(sealed)});
    }

    if (e.encrypted()) fail(ErrorKind::Malformed, "encrypted call without a session key", in.xml);
    Certificate cert;
    std::string np;
    if (opts_.defer_certs) {
        const std::string* vk = h.find_extra(kVkCert);
        if (!vk) fail(ErrorKind::CertInvalid, "call without certificate", in.xml);
        cert = checked_certificate(*vk, caller, in.xml);
        np = h.np;
    } else {
        if (!session || !session->caller_cert) fail(ErrorKind::StaleSession, "no session " + in.session, in.xml);
        cert = *session->caller_cert;
        np = session->np;
    }
    const BodyElement& call = e.element();
    if (!verify_detached(binding({"req", url_, canonical_element(call), in.session, owner_, h.nq}), h.signature,
                         cert.public_key))
        fail(ErrorKind::SignatureMismatch, "request signature does not verify", in.xml);
    spend_or_fail(ledger_, h.nq, in.xml);
    BodyElement res = result_element(call.name, invoke(caller, call, SecurityLevel::Auth, in.xml));
    const SigningKeys* mine = keys_.signing(owner_);
    if (!mine) fail(ErrorKind::Config, "no signing key for " + owner_, in.xml);
    DSHeader out = header_for(caller, owner_);
    out.np = np;
    out.nq = h.nq;
    out.signature = sign_detached(binding({"res", url_, canonical_element(res), in.session, caller, np}), *mine);
    if (opts_.defer_certs) out.extra.emplace_back(kVkCert, hex_colon(keys_.signing_certificate(owner_).encode()));
    return reply(in, "result", SoapEnvelope{std::move(out), std::move(res)});
}

// ---- client ----

namespace {

struct Exchange {
    CallContext& ctx;
    std::string client;
    std::string owner;
    std::string session;
    std::size_t first_log;

    Frame roundtrip(const std::string& label, const SoapEnvelope& e) {
        ctx.transport.send(Frame{session, client, owner, label, serialize_envelope(e)});
        Frame resp = ctx.server.handle(ctx.transport.receive(owner));
        ctx.transport.send(std::move(resp));
        Frame back = ctx.transport.receive(client);
        if (back.session != session) fail(ErrorKind::StaleSession, "reply from session " + back.session, back.xml);
        return back;
    }

    std::vector<Frame> log() const {
        const auto& all = ctx.transport.log();
        return {all.begin() + static_cast<std::ptrdiff_t>(first_log), all.end()};
    }
};

Exchange start(const CallRequest& req, CallContext& ctx) {
    if (!ctx.env.is_principal(req.client)) fail(ErrorKind::Config, "unknown principal " + req.client);
    const obj::ServiceDef* w = ctx.env.find_service(req.service);
    if (!w) fail(ErrorKind::Config, "unknown web service " + req.service);
    if (w->owner != ctx.server.owner()) fail(ErrorKind::Config, "server does not run " + req.service);
    std::string session = hex_colon(ctx.rng.bytes(8));
    std::erase(session, ':');
    return Exchange{ctx, req.client, w->owner, session, ctx.transport.log().size()};
}

obj::ValuePtr result_of(const CallContext& ctx, const std::string& method, const BodyElement& b, const std::string& xml) {
    const std::string* r = b.name == method + "Response" ? b.find(method + "Result") : nullptr;
    if (!r) fail(ErrorKind::Malformed, "expected " + method + "Response", xml);
    try {
        return parse_value_text(*r, ctx.env);
    } catch (const ProtocolError& e) {
        fail(e.kind(), e.what(), xml);
    }
}

BodyElement element_or_fail(const std::string& canonical, const std::string& xml) {
    try {
        return parse_element(canonical);
    } catch (const EnvelopeError& e) {
        fail(ErrorKind::Malformed, e.what(), xml);
    }
}

} // namespace

CallResult run_call(const CallRequest& req, CallContext& ctx) {
    Exchange x = start(req, ctx);
    BodyElement call = call_element(ctx.env, req.service, req.method, req.args);
    const std::string& url = ctx.server.url();

    if (req.level == SecurityLevel::None) {
        Frame back = x.roundtrip("call", SoapEnvelope{header_for(x.client, x.owner), call});
        SoapEnvelope e = parse_or_fail(back.xml);
        if (e.encrypted()) fail(ErrorKind::Malformed, "encrypted reply to a plain call", back.xml);
        return {result_of(ctx, req.method, e.element(), back.xml), x.log()};
    }

    const Bytes* key = ctx.keys.shared(x.client, x.owner);
    if (!key) fail(ErrorKind::Config, "no key shared by " + x.client + " and " + x.owner);
    std::string np = ctx.rng.nonce();
    Frame got = x.roundtrip("nonce request", SoapEnvelope{std::nullopt, nonce_request_element()});
    std::string nq = nonce_of_reply(parse_or_fail(got.xml), got.xml);

    DSHeader h = header_for(x.client, x.owner);
    h.np = np;
    if (req.level == SecurityLevel::Auth) {
        h.nq = nq;
        h.signature = ctx.suite.mac(*key, binding({"req", url, canonical_element(call), x.session, nq}));
        Frame back = x.roundtrip("call", SoapEnvelope{h, call});
        SoapEnvelope e = parse_or_fail(back.xml);
        if (!e.header || e.encrypted()) fail(ErrorKind::Malformed, "reply without DSHeader", back.xml);
        if (e.header->np != np) fail(ErrorKind::StaleSession, "reply carries np " + e.header->np, back.xml);
        const BodyElement& res = e.element();
        if (!ctx.suite.verify(*key, binding({"res", url, canonical_element(res), x.session, np}), e.header->signature))
            fail(ErrorKind::SignatureMismatch, "reply MAC does not verify", back.xml);
        return {result_of(ctx, req.method, res, back.xml), x.log()};
    }

    Bytes sealed = ctx.suite.seal(*key, binding({"req", url, canonical_element(call), x.session, nq}), ctx.rng);
    Frame back = x.roundtrip("call", SoapEnvelope{h, std::move(sealed)});
    SoapEnvelope e = parse_or_fail(back.xml);
    if (!e.encrypted()) fail(ErrorKind::Malformed, "plaintext reply to an encrypted call", back.xml);
    auto plain = ctx.suite.open(*key, e.cipher());
    if (!plain) fail(ErrorKind::DecryptFailure, "reply does not decrypt", back.xml);
    auto f = unbind(*plain, 5, "res");
    if (f.empty()) fail(ErrorKind::DecryptFailure, "reply does not decrypt to a result", back.xml);
    if (f[1] != url || f[3] != x.session || f[4] != np) fail(ErrorKind::StaleSession, "reply for another call", back.xml);
    return {result_of(ctx, req.method, element_or_fail(f[2], back.xml), back.xml), x.log()};
}

CallResult run_call_asym(const CallRequest& req, CallContext& ctx, bool defer_certs) {
    if (req.level == SecurityLevel::None) fail(ErrorKind::Config, "public-key protocols need Auth or AuthEnc");
    if (defer_certs && req.level != SecurityLevel::Auth)
        fail(ErrorKind::Config, "deferred certificates apply to Auth only");
    Exchange x = start(req, ctx);
    BodyElement call = call_element(ctx.env, req.service, req.method, req.args);
    const std::string& url = ctx.server.url();
    const Bytes& ca = ctx.keys.ca().public_key;
    auto peer_cert = [&](const DSHeader& h, const char* which, const std::string& xml) {
        const std::string* hex = h.find_extra(which);
        if (!hex) fail(ErrorKind::CertInvalid, "reply without certificate", xml);
        Certificate c = decode_cert(*hex, xml);
        if (!check_certificate(c, ca)) fail(ErrorKind::CertInvalid, "certificate not signed by the CA", xml);
        if (c.subject != x.owner) fail(ErrorKind::CertInvalid, "certificate names " + c.subject, xml);
        return c;
    };

    if (req.level == SecurityLevel::Auth) {
        const SigningKeys* mine = ctx.keys.signing(x.client);
        if (!mine) fail(ErrorKind::Config, "no signing key for " + x.client);
        std::string np = ctx.rng.nonce();
        std::string my_cert = hex_colon(ctx.keys.signing_certificate(x.client).encode());
        SoapEnvelope m1{std::nullopt, nonce_request_element()};
        if (!defer_certs) {
            DSHeader h = header_for(x.client, x.owner);
            h.np = np;
            h.extra.emplace_back(kVkCert, my_cert);
            m1.header = std::move(h);
        }
        Frame got = x.roundtrip("nonce request", m1);
        SoapEnvelope m2 = parse_or_fail(got.xml);
        std::string nq = nonce_of_reply(m2, got.xml);
        std::optional<Certificate> server_cert;
        if (!defer_certs) {
            if (!m2.header) fail(ErrorKind::CertInvalid, "nonce reply without certificate", got.xml);
            server_cert = peer_cert(*m2.header, kVkCert, got.xml);
        }

        DSHeader h = header_for(x.client, x.owner);
        h.nq = nq;
        if (defer_certs) {
            h.np = np;
            h.extra.emplace_back(kVkCert, my_cert);
        }
        h.signature = sign_detached(binding({"req", url, canonical_element(call), x.session, x.owner, nq}), *mine);
        Frame back = x.roundtrip("call", SoapEnvelope{h, call});
        SoapEnvelope m4 = parse_or_fail(back.xml);
        if (!m4.header || m4.encrypted()) fail(ErrorKind::Malformed, "reply without DSHeader", back.xml);
        if (defer_certs) server_cert = peer_cert(*m4.header, kVkCert, back.xml);
        const BodyElement& res = m4.element();
        if (!verify_detached(binding({"res", url, canonical_element(res), x.session, x.client, np}),
                             m4.header->signature, server_cert->public_key))
            fail(ErrorKind::SignatureMismatch, "reply signature does not verify", back.xml);
        return {result_of(ctx, req.method, res, back.xml), x.log()};
    }

    const BoxKeys* mine = ctx.keys.box(x.client);
    if (!mine) fail(ErrorKind::Config, "no encryption key for " + x.client);
    DSHeader h1 = header_for(x.client, x.owner);
    h1.extra.emplace_back(kEkCert, hex_colon(ctx.keys.box_certificate(x.client).encode()));
    Frame got = x.roundtrip("nonce request", SoapEnvelope{h1, nonce_request_element()});
    SoapEnvelope m2 = parse_or_fail(got.xml);
    std::string nq = nonce_of_reply(m2, got.xml);
    if (!m2.header) fail(ErrorKind::CertInvalid, "nonce reply without certificate", got.xml);
    Certificate server_cert = peer_cert(*m2.header, kEkCert, got.xml);
    const std::string* kn = m2.header->find_extra(kKeyNonce);
    if (!kn) fail(ErrorKind::Malformed, "nonce reply without key nonce", got.xml);
    auto msg2 = open_box(hex_field(*kn, "key nonce", got.xml), *mine);
    if (!msg2) fail(ErrorKind::DecryptFailure, "key nonce does not decrypt", got.xml);
    auto f2 = unbind(*msg2, 3, "msg2");
    if (f2.empty() || f2[1] != x.owner) fail(ErrorKind::DecryptFailure, "key nonce not from " + x.owner, got.xml);

    Bytes key = ctx.rng.bytes(ctx.suite.key_size());
    std::string np = ctx.rng.nonce();
    DSHeader h = header_for(x.client, x.owner);
    h.np = np;
    h.extra.emplace_back(kSessionKey,
                         hex_colon(seal_box(binding({"msg3", url, x.client, hex_colon(key), f2[2]}), server_cert.public_key)));
    Bytes sealed = ctx.suite.seal(key, binding({"req", canonical_element(call), x.session, nq}), ctx.rng);
    Frame back = x.roundtrip("call", SoapEnvelope{h, std::move(sealed)});
    SoapEnvelope m4 = parse_or_fail(back.xml);
    if (!m4.encrypted()) fail(ErrorKind::Malformed, "plaintext reply to an encrypted call", back.xml);
    auto plain = ctx.suite.open(key, m4.cipher());
    if (!plain) fail(ErrorKind::DecryptFailure, "reply does not decrypt", back.xml);
    auto f = unbind(*plain, 4, "res");
    if (f.empty()) fail(ErrorKind::DecryptFailure, "reply does not decrypt to a result", back.xml);
    if (f[2] != x.session || f[3] != np) fail(ErrorKind::StaleSession, "reply for another call", back.xml);
    return {result_of(ctx, req.method, element_or_fail(f[1], back.xml), back.xml), x.log()};
}

} // namespace wsec::soap
