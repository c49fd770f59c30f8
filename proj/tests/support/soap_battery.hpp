#pragma once

// Replay, bit-flip, leak and certificate trials against the SOAP protocols.
// Shared by the soap tests and the acceptance runner.

#include "wsec/obj/parser.hpp"
#include "wsec/soap/protocol.hpp"

#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace wsec::soap::testing {

inline std::string read_text(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Everything a call needs, wired together; not movable since the server
// holds references into it.
struct Rig {
    obj::Program prog;
    std::unique_ptr<SymmetricSuite> suite;
    KeyStore keys;
    PinnedRng rng;
    Transport transport;
    std::unique_ptr<Server> server;

    Rig(std::string_view program, std::string_view suite_name, std::vector<std::string> nonces, std::uint64_t seed,
        ServerOptions opts = {}, const std::string& service = "w")
        : prog(obj::parse_program(program)), suite(suite_by_name(suite_name)),
          keys(KeyStore::derived({prog.env.principals.begin(), prog.env.principals.end()}, suite->key_size())),
          rng(std::move(nonces), seed) {
        server = std::make_unique<Server>(prog.env, service, keys, *suite, rng, opts);
    }
    Rig(const Rig&) = delete;
    Rig& operator=(const Rig&) = delete;

    CallContext ctx() { return CallContext{prog.env, keys, *suite, rng, transport, *server}; }
};

enum class Variant { Auth, AuthEnc, AuthAsym, AuthAsymDeferred, AuthEncAsym };

inline const char* name_of(Variant v) {
    switch (v) {
    case Variant::Auth: return "auth";
    case Variant::AuthEnc: return "authenc";
    case Variant::AuthAsym: return "auth-asym";
    case Variant::AuthAsymDeferred: return "auth-asym-deferred";
    case Variant::AuthEncAsym: return "authenc-asym";
    }
    return "?";
}

inline bool asymmetric(Variant v) { return v == Variant::AuthAsym || v == Variant::AuthAsymDeferred || v == Variant::AuthEncAsym; }
inline bool encrypted(Variant v) { return v == Variant::AuthEnc || v == Variant::AuthEncAsym; }

inline std::unique_ptr<Rig> rig_for(Variant v, const std::string& program, std::uint64_t seed) {
    ServerOptions opts;
    opts.asymmetric = asymmetric(v);
    opts.defer_certs = v == Variant::AuthAsymDeferred;
    return std::make_unique<Rig>(program, "modern", std::vector<std::string>{}, seed, opts);
}

inline CallResult call(Rig& rig, Variant v, const obj::ValuePtr& account) {
    CallContext ctx = rig.ctx();
    CallRequest req{encrypted(v) ? SecurityLevel::AuthEnc : SecurityLevel::Auth, "Alice", "w",
                    encrypted(v) ? "Statement" : "Balance", {account}};
    if (asymmetric(v)) return run_call_asym(req, ctx, v == Variant::AuthAsymDeferred);
    return run_call(req, ctx);
}

struct BatteryReport {
    std::size_t trials = 0;
    std::size_t replay_detected = 0;
    std::size_t flips_rejected = 0;
    std::size_t leak_free = 0;
    std::size_t certs_rejected = 0;
    std::vector<std::string> failures; // first few, for diagnostics

    bool pass(Variant v) const {
        return replay_detected == trials && flips_rejected == trials && (!encrypted(v) || leak_free == trials) &&
               (!asymmetric(v) || certs_rejected == trials);
    }
};

namespace detail {

inline void flip_bit(std::string& s, std::size_t bit) { s[bit / 8] = static_cast<char>(s[bit / 8] ^ (1 << (bit % 8))); }
inline void flip_bit(Bytes& b, std::size_t bit) { b[bit / 8] ^= static_cast<std::uint8_t>(1 << (bit % 8)); }

// One bit of the signed parts of a plaintext call: argument values or the signature.
inline void flip_signed(SoapEnvelope& e, std::mt19937_64& gen) {
    auto& el = std::get<BodyElement>(e.body);
    std::size_t value_bits = 0;
    for (auto& [k, v] : el.children) value_bits += 8 * v.size();
    std::size_t total = value_bits + 8 * e.header->signature.size();
    std::size_t bit = std::uniform_int_distribution<std::size_t>(0, total - 1)(gen);
    if (bit >= value_bits) return flip_bit(e.header->signature, bit - value_bits);
    for (auto& [k, v] : el.children) {
        if (bit < 8 * v.size()) return flip_bit(v, bit);
        bit -= 8 * v.size();
    }
}

inline void flip_cert(SoapEnvelope& e, std::mt19937_64& gen) {
    for (auto& [k, v] : e.header->extra) {
        if (k != "vkcert" && k != "ekcert") continue;
        Bytes b = *parse_hex_colon(v);
        flip_bit(b, std::uniform_int_distribution<std::size_t>(0, 8 * b.size() - 1)(gen));
        v = hex_colon(b);
        return;
    }
    throw std::logic_error("no certificate in envelope");
}

} // namespace detail

// `trials` rounds of: a clean call whose third message is replayed, a call
// with one bit of its signed or encrypted body flipped, and for public-key
// variants a call with one certificate bit flipped.
inline BatteryReport run_battery(Variant v, std::size_t trials, std::uint64_t seed) {
    const std::string program = read_text(WSEC_SOURCE_DIR "/samples/banking.obc");
    auto rig = rig_for(v, program, seed);
    BatteryReport rep;
    rep.trials = trials;
    auto note = [&](std::size_t i, const std::string& what) {
        if (rep.failures.size() < 5) rep.failures.push_back(std::string(name_of(v)) + " trial " + std::to_string(i) + ": " + what);
    };
    const ErrorKind flip_kind = encrypted(v) ? ErrorKind::DecryptFailure : ErrorKind::SignatureMismatch;

    for (std::size_t i = 0; i < trials; ++i) {
        std::mt19937_64 gen(seed * 1000003 + i);
        std::size_t account_n = i % 3 == 0 ? 12345 : std::uniform_int_distribution<std::size_t>(0, 99999)(gen);
        obj::ValuePtr account = obj::mk_num(account_n);

        // clean call, then replay its third message
        rig->transport.set_tap(nullptr);
        CallResult clean = call(*rig, v, account);
        bool leaked = false;
        if (encrypted(v)) {
            BodyElement plain = call_element(rig->prog.env, "w", "Statement", {account});
            std::vector<std::string> secrets{canonical_element(plain), "Statement",
                                             "<account>" + std::to_string(account_n) + "</account>"};
            for (const Frame& f : clean.log)
                for (const auto& s : secrets)
                    if (f.xml.find(s) != std::string::npos) leaked = true;
            if (leaked) note(i, "plaintext visible on the wire");
            else ++rep.leak_free;
        }
        try {
            rig->server->handle(clean.log.at(2));
            note(i, "replayed call accepted");
        } catch (const ProtocolError& e) {
            if (e.kind() == ErrorKind::ReplayDetected) ++rep.replay_detected;
            else note(i, std::string("replay gave ") + e.what());
        }

        // one flipped bit in the call
        std::size_t base = rig->transport.log().size();
        rig->transport.set_tap([&](std::size_t index, Frame& f) {
            if (index != base + 2) return;
            SoapEnvelope e = parse_envelope(f.xml);
            if (encrypted(v))
                detail::flip_bit(std::get<Bytes>(e.body),
                                 std::uniform_int_distribution<std::size_t>(0, 8 * e.cipher().size() - 1)(gen));
            else
                detail::flip_signed(e, gen);
            f.xml = serialize_envelope(e);
        });
        try {
            call(*rig, v, account);
            note(i, "flipped call returned a result");
        } catch (const ProtocolError& e) {
            if (e.kind() == flip_kind) ++rep.flips_rejected;
            else note(i, std::string("flip gave ") + e.what());
        }

        if (asymmetric(v)) {
            // certificates travel in messages 1 and 2, or 3 and 4 when deferred
            std::size_t at = (v == Variant::AuthAsymDeferred ? 2 : 0) + i % 2;
            std::size_t start = rig->transport.log().size();
            rig->transport.set_tap([&](std::size_t index, Frame& f) {
                if (index != start + at) return;
                SoapEnvelope e = parse_envelope(f.xml);
                detail::flip_cert(e, gen);
                f.xml = serialize_envelope(e);
            });
            try {
                call(*rig, v, account);
                note(i, "tampered certificate accepted");
            } catch (const ProtocolError& e) {
                if (e.kind() == ErrorKind::CertInvalid) ++rep.certs_rejected;
                else note(i, std::string("certificate tamper gave ") + e.what());
            }
        }
        rig->transport.set_tap(nullptr);
        rig->transport.clear_log();
    }
    return rep;
}

} // namespace wsec::soap::testing
