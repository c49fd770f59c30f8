#pragma once

// Translation of typed object-calculus programs into spi processes with
// embedded begin/end assertions.
//
// Naming of the top-level spi names:
//   method channel   Class_method
//   shared key       K_client_server   (K_Alice_Bob differs from K_Bob_Alice)
//   service          the service name
//   principal        the principal name
//
// Tuples of one element are the element itself, so `new Num(v)` becomes the
// tagged message Num(v) and a one-argument call l(u) becomes l(u).
// Plaintexts under the shared keys are right-nested pairs
// req(w, (a, (t, nq))) so the receiver can peel them with match and split.

#include "wsec/obj/ast.hpp"
#include "wsec/obj/types.hpp"
#include "wsec/spi/ast.hpp"
#include "wsec/spi/runtime.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wsec::translate {

class TranslateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Deliberate weakenings used to check that attack campaigns can tell.
enum class Mutation {
    None,
    DropNonceCheck,  // the service skips its check on the request nonce
    ReuseSessionTag, // the client uses one session tag and one response nonce for all its calls
    SwapKeys,        // the service decrypts requests from p under K_qp instead of K_pq
};

std::string_view to_string(Mutation m);
std::optional<Mutation> parse_mutation(std::string_view s);

struct TranslateOptions {
    Mutation mutation = Mutation::None;
};

spi::Name channel_name(const std::string& cls, const std::string& method);
spi::Name key_name(const std::string& client, const std::string& server);

spi::TypePtr translate_type(const obj::ObjType& A);
// Free variables become spi names of the same identifier.
spi::MsgPtr translate_value(const obj::ValuePtr& v);

class Translator {
public:
    explicit Translator(const obj::ExecutionEnvironment& env, TranslateOptions opts = {});

    // Body run by a fixed principal, delivering its value on k.  E types the
    // free variables, which keep their identifiers as spi names.
    spi::ProcPtr body(const obj::BodyPtr& a, const obj::TypeEnv& E, const obj::ObjType& A, const std::string& principal,
                      const spi::MsgPtr& k) const;

    spi::ProcPtr class_impl(const std::string& cls, const std::string& method) const;
    spi::ProcPtr service_impl(const std::string& service) const;
    spi::ProcPtr all_classes() const;
    spi::ProcPtr all_services() const;

    spi::TypePtr cs_key(const std::string& client, const std::string& server) const;
    spi::TypePtr request_type(const std::string& service) const;
    spi::TypePtr response_type(const std::string& service) const;

    const obj::ExecutionEnvironment& env() const { return env_; }

private:
    struct Ctx;
    spi::ProcPtr tr(const obj::BodyPtr& a, Ctx& cx, const spi::MsgPtr& k) const;
    spi::MsgPtr tv(const obj::ValuePtr& v, const Ctx& cx) const;
    spi::ProcPtr call(const obj::CallB& c, const Ctx& cx, const spi::MsgPtr& k) const;
    spi::ProcPtr client_protocol(const obj::CallB& c, const Ctx& cx, const std::string& client, const spi::MsgPtr& k) const;
    spi::ProcPtr let_call(const obj::ServiceDef& w, const spi::MsgPtr& client, const spi::MsgPtr& args,
                          const spi::Binder& r, spi::ProcPtr then) const;
    spi::Name var_name(const std::string& x) const;

    const obj::ExecutionEnvironment& env_;
    TranslateOptions opts_;
    std::vector<std::string> reserved_;
};

// The closed system: restricted method channels and keys, every class and
// service implementation, and the body run by `principal` delivering on
// `result`.
struct System {
    spi::ProcPtr process;
    spi::Name result;
    std::vector<spi::Name> publics; // services and principals
    obj::ObjType result_type;

    spi::Configuration configuration() const { return spi::Configuration::of(process); }
};

System build_system(const obj::BodyPtr& b, const std::string& principal, const obj::ExecutionEnvironment& env,
                    const TranslateOptions& opts = {});

// Messages delivered on `chan` by outputs left in a configuration.
std::vector<spi::MsgPtr> delivered_on(const spi::Configuration& c, const spi::Name& chan);

} // namespace wsec::translate
