#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support/obj_gen.hpp"
#include "wsec/obj/eval.hpp"
#include "wsec/obj/parser.hpp"
#include "wsec/obj/printer.hpp"
#include "wsec/spi/parser.hpp"
#include "wsec/spi/printer.hpp"
#include "wsec/translate/translator.hpp"

#include <fstream>
#include <sstream>

using namespace wsec;
using namespace wsec::translate;
using spi::MsgPtr;
using spi::ProcKind;
using spi::ProcPtr;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const obj::Program& banking() {
    static const obj::Program prog = obj::parse_program(read_file(WSEC_SOURCE_DIR "/samples/banking.obc"));
    return prog;
}

MsgPtr msg(const char* text) { return spi::parse_message(text); }

// Every subprocess, with the kinds of the prefixes above it.
void walk(const ProcPtr& p, std::vector<const spi::Process*>& above,
          const std::function<void(const ProcPtr&, const std::vector<const spi::Process*>&)>& f) {
    f(p, above);
    above.push_back(p.get());
    for (const auto& k : p->kids) walk(k, above, f);
    above.pop_back();
}

void walk(const ProcPtr& p, const std::function<void(const ProcPtr&, const std::vector<const spi::Process*>&)>& f) {
    std::vector<const spi::Process*> above;
    walk(p, above, f);
}

bool has_above(const std::vector<const spi::Process*>& above, ProcKind k, const char* tag = nullptr) {
    for (const auto* q : above)
        if (q->kind == k && (!tag || (q->msgs[0]->kind == spi::MsgKind::Tagged && q->msgs[0]->tag == spi::Symbol(tag))))
            return true;
    return false;
}

struct Outcome {
    std::vector<MsgPtr> delivered; // one per terminal configuration that delivered
    std::size_t terminals = 0;
    bool exhaustive = false;
    bool safe = true;
};

Outcome explore(const System& sys, std::size_t max_states = 200000) {
    spi::ExploreOptions o;
    o.keep_terminals = true;
    o.max_states = max_states;
    auto ex = spi::explore_all(sys.configuration(), o);
    Outcome out;
    out.exhaustive = ex.exhaustive;
    out.safe = !ex.violation;
    out.terminals = ex.terminals.size();
    for (const auto& c : ex.terminals)
        for (const auto& m : delivered_on(c, sys.result)) out.delivered.push_back(m);
    return out;
}

} // namespace

TEST_CASE("types: identifiers are untrusted, classes are nullable unions") {
    CHECK(spi::type_eq(translate_type(obj::ObjType::id()), spi::t_un()));
    CHECK(spi::type_eq(translate_type(obj::ObjType::of_class("Num")), spi::parse_type("Union(null(Un), Num(Un))")));
}

TEST_CASE("values: null, numerals, objects and principals") {
    CHECK(spi::msg_eq(translate_value(obj::mk_null()), msg("null()")));
    CHECK(spi::msg_eq(translate_value(obj::mk_num(0)), msg("Num(null())")));
    CHECK(spi::msg_eq(translate_value(obj::mk_num(2)), msg("Num(Num(Num(null())))")));
    CHECK(spi::msg_eq(translate_value(obj::mk_num(12345)), spi::m_numeral(12345)));
    CHECK(spi::msg_eq(translate_value(obj::mk_prin("Alice")), spi::m_name("Alice")));
    CHECK(spi::msg_eq(translate_value(obj::mk_new("Pair", {obj::mk_num(0), obj::mk_null()})),
                      msg("Pair(Num(null()), null())")));
    CHECK(spi::msg_eq(translate_value(obj::mk_var("x")), spi::m_name("x")));
}

TEST_CASE("names of channels and keys") {
    CHECK(channel_name("Num", "succ") == spi::source_name("Num_succ"));
    CHECK(key_name("Alice", "Bob") == spi::source_name("K_Alice_Bob"));
    CHECK_FALSE(key_name("Alice", "Bob") == key_name("Bob", "Alice"));
}

TEST_CASE("mutation names round-trip") {
    for (Mutation m : {Mutation::None, Mutation::DropNonceCheck, Mutation::ReuseSessionTag, Mutation::SwapKeys})
        CHECK(parse_mutation(to_string(m)) == m);
    CHECK_FALSE(parse_mutation("bogus").has_value());
}

TEST_CASE("a value body outputs the value on k") {
    Translator tr(banking().env);
    ProcPtr p = tr.body(obj::mk_val(obj::mk_null()), {}, obj::ObjType::of_class("Num"), "Alice", spi::m_name("k"));
    CHECK(spi::alpha_eq(p, spi::parse_process("out k null()")));
}

TEST_CASE("a field of null deadlocks") {
    const auto& env = banking().env;
    System sys = build_system(obj::parse_body("null.pred", env), "Alice", env);
    Outcome o = explore(sys);
    CHECK(o.exhaustive);
    CHECK(o.delivered.empty());
}

TEST_CASE("class implementation: a replicated input split into principal, self, arguments and k") {
    Translator tr(banking().env);
    ProcPtr succ = tr.class_impl("Num", "succ");
    REQUIRE(succ->kind == ProcKind::RepIn);
    CHECK(succ->msgs[0]->name == spi::source_name("Num_succ"));
    const ProcPtr& body = succ->kids[0];
    REQUIRE(body->kind == ProcKind::Split);
    CHECK(body->binders.size() == 3); // p, this, k

    ProcPtr balance = tr.class_impl("BankingServiceClass", "Balance");
    REQUIRE(balance->kids[0]->kind == ProcKind::Split);
    CHECK(balance->kids[0]->binders.size() == 4); // p, this, account, k
    // the account comparison against the literal 12345
    bool compares = false;
    walk(balance, [&](const ProcPtr& q, const auto&) {
        if (q->kind == ProcKind::IfEq && spi::as_numeral(q->msgs[1]) == 12345u) compares = true;
    });
    CHECK(compares);
    CHECK_THROWS_AS(tr.class_impl("Num", "nope"), TranslateError);
    CHECK_THROWS_AS(tr.class_impl("Nope", "succ"), TranslateError);
}

TEST_CASE("service: issues a fresh nonce and dispatches to the class on behalf of the caller") {
    Translator tr(banking().env);
    ProcPtr svc = tr.service_impl("w");
    REQUIRE(svc->kind == ProcKind::RepIn);
    bool nonce_reply = false, dispatch = false, checks = false, bob_branch_key = false;
    walk(svc, [&](const ProcPtr& q, const auto& above) {
        if (q->kind == ProcKind::Out && q->msgs[1]->kind == spi::MsgKind::Tagged && q->msgs[1]->tag == spi::Symbol("res") &&
            q->msgs[1]->kids[0]->kind == spi::MsgKind::Tagged && q->msgs[1]->kids[0]->tag == spi::Symbol("getnonce"))
            nonce_reply = true;
        if (q->kind == ProcKind::Out && q->msgs[0]->kind == spi::MsgKind::Name &&
            q->msgs[0]->name == spi::source_name("BankingServiceClass_Balance"))
            dispatch = true;
        if (q->kind == ProcKind::CheckNonce) checks = true;
        if (q->kind == ProcKind::SymDec && q->msgs[1]->name == spi::source_name("K_Bob_Bob")) bob_branch_key = true;
        if (q->kind == ProcKind::End) CHECK(has_above(above, ProcKind::CheckNonce));
    });
    CHECK(nonce_reply);
    CHECK(dispatch);
    CHECK(checks);
    CHECK(bob_branch_key);
    CHECK_THROWS_AS(tr.service_impl("nope"), TranslateError);
}

TEST_CASE("client: begin before any request leaves, end only after the nonce check") {
    const auto& prog = banking();
    Translator tr(prog.env);
    ProcPtr p = tr.body(prog.body("main"), {}, obj::ObjType::of_class("Num"), "Alice", spi::m_name("k"));
    bool begins = false;
    walk(p, [&](const ProcPtr& q, const auto& above) {
        if (q->kind == ProcKind::Begin) {
            begins = true;
            CHECK(spi::msg_eq(q->msgs[0]->kids[0]->kids[3], spi::parse_message("Balance(12345)")));
            CHECK(q->msgs[0]->kids[0]->kids[0]->name == spi::source_name("Alice"));
            CHECK(q->msgs[0]->kids[0]->kids[1]->name == spi::source_name("Bob"));
        }
        if (q->kind == ProcKind::Out && q->msgs[0]->kind == spi::MsgKind::Name && q->msgs[0]->name == spi::source_name("w"))
            CHECK(has_above(above, ProcKind::Begin, "req"));
        if (q->kind == ProcKind::End) CHECK(has_above(above, ProcKind::CheckNonce));
    });
    CHECK(begins);
}

TEST_CASE("Sys for a null body delivers null and has no events") {
    const auto& env = banking().env;
    System sys = build_system(obj::parse_body("null", env), "Alice", env);
    Outcome o = explore(sys);
    CHECK(o.exhaustive);
    REQUIRE(o.delivered.size() == 1);
    CHECK(spi::msg_eq(o.delivered[0], msg("null()")));
}

TEST_CASE("banking: one call returns 100 on every run and every trace is safe") {
    const auto& prog = banking();
    System sys = build_system(prog.body("main"), "Alice", prog.env);
    Outcome o = explore(sys);
    CHECK(o.exhaustive);
    CHECK(o.safe);
    REQUIRE_FALSE(o.delivered.empty());
    for (const auto& m : o.delivered) CHECK(spi::msg_eq(m, spi::m_numeral(100)));
}

TEST_CASE("banking: two calls use distinct session tags") {
    const auto& prog = banking();
    System sys = build_system(prog.body("twice"), "Alice", prog.env);
    spi::ExploreOptions opts;
    opts.keep_terminals = true;
    auto ex = spi::explore_all(sys.configuration(), opts);
    CHECK(ex.exhaustive);
    CHECK_FALSE(ex.violation);
    bool saw_two = false;
    for (const auto& t : ex.traces) {
        std::vector<MsgPtr> tags;
        for (const auto& e : t)
            if (e.kind == spi::Event::Kind::Begin && e.label->tag == spi::Symbol("req")) tags.push_back(e.label->kids[0]->kids[4]);
        if (tags.size() == 2) {
            saw_two = true;
            CHECK_FALSE(spi::msg_eq(tags[0], tags[1]));
        }
    }
    CHECK(saw_two);
    for (const auto& c : ex.terminals)
        for (const auto& m : delivered_on(c, sys.result)) CHECK(spi::msg_eq(m, msg("null()")));
}

TEST_CASE("banking: a reused session shares the tag across calls") {
    const auto& prog = banking();
    System sys = build_system(prog.body("twice"), "Alice", prog.env, {Mutation::ReuseSessionTag});
    auto ex = spi::explore_all(sys.configuration());
    bool shared = false;
    for (const auto& t : ex.traces) {
        std::vector<MsgPtr> tags;
        for (const auto& e : t)
            if (e.kind == spi::Event::Kind::Begin && e.label->tag == spi::Symbol("req")) tags.push_back(e.label->kids[0]->kids[4]);
        if (tags.size() == 2 && spi::msg_eq(tags[0], tags[1])) shared = true;
    }
    CHECK(shared);
}

TEST_CASE("banking: swapped keys make the service deaf to Alice") {
    const auto& prog = banking();
    System sys = build_system(prog.body("main"), "Alice", prog.env, {Mutation::SwapKeys});
    Outcome o = explore(sys);
    CHECK(o.exhaustive);
    CHECK(o.delivered.empty());
}

TEST_CASE("local arithmetic needs no service") {
    const auto& prog = banking();
    System sys = build_system(prog.body("local"), "Alice", prog.env);
    Outcome o = explore(sys);
    CHECK(o.exhaustive);
    REQUIRE_FALSE(o.delivered.empty());
    for (const auto& m : o.delivered) CHECK(spi::msg_eq(m, spi::m_numeral(3)));
}

TEST_CASE("a caller that is not a principal is rejected") {
    const auto& prog = banking();
    CHECK_THROWS_AS(build_system(prog.body("main"), "Mallory", prog.env), TranslateError);
    CHECK_THROWS_AS(build_system(obj::mk_val(obj::mk_var("free")), "Alice", prog.env), TranslateError);
}

TEST_CASE("variables that clash with reserved names are renamed") {
    const auto& env = banking().env;
    System sys = build_system(obj::parse_body("let result = 3 in let w = result in w", env), "Alice", env);
    Outcome o = explore(sys);
    REQUIRE_FALSE(o.delivered.empty());
    for (const auto& m : o.delivered) CHECK(spi::msg_eq(m, spi::m_numeral(3)));
}

TEST_CASE("adequacy on generated call-free bodies") {
    const auto& env = wsec::testing::test_env();
    std::size_t values = 0, blocked = 0;
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        wsec::testing::TypedGen gen(env, seed, false);
        obj::ObjType T = gen.random_type();
        obj::BodyPtr b = gen.body(T, 4);
        INFO("seed " << seed << ": " << obj::print_body(b));
        auto r = obj::eval(b, "Alice", env, 10000);
        REQUIRE(r.status != obj::EvalStatus::Stuck);
        if (r.status == obj::EvalStatus::FuelExhausted) continue;
        System sys = build_system(b, "Alice", env);
        Outcome o = explore(sys);
        REQUIRE(o.exhaustive);
        if (r.status == obj::EvalStatus::Value) {
            ++values;
            REQUIRE(o.delivered.size() == o.terminals);
            for (const auto& m : o.delivered) CHECK(spi::msg_eq(m, translate_value(r.value)));
        } else {
            ++blocked;
            CHECK(o.delivered.empty());
        }
    }
    CHECK(values > 100);
    CHECK(blocked > 0);
}
