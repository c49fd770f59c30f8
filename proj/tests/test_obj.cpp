#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support/obj_gen.hpp"
#include "wsec/obj/eval.hpp"
#include "wsec/obj/printer.hpp"

#include <fstream>
#include <sstream>

using namespace wsec::obj;
using namespace wsec::testing;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const Program& banking() {
    static const Program p = parse_program(read_file(WSEC_SOURCE_DIR "/samples/banking.obc"));
    return p;
}

} // namespace

TEST_CASE("banking source parses into one service class and one service") {
    const auto& env = banking().env;
    const ClassDef* c = env.find_class("BankingServiceClass");
    REQUIRE(c);
    REQUIRE(c->fields.size() == 1);
    CHECK(c->fields[0].first == "CallerId");
    CHECK(c->fields[0].second == ObjType::id());
    CHECK(c->method("Balance")->level == wsec::SecurityLevel::Auth);
    REQUIRE(env.services.size() == 1);
    CHECK(env.find_service("w")->owner == "Bob");
    CHECK(env.find_service("w")->cls == "BankingServiceClass");
    CHECK(env.find_service("w")->url == "http://bob.com/BankingService");
    CHECK(env.principals == std::set<std::string>{"Alice", "Bob"});
}

TEST_CASE("empty class has no members") {
    Program p = parse_program("class Empty end");
    const ClassDef* c = p.env.find_class("Empty");
    REQUIRE(c);
    CHECK(c->fields.empty());
    CHECK(c->methods.empty());
}

TEST_CASE("parse errors") {
    CHECK_THROWS_AS(parse_program("principals Alice\nbody main = Alice[null]"), ParseError);
    CHECK_THROWS_AS(parse_program("class A end class A end"), ParseError);
    CHECK_THROWS_AS(parse_program("class A Id f Id f end"), ParseError);
    CHECK_THROWS_AS(parse_program("class A Id m() = null Id m() = null end"), ParseError);
    CHECK_THROWS_AS(parse_program("principals Bob class C Id CallerId end service w owner Carol class C"),
                    ParseError);
    CHECK_THROWS_AS(parse_program("principals Bob service w owner Bob class Missing"), ParseError);
    try {
        parse_program("class A\n  Id f\n  Id m( = null\nend");
        FAIL("expected a syntax error");
    } catch (const ParseError& e) {
        CHECK(e.pos.line == 3);
        CHECK(e.pos.col == 9);
    }
}

TEST_CASE("numeric literals denote the Num encoding") {
    BodyPtr b = parse_body("3", banking().env);
    REQUIRE(b->is_value());
    CHECK(value_eq(b->as<ValB>()->value, mk_num(3)));
    CHECK(as_num(mk_num(0)) == 0u);
    CHECK(as_num(mk_num(12345)) == 12345u);
    CHECK(!as_num(mk_null()));
}

TEST_CASE("substitute: fixed examples") {
    BodyPtr r = substitute(mk_val(mk_var("x")), "x", mk_prin("Alice"));
    CHECK(value_eq(r->as<ValB>()->value, mk_prin("Alice")));

    BodyPtr shadow = mk_let("x", mk_val(mk_null()), mk_val(mk_var("x")));
    CHECK(alpha_eq(substitute(shadow, "x", mk_prin("Alice")), shadow));

    // Replacement mentions the binder: the binder must be renamed.
    BodyPtr capture = mk_let("y", mk_val(mk_null()), mk_val(mk_new("Pair", {mk_var("x"), mk_var("y")})));
    BodyPtr out = substitute(capture, "x", mk_var("y"));
    LN expect = ln_subst(ln_of(capture), "x", LN{"free:y", {}});
    CHECK(ln_of(out).str() == expect.str());
    CHECK(out->as<LetB>()->var != "y");
}

TEST_CASE("substitute agrees with the locally nameless model") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 3000; ++i) {
        BodyPtr a = random_body(rng, 4);
        ValuePtr v = random_value(rng, 2); // may be open, exercising renaming
        std::string x = std::string(1, "xyz"[pick(rng, 3)]);
        BodyPtr got = substitute(a, x, v);
        std::vector<std::string> none;
        LN expect = ln_subst(ln_of(a), x, ln_value(v, none));
        REQUIRE_MESSAGE(ln_of(got).str() == expect.str(), print_body(a));
    }
}

TEST_CASE("alpha_eq: fixed examples") {
    CHECK(alpha_eq(mk_let("x", mk_val(mk_null()), mk_val(mk_var("x"))),
                   mk_let("y", mk_val(mk_null()), mk_val(mk_var("y")))));
    CHECK(!alpha_eq(mk_val(mk_var("x")), mk_val(mk_var("y"))));
    CHECK(!alpha_eq(mk_let("x", mk_val(mk_null()), mk_val(mk_var("y"))),
                    mk_let("y", mk_val(mk_null()), mk_val(mk_var("y")))));
}

TEST_CASE("alpha_eq agrees with locally nameless equality") {
    std::mt19937_64 rng(11);
    std::size_t agree_true = 0;
    for (int i = 0; i < 3000; ++i) {
        BodyPtr a = random_body(rng, 3);
        BodyPtr b;
        switch (pick(rng, 3)) {
        case 0: b = random_body(rng, 3); break;
        case 1: {
            std::size_t c = 0;
            b = rename_binders(a, c);
            break;
        }
        default: b = substitute(a, "z", mk_var("x")); break;
        }
        bool oracle = ln_of(a).str() == ln_of(b).str();
        REQUIRE(alpha_eq(a, b) == oracle);
        agree_true += oracle;
    }
    CHECK(agree_true > 500);
}

TEST_CASE("substitution commutes with alpha renaming") {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 2000; ++i) {
        BodyPtr a = random_body(rng, 4);
        std::size_t c = 0;
        BodyPtr a2 = rename_binders(a, c);
        ValuePtr v = random_value(rng, 2);
        REQUIRE(alpha_eq(substitute(a, "x", v), substitute(a2, "x", v)));
    }
}

TEST_CASE("parse . print . parse is the identity up to alpha") {
    std::mt19937_64 rng(17);
    ExecutionEnvironment env;
    env.principals = {"Alice", "Bob"};
    for (int i = 0; i < 2000; ++i) {
        BodyPtr a = random_body(rng, 4);
        std::string text = print_body(a);
        BodyPtr b = parse_body(text, env);
        REQUIRE_MESSAGE(alpha_eq(a, b), text);
        REQUIRE(alpha_eq(parse_body(print_body(b), env), b));
    }
    Program again = parse_program(print_program(banking()));
    for (const auto& [name, b] : banking().bodies) CHECK(alpha_eq(again.body(name), b));
    for (const auto& [name, c] : banking().env.classes)
        for (const auto& [m, d] : c.methods) CHECK(alpha_eq(again.env.find_class(name)->method(m)->body, d.body));
}

// ---- typing ----

TEST_CASE("type_of_value rules") {
    const auto& env = test_env();
    CHECK(type_of_value({}, mk_prin("Alice"), env).unique() == ObjType::id());
    CHECK(type_of_value({}, mk_new("Num", {mk_null()}), env).unique() == ObjType::of_class("Num"));
    try {
        type_of_value({}, mk_new("Num", {mk_prin("Alice")}), env);
        FAIL("expected a type error");
    } catch (const TypeError& e) {
        CHECK(e.rule == "Val Object");
    }
    CHECK(type_of_value({}, mk_null(), env).is_any_class());
    CHECK_THROWS_AS(type_of_value({}, mk_var("x"), env), TypeError);
}

TEST_CASE("type_of_body rules") {
    const auto& env = banking().env;
    const MethodDef* bal = env.find_class("BankingServiceClass")->method("Balance");
    TypeEnv E{{"this", ObjType::of_class("BankingServiceClass")}, {"account", ObjType::of_class("Num")}};
    CHECK(type_of_body(E, bal->body, env).unique() == ObjType::of_class("Num"));

    BodyPtr nulls = mk_if(mk_null(), mk_null(), mk_val(mk_null()), mk_val(mk_null()));
    CHECK(check_body({}, nulls, ObjType::of_class("BankingServiceClass"), env));
    CHECK(check_body({}, nulls, ObjType::of_class("Num"), env));
    CHECK(!check_body({}, nulls, ObjType::id(), env));

    try {
        type_of_body({}, mk_call("w", "Balance", {mk_prin("Alice")}), env);
        FAIL("expected a type error");
    } catch (const TypeError& e) {
        CHECK(e.rule == "Body Remote");
    }
    try {
        type_of_body({}, mk_if(mk_prin("Alice"), mk_null(), mk_val(mk_null()), mk_val(mk_null())), env);
        FAIL("expected a type error");
    } catch (const TypeError& e) {
        CHECK(e.rule == "Body If");
    }
    CHECK_THROWS_AS(type_of_body({{"x", ObjType::id()}, {"x", ObjType::id()}}, mk_val(mk_null()), env), TypeError);
}

TEST_CASE("validate_environment") {
    CHECK(validate_environment(banking().env).ok());
    Program extra = parse_program(R"(
principals Bob
class S
  Id CallerId
  Id Other
end
service w owner Bob class S)");
    auto r1 = validate_environment(extra.env);
    REQUIRE(r1.issues.size() == 1);
    CHECK(r1.issues[0].assumption == 1);

    Program missing = parse_program(R"(
class C
  Id f
  Id g() = this.missingField
end)");
    auto r3 = validate_environment(missing.env);
    REQUIRE(r3.issues.size() == 1);
    CHECK(r3.issues[0].assumption == 3);
    CHECK(r3.issues[0].rule == "Body Field");
    CHECK(r3.issues[0].method == "g");

    ExecutionEnvironment running = banking().env;
    auto& m = running.classes.at("Num").methods.at("succ");
    m.body = mk_running("Bob", m.body);
    auto r2 = validate_environment(running);
    REQUIRE(r2.issues.size() == 1);
    CHECK(r2.issues[0].assumption == 2);
    CHECK(validate_environment(test_env()).ok());
}

TEST_CASE("weakening, exchange and strengthening on generated judgments") {
    const auto& env = test_env();
    TypedGen gen(env, 23);
    for (int i = 0; i < 1500; ++i) {
        ObjType A = gen.random_type();
        BodyPtr top = gen.body(A, 4);
        REQUIRE(check_body({}, top, A, env));
        const auto* l = top->as<LetB>();
        if (!l) continue;
        Annotations ann = annotate({}, top, A, env);
        ObjType B = ann.let_type.at(top.get());
        TypeEnv E{{l->var, B}};
        REQUIRE(check_body(E, l->body, A, env));
        // weakening
        TypeEnv Ew = E;
        Ew.emplace_back("fresh_w", gen.random_type());
        CHECK(check_body(Ew, l->body, A, env));
        // exchange
        TypeEnv Ex{Ew[1], Ew[0]};
        CHECK(check_body(Ex, l->body, A, env));
        // strengthening
        if (!free_vars(l->body).count(l->var)) CHECK(check_body({}, l->body, A, env));
    }
}

TEST_CASE("substitution lemma on generated judgments") {
    const auto& env = test_env();
    TypedGen gen(env, 29);
    int checked = 0;
    for (int i = 0; i < 2000; ++i) {
        ObjType A = gen.random_type();
        BodyPtr top = gen.body(A, 4);
        const auto* l = top->as<LetB>();
        if (!l) continue;
        Annotations ann = annotate({}, top, A, env);
        ObjType B = ann.let_type.at(top.get());
        BodyPtr closed = gen.body(B, 0);
        ValuePtr v = closed->as<ValB>()->value;
        REQUIRE(type_of_value({}, v, env).contains(B));
        CHECK(check_body({}, substitute(l->body, l->var, v), A, env));
        ++checked;
    }
    CHECK(checked > 200);
}

// ---- evaluation ----

TEST_CASE("step: fixed examples") {
    const auto& env = banking().env;
    BodyPtr a = mk_val(mk_prin("Alice")), b = mk_val(mk_prin("Bob"));
    auto o = step(mk_if(mk_null(), mk_null(), a, b), "Alice", env);
    REQUIRE(std::holds_alternative<Stepped>(o));
    CHECK(std::get<Stepped>(o).next == a);

    auto call = step(mk_call("w", "Balance", {mk_num(12345)}), "Alice", env);
    REQUIRE(std::holds_alternative<Stepped>(call));
    BodyPtr expect = mk_running(
        "Bob", mk_invoke(mk_new("BankingServiceClass", {mk_prin("Alice")}), "Balance", {mk_num(12345)}));
    CHECK(alpha_eq(std::get<Stepped>(call).next, expect));

    CHECK(std::holds_alternative<NullBlocked>(step(mk_field(mk_null(), "f"), "Alice", env)));
    CHECK(std::holds_alternative<NullBlocked>(
        step(mk_running("Bob", mk_let("x", mk_invoke(mk_null(), "m", {}), a)), "Alice", env)));
    CHECK(std::holds_alternative<Stuck>(step(mk_field(mk_prin("Alice"), "f"), "Alice", env)));

    // Red Prin 2 ignores the outer principal.
    auto back = step(mk_running("Bob", mk_val(mk_num(1))), "Alice", env);
    REQUIRE(std::holds_alternative<Stepped>(back));
    CHECK(value_eq(std::get<Stepped>(back).next->as<ValB>()->value, mk_num(1)));
}

TEST_CASE("eval: banking call yields 100") {
    auto r = eval(banking().body("main"), "Alice", banking().env, 100000);
    REQUIRE(r.status == EvalStatus::Value);
    CHECK(value_eq(r.value, mk_num(100)));
    auto bob = eval(banking().body("main"), "Bob", banking().env, 100000);
    REQUIRE(bob.status == EvalStatus::Value);
    CHECK(bob.value->is_null());
}

TEST_CASE("eval: one.add(two) is three") {
    const auto& env = banking().env;
    auto r = eval(mk_invoke(mk_num(1), "add", {mk_num(2)}), "Alice", env, 1000, {8, {}});
    REQUIRE(r.status == EvalStatus::Value);
    CHECK(value_eq(r.value, mk_num(3)));
    CHECK(r.trace.size() == 8);
    auto local = eval(banking().body("local"), "Alice", env, 1000);
    CHECK(value_eq(local.value, mk_num(3)));
}

TEST_CASE("eval: zero fuel on a value and exhaustion") {
    const auto& env = banking().env;
    auto r = eval(mk_val(mk_num(4)), "Alice", env, 0);
    CHECK(r.status == EvalStatus::Value);
    auto ex = eval(mk_invoke(mk_num(1), "add", {mk_num(2)}), "Alice", env, 2);
    CHECK(ex.status == EvalStatus::FuelExhausted);
    CHECK(ex.steps == 2);
}

TEST_CASE("json dump") {
    auto j = to_json(mk_call("w", "Balance", {mk_num(12345)}));
    CHECK(j["kind"] == "call");
    CHECK(j["args"][0]["kind"] == "num");
    CHECK(j["args"][0]["value"] == 12345);
    auto n = to_json(mk_new("Pair", {mk_null(), mk_var("x")}));
    CHECK(n.dump() == R"({"args":[{"kind":"null"},{"kind":"var","name":"x"}],"class":"Pair","kind":"new"})");
}
