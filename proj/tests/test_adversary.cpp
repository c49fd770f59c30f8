#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "wsec/adversary/adversary.hpp"
#include "wsec/obj/parser.hpp"
#include "wsec/spi/parser.hpp"
#include "wsec/spi/printer.hpp"
#include "wsec/translate/translator.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

using namespace wsec;
using namespace wsec::spi;
using namespace wsec::adversary;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

SpiFile naive_file() { return parse_spi_file(read_file(WSEC_SOURCE_DIR "/samples/naive.spi")); }

Surface naive_surface() {
    SpiFile f = naive_file();
    return surface_of(f.process, {source_name("n")}, {source_name("Alice"), source_name("Bob")});
}

const obj::Program& banking() {
    static const obj::Program prog = obj::parse_program(read_file(WSEC_SOURCE_DIR "/samples/banking.obc"));
    return prog;
}

struct Built {
    translate::System sys;
    Surface surface;
};

Built banking_system(const std::string& body, translate::Mutation m = translate::Mutation::None) {
    const auto& prog = banking();
    Built b{translate::build_system(prog.body(body), "Alice", prog.env, {m}), {}};
    std::vector<Name> principals;
    for (const auto& p : prog.env.principals) principals.push_back(source_name(p));
    b.surface = surface_of(b.sys.process, b.sys.publics, principals);
    return b;
}

std::vector<std::uint64_t> seeds(std::uint64_t from, std::uint64_t to) {
    std::vector<std::uint64_t> s(to - from);
    std::iota(s.begin(), s.end(), from);
    return s;
}

std::size_t count_events(const EventTrace& t, Event::Kind k, const MsgPtr& label) {
    std::size_t n = 0;
    for (const auto& e : t)
        if (e.kind == k && msg_eq(e.label, label)) ++n;
    return n;
}

bool only_surface_names(const ProcPtr& p, const Surface& s) {
    for (const auto& n : free_names(p)) {
        bool ok = std::find(s.channels.begin(), s.channels.end(), n) != s.channels.end() ||
                  std::find(s.principals.begin(), s.principals.end(), n) != s.principals.end();
        if (!ok) return false;
    }
    return true;
}

} // namespace

TEST_CASE("knowledge: projection, untagging and decryption once the key is learned") {
    KnowledgeBase kb;
    MsgPtr secret = parse_message("sec(M)");
    kb.learn(parse_message("(a, {sec(M)}K)"));
    CHECK(kb.knows(m_name("a")));
    CHECK_FALSE(kb.knows(secret));
    CHECK_FALSE(kb.derivable(m_name("K")));
    kb.learn(m_name("K"));
    CHECK(kb.knows(secret));
    CHECK(kb.knows(m_name("M")));
    CHECK(kb.derivable(parse_message("(M, {a}K, tag(a))")));
    CHECK_FALSE(kb.derivable(parse_message("(M, N)")));
}

TEST_CASE("knowledge: asymmetric decryption needs the decryption part") {
    KnowledgeBase kb;
    kb.learn(parse_message("{|hi|}Encrypt(KP)"));
    CHECK_FALSE(kb.knows(m_name("hi")));
    kb.learn(parse_message("Decrypt(KP)"));
    CHECK(kb.knows(m_name("hi")));
    // the pair itself follows from either part
    CHECK(kb.knows(m_name("KP")));
}

TEST_CASE("knowledge: synthesis depth and size bounds") {
    KnowledgeBase kb(KnowledgeLimits{2, 10000});
    kb.learn(m_name("a"));
    CHECK(kb.derivable(parse_message("(a, a)")));
    CHECK(kb.derivable(parse_message("((a, a), a)")));
    CHECK_FALSE(kb.derivable(parse_message("(((a, a), a), a)")));

    KnowledgeBase small(KnowledgeLimits{6, 5});
    small.learn(parse_message("(a, b, c, d, e, f, g)"));
    CHECK(small.truncated());
    CHECK(small.items().size() == 5);
}

TEST_CASE("attack plans compile to opponents") {
    Surface s = naive_surface();
    AttackPlan plan;
    Name x = renamed(source_name("x")), y = renamed(source_name("y")), z = renamed(source_name("z"));
    plan.actions.push_back({AttackAction::Kind::Listen, m_name("n"), nullptr, nullptr, {x}, false, nullptr});
    plan.actions.push_back({AttackAction::Kind::Send, m_name("n"), m_name(x), nullptr, {}, false, nullptr});
    plan.actions.push_back({AttackAction::Kind::Split, nullptr, m_name(x), nullptr, {y, z}, false, nullptr});
    ProcPtr p = plan.compile();
    CHECK(is_opponent(p));
    CHECK(p->kind == ProcKind::In);
    CHECK(count_kind(p, ProcKind::Out) == 1);
    CHECK(count_kind(p, ProcKind::Split) == 1);
}

TEST_CASE("canned opponents are opponents over the surface") {
    Surface s = naive_surface();
    auto all = canned_opponents(s);
    CHECK(all.size() == canned_names().size());
    for (const auto& name : {"replay", "drop", "reflect", "reroute", "impersonate", "nonce-reuse"})
        CHECK(canned_opponent(name, s).has_value());
    CHECK_FALSE(canned_opponent("nonsense", s).has_value());
    for (const auto& o : all) {
        INFO(o.name);
        CHECK(is_opponent(o.process));
        CHECK(only_surface_names(o.process, s));
    }
    // the replay opponent is the plain duplicator on each channel
    CHECK(alpha_eq(canned_opponent("replay", s)->process, parse_process("in n(x); out n x; out n x")));
}

TEST_CASE("random opponents: budget 0 is stop, otherwise untyped over the surface") {
    Surface s = banking_system("main").surface;
    CHECK(random_opponent(7, 0, s)->kind == ProcKind::Stop);
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        ProcPtr p = random_opponent(seed, 12, s);
        INFO(seed);
        REQUIRE(is_opponent(p));
        REQUIRE(only_surface_names(p, s));
    }
}

TEST_CASE("random opponents are a function of the seed") {
    Surface s = banking_system("main").surface;
    for (std::uint64_t seed = 0; seed < 200; ++seed) CHECK(alpha_eq(random_opponent(seed, 12, s), random_opponent(seed, 12, s)));
}

TEST_CASE("nonce-free system: the replay opponent finds the duplicated end") {
    Configuration sys = Configuration::of(naive_file().process);
    auto replay_opp = *canned_opponent("replay", naive_surface());
    CampaignReport rep = robust_safety_campaign(sys, {replay_opp}, seeds(0, 50));
    REQUIRE(rep.violations >= 1);
    const Counterexample& cx = rep.counterexamples.front();
    MsgPtr label = parse_message("sending(Alice, Bob, M)");
    CHECK(count_events(cx.prefix, Event::Kind::End, label) == 2);
    CHECK(count_events(cx.prefix, Event::Kind::Begin, label) == 1);
    CHECK_FALSE(cx.verdict.safe);
    CHECK(cx.prefix.size() == cx.verdict.index + 1);
}

TEST_CASE("nonce-free system against the canned set") {
    Configuration sys = Configuration::of(naive_file().process);
    CampaignReport rep = robust_safety_campaign(sys, canned_opponents(naive_surface()), seeds(0, 20));
    CHECK(rep.cells == canned_names().size() * 20);
    CHECK(rep.violations >= 1);
    CHECK_FALSE(rep.clean());
}

TEST_CASE("the drop opponent never causes a violation") {
    Configuration sys = Configuration::of(naive_file().process);
    CampaignReport rep = robust_safety_campaign(sys, {*canned_opponent("drop", naive_surface())}, seeds(0, 100));
    CHECK(rep.clean());
}

TEST_CASE("empty opponent set is vacuously clean") {
    Configuration sys = Configuration::of(naive_file().process);
    CampaignReport rep = robust_safety_campaign(sys, {}, seeds(0, 10));
    CHECK(rep.cells == 0);
    CHECK(rep.clean());
}

TEST_CASE("banking system against the canned set") {
    for (const char* body : {"main", "twice"}) {
        Built b = banking_system(body);
        CampaignOptions opts;
        opts.jobs = 4;
        CampaignReport rep = robust_safety_campaign(b.sys.configuration(), canned_opponents(b.surface), seeds(0, 100), opts);
        INFO(body << ": " << rep.str());
        CHECK(rep.clean());
        CHECK(rep.cells == canned_names().size() * 100);
    }
}

TEST_CASE("banking system against random opponents") {
    Built b = banking_system("main");
    CampaignOptions opts;
    opts.jobs = 4;
    CampaignReport rep = random_campaign(b.sys.configuration(), b.surface, seeds(0, 1000), 12, opts);
    INFO(rep.str());
    CHECK(rep.clean());
}

TEST_CASE("mutation: dropped nonce check is caught by request replay") {
    Built b = banking_system("main", translate::Mutation::DropNonceCheck);
    CampaignReport rep = robust_safety_campaign(b.sys.configuration(), {*canned_opponent("request-replay", b.surface)},
                                                seeds(0, 100));
    REQUIRE(rep.violations >= 1);
    const Counterexample& cx = rep.counterexamples.front();
    CHECK(cx.verdict.label->tag == Symbol("req"));
    CHECK(cx.verdict.prior_begins == 1);
}

TEST_CASE("mutation: dropped nonce check is caught by a random opponent") {
    Built b = banking_system("main", translate::Mutation::DropNonceCheck);
    CampaignOptions opts;
    opts.jobs = 4;
    opts.stop_at_first = true;
    CampaignReport rep = random_campaign(b.sys.configuration(), b.surface, seeds(0, 10000), 12, opts);
    CHECK(rep.violations >= 1);
}

TEST_CASE("mutation: a reused session tag is caught on two calls") {
    Built b = banking_system("twice", translate::Mutation::ReuseSessionTag);
    CampaignOptions opts;
    opts.jobs = 4;
    CampaignReport rep = robust_safety_campaign(b.sys.configuration(), canned_opponents(b.surface), seeds(0, 200), opts);
    REQUIRE(rep.violations >= 1);
    CHECK(rep.counterexamples.front().verdict.label->tag == Symbol("res"));
}

TEST_CASE("violations replay to the identical trace") {
    Built b = banking_system("twice", translate::Mutation::DropNonceCheck);
    CampaignOptions opts;
    opts.shrink = true;
    CampaignReport rep = robust_safety_campaign(b.sys.configuration(), canned_opponents(b.surface), seeds(0, 40), opts);
    REQUIRE_FALSE(rep.counterexamples.empty());
    for (const auto& cx : rep.counterexamples) {
        RunResult again = replay(b.sys.configuration(), cx.opponent_process, cx.seed, opts.fuel);
        CHECK(trace_eq(again.trace, cx.trace));
        CHECK_FALSE(check_safety(again.trace).safe);
        CHECK(is_opponent(cx.opponent_process));
    }
}

TEST_CASE("shrinking never grows the opponent") {
    Built b = banking_system("main", translate::Mutation::DropNonceCheck);
    auto opp = *canned_opponent("request-replay", b.surface);
    CampaignOptions plain, shrunk;
    plain.shrink = false;
    auto r1 = robust_safety_campaign(b.sys.configuration(), {opp}, seeds(0, 100), plain);
    auto r2 = robust_safety_campaign(b.sys.configuration(), {opp}, seeds(0, 100), shrunk);
    REQUIRE(r1.violations == r2.violations);
    REQUIRE(!r1.counterexamples.empty());
    for (std::size_t i = 0; i < r1.counterexamples.size(); ++i) {
        CHECK(r2.counterexamples[i].opponent_process->size <= r1.counterexamples[i].opponent_process->size);
        CHECK(r2.counterexamples[i].seed == r1.counterexamples[i].seed);
    }
    CHECK(r2.counterexamples.front().opponent_process->size < opp.process->size);
}

TEST_CASE("reports do not depend on the number of workers") {
    Built b = banking_system("main", translate::Mutation::DropNonceCheck);
    auto opps = canned_opponents(b.surface);
    CampaignOptions one, four;
    four.jobs = 4;
    auto r1 = robust_safety_campaign(b.sys.configuration(), opps, seeds(0, 30), one);
    auto r4 = robust_safety_campaign(b.sys.configuration(), opps, seeds(0, 30), four);
    CHECK(r1.to_json() == r4.to_json());
}

TEST_CASE("session keys stay secret from what crosses the wire") {
    Built b = banking_system("twice");
    auto opps = canned_opponents(b.surface);
    for (std::uint64_t seed = 0; seed < 50; ++seed)
        for (const auto& o : opps) {
            Configuration c = b.sys.configuration();
            c.record_wire = true;
            c.add(o.process);
            RunResult r = run(std::move(c), seed, 10000);
            REQUIRE_FALSE(r.final.wire.empty());
            KnowledgeBase kb;
            for (const auto& n : b.sys.publics) kb.learn(m_name(n));
            for (const auto& w : r.final.wire) kb.learn(w.payload);
            for (const auto& m : kb.items()) {
                bool plaintext = m->kind == MsgKind::Tagged && (m->tag == Symbol("req") || m->tag == Symbol("res")) &&
                                 m->kids[0]->kind == MsgKind::Record;
                INFO(o.name << " seed " << seed << ": " << print_message(m));
                REQUIRE_FALSE(plaintext);
            }
        }
}

TEST_CASE("report rendering") {
    Configuration sys = Configuration::of(naive_file().process);
    auto rep = robust_safety_campaign(sys, {*canned_opponent("replay", naive_surface())}, seeds(0, 5));
    auto j = rep.to_json();
    CHECK(j["runs"] == 5);
    CHECK(j["violations"].get<std::size_t>() == rep.violations);
    std::string text = rep.str();
    CHECK(text.find("5 runs") != std::string::npos);
    if (!rep.clean()) CHECK(text.find("end sending(Alice, Bob, M)") != std::string::npos);
}
