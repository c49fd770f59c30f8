// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.  `acceptance 3 5` runs only criteria 3 and 5.

#include "support/obj_gen.hpp"
#include "support/soap_battery.hpp"
#include "support/soap_gen.hpp"
#include "wsec/adversary/adversary.hpp"
#include "wsec/obj/eval.hpp"
#include "wsec/obj/printer.hpp"
#include "wsec/spi/parser.hpp"
#include "wsec/translate/translator.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <thread>
#include <vector>

using namespace wsec;

namespace {

// wall-clock limits, in seconds
constexpr double kBankingLimit = 1.0;
constexpr double kSoundnessLimit = 120.0;
constexpr double kExplorationLimit = 5.0;
constexpr double kCampaignLimit = 600.0;
constexpr double kAdequacyLimit = 120.0;
constexpr double kBatteryLimit = 120.0;

constexpr std::size_t kSoundnessBodies = 10000;
constexpr int kSoundnessDepth = 6;
constexpr std::uint64_t kSoundnessFuel = 10000;
constexpr std::size_t kReplayStateBudget = 200;
constexpr std::size_t kRandomOpponents = 1000;
constexpr std::size_t kOpponentBudget = 12;
constexpr std::size_t kCannedSeeds = 100;
constexpr std::size_t kAdequacyBodies = 1000;
constexpr int kAdequacyDepth = 4;
constexpr std::size_t kRoundTrips = 1000;
constexpr std::size_t kBatteryTrials = 1000;

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string read_file(const std::string& path) { return soap::testing::read_text(path); }

const obj::Program& banking() {
    static const obj::Program prog = obj::parse_program(read_file(WSEC_SOURCE_DIR "/samples/banking.obc"));
    return prog;
}

std::vector<std::uint64_t> seeds(std::uint64_t from, std::uint64_t to) {
    std::vector<std::uint64_t> s(to - from);
    std::iota(s.begin(), s.end(), from);
    return s;
}

unsigned jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---- 1 ----

Outcome banking_golden() {
    auto r = obj::eval(banking().body("main"), "Alice", banking().env, 1'000'000);
    if (r.status != obj::EvalStatus::Value) return {false, std::string("status ") + std::string(obj::to_string(r.status))};
    bool ok = obj::value_eq(r.value, obj::mk_num(100));
    return {ok, "w:Balance(12345) as Alice = " + obj::print_value(r.value) + " in " + std::to_string(r.steps) + " steps"};
}

// ---- 2 and 3 share the runs ----

struct SoundnessRuns {
    std::size_t values = 0, blocked = 0, exhausted = 0, stuck = 0;
    std::size_t steps_checked = 0, preservation_failures = 0;
    std::string first_stuck, first_unpreserved;
};

const SoundnessRuns& soundness_runs() {
    static const SoundnessRuns runs = [] {
        SoundnessRuns out;
        const auto& env = testing::test_env();
        for (std::size_t i = 0; i < kSoundnessBodies; ++i) {
            testing::TypedGen gen(env, i);
            obj::ObjType T = gen.random_type();
            int depth = 1 + static_cast<int>(testing::pick(gen.rng(), kSoundnessDepth));
            obj::BodyPtr b = gen.body(T, depth);
            obj::EvalOptions opts;
            opts.on_body = [&](const obj::BodyPtr& now) {
                ++out.steps_checked;
                if (!obj::check_body({}, now, T, env)) {
                    if (out.preservation_failures++ == 0)
                        out.first_unpreserved = "seed " + std::to_string(i) + ": " + obj::print_body(now) + " lost type " +
                                                T.str();
                }
            };
            auto r = obj::eval(b, "Alice", env, kSoundnessFuel, opts);
            switch (r.status) {
            case obj::EvalStatus::Value: ++out.values; break;
            case obj::EvalStatus::NullBlocked: ++out.blocked; break;
            case obj::EvalStatus::FuelExhausted: ++out.exhausted; break;
            case obj::EvalStatus::Stuck:
                if (out.stuck++ == 0)
                    out.first_stuck = "seed " + std::to_string(i) + ": " + obj::print_body(b) + " (" + r.stuck_reason + ")";
                break;
            }
        }
        return out;
    }();
    return runs;
}

Outcome soundness() {
    const auto& r = soundness_runs();
    std::string d = std::to_string(kSoundnessBodies) + " bodies: " + std::to_string(r.values) + " values, " +
                    std::to_string(r.blocked) + " null-blocked, " + std::to_string(r.exhausted) + " out of fuel, " +
                    std::to_string(r.stuck) + " stuck";
    if (r.stuck) d += "; " + r.first_stuck;
    return {r.stuck == 0, d};
}

Outcome preservation() {
    const auto& r = soundness_runs();
    std::string d = std::to_string(r.steps_checked) + " bodies re-checked, " + std::to_string(r.preservation_failures) +
                    " lost their type";
    if (r.preservation_failures) d += "; " + r.first_unpreserved;
    return {r.preservation_failures == 0 && r.steps_checked > kSoundnessBodies, d};
}

// ---- 4 ----

std::size_t count_events(const spi::EventTrace& t, spi::Event::Kind k, const spi::MsgPtr& label) {
    std::size_t n = 0;
    for (const auto& e : t)
        if (e.kind == k && spi::msg_eq(e.label, label)) ++n;
    return n;
}

Outcome exploration() {
    spi::ProcPtr naive = spi::parse_spi_file(read_file(WSEC_SOURCE_DIR "/samples/naive.spi")).process;
    spi::ProcPtr replay = spi::parse_spi_file(read_file(WSEC_SOURCE_DIR "/samples/replay.spi")).process;

    auto alone = spi::explore_all(spi::Configuration::of(naive));
    translate::System sys = translate::build_system(banking().body("main"), "Alice", banking().env);
    auto bank = spi::explore_all(sys.configuration());
    bool a = alone.exhaustive && !alone.violation && bank.exhaustive && !bank.violation;

    spi::ExploreOptions opts;
    opts.max_states = kReplayStateBudget;
    opts.stop_on_violation = true;
    auto attacked = spi::explore_all(spi::Configuration::of(spi::p_par(naive, replay)), opts);
    bool b = false;
    std::string bd = "no violation within " + std::to_string(kReplayStateBudget) + " states";
    if (attacked.violation) {
        spi::MsgPtr label = attacked.violation->label;
        std::size_t ends = count_events(attacked.violating_trace, spi::Event::Kind::End, label);
        std::size_t begins = count_events(attacked.violating_trace, spi::Event::Kind::Begin, label);
        b = ends == 2 && begins == 1 && attacked.states <= kReplayStateBudget;
        bd = "replay: " + std::to_string(ends) + " ends for " + std::to_string(begins) + " begin after " +
             std::to_string(attacked.states) + " states";
    }
    return {a && b, "(a) naive " + std::to_string(alone.states) + " states, banking " + std::to_string(bank.states) +
                        " states, " + (a ? "all safe" : "NOT all safe") + "; (b) " + bd};
}

// ---- 5 ----

struct Built {
    translate::System sys;
    adversary::Surface surface;
};

Built banking_system(const std::string& body, translate::Mutation m) {
    const auto& prog = banking();
    Built b{translate::build_system(prog.body(body), "Alice", prog.env, {m}), {}};
    std::vector<spi::Name> principals;
    for (const auto& p : prog.env.principals) principals.push_back(spi::source_name(p));
    b.surface = adversary::surface_of(b.sys.process, b.sys.publics, principals);
    return b;
}

// Canned opponents over kCannedSeeds seeds plus kRandomOpponents random ones,
// on both the one-call and the two-call body.
std::size_t campaign_violations(translate::Mutation m, bool stop_at_first) {
    adversary::CampaignOptions opts;
    opts.jobs = jobs();
    opts.shrink = false;
    opts.stop_at_first = stop_at_first;
    std::size_t v = 0;
    for (const char* body : {"main", "twice"}) {
        Built b = banking_system(body, m);
        auto canned = adversary::robust_safety_campaign(b.sys.configuration(), adversary::canned_opponents(b.surface),
                                                        seeds(0, kCannedSeeds), opts);
        v += canned.violations;
        if (stop_at_first && v) return v;
        auto random = adversary::random_campaign(b.sys.configuration(), b.surface, seeds(0, kRandomOpponents),
                                                 kOpponentBudget, opts);
        v += random.violations;
        if (stop_at_first && v) return v;
    }
    return v;
}

Outcome robust_safety() {
    std::size_t clean = campaign_violations(translate::Mutation::None, false);
    std::string d = "unmodified: " + std::to_string(clean) + " violations";
    bool ok = clean == 0;
    for (auto m : {translate::Mutation::DropNonceCheck, translate::Mutation::ReuseSessionTag, translate::Mutation::SwapKeys}) {
        std::size_t v = campaign_violations(m, true);
        d += "; " + std::string(translate::to_string(m)) + ": " + (v ? "caught" : "not caught");
        ok = ok && v > 0;
    }
    if (!ok && clean == 0)
        d += " (swapped keys leave the service unable to open any request, so no run reaches an end event)";
    return {ok, d};
}

// ---- 6 ----

Outcome adequacy() {
    const auto& env = testing::test_env();
    std::size_t values = 0, blocked = 0, skipped = 0, mismatches = 0;
    std::string first;
    for (std::uint64_t seed = 0; seed < kAdequacyBodies; ++seed) {
        testing::TypedGen gen(env, seed, false);
        obj::ObjType T = gen.random_type();
        obj::BodyPtr b = gen.body(T, kAdequacyDepth);
        auto r = obj::eval(b, "Alice", env, kSoundnessFuel);
        if (r.status == obj::EvalStatus::FuelExhausted || r.status == obj::EvalStatus::Stuck) {
            ++skipped;
            continue;
        }
        translate::System sys = translate::build_system(b, "Alice", env);
        spi::ExploreOptions eo;
        eo.keep_terminals = true;
        auto ex = spi::explore_all(sys.configuration(), eo);
        std::vector<spi::MsgPtr> delivered;
        for (const auto& c : ex.terminals)
            for (const auto& m : translate::delivered_on(c, sys.result)) delivered.push_back(m);
        bool ok = ex.exhaustive;
        if (r.status == obj::EvalStatus::Value) {
            ++values;
            ok = ok && !delivered.empty() && delivered.size() == ex.terminals.size();
            spi::MsgPtr want = translate::translate_value(r.value);
            for (const auto& m : delivered) ok = ok && spi::msg_eq(m, want);
        } else {
            ++blocked;
            ok = ok && delivered.empty();
        }
        if (!ok && mismatches++ == 0) first = "seed " + std::to_string(seed) + ": " + obj::print_body(b);
    }
    std::string d = std::to_string(values) + " values and " + std::to_string(blocked) + " null-blocked bodies agree, " +
                    std::to_string(skipped) + " out of fuel, " + std::to_string(mismatches) + " mismatches";
    if (mismatches) d += "; " + first;
    return {mismatches == 0 && skipped < kAdequacyBodies / 10, d};
}

// ---- 7 ----

std::string fixture(const std::string& name) { return read_file(WSEC_SOURCE_DIR "/fixtures/" + name); }

// pins shared with tests/oracles/soap_fixtures.py
constexpr std::uint64_t kFixtureSeed = 13042;

Outcome wire_fidelity() {
    using namespace soap;
    using namespace soap::testing;
    std::vector<std::string> problems;
    auto same = [&](const std::string& got, const std::string& name) {
        std::string want = fixture(name);
        std::string d = first_difference(parse_xml_tree(got), parse_xml_tree(want));
        if (!d.empty()) problems.push_back(name + ": " + d);
        else if (got != want) problems.push_back(name + ": same elements, different bytes");
    };

    const std::string program = read_file(WSEC_SOURCE_DIR "/samples/banking.obc");
    {
        Rig rig(program, "paper-compat", {"13", "42"}, kFixtureSeed);
        CallContext ctx = rig.ctx();
        CallResult r = run_call({SecurityLevel::Auth, "Alice", "w", "Balance", {obj::mk_num(12345)}}, ctx);
        if (obj::as_num(r.value) != 100u) problems.push_back("Auth call did not return 100");
        const char* names[] = {"nonce_request.xml", "nonce_response.xml", "auth_request.xml", "auth_response.xml"};
        for (int i = 0; i < 4 && i < static_cast<int>(r.log.size()); ++i) same(r.log[i].xml, names[i]);
    }
    {
        Rig rig(program, "paper-compat", {"13", "42"}, kFixtureSeed);
        CallContext ctx = rig.ctx();
        CallResult r = run_call({SecurityLevel::AuthEnc, "Alice", "w", "Statement", {obj::mk_num(12345)}}, ctx);
        same(r.log.at(2).xml, "authenc_request.xml");
        same(r.log.at(3).xml, "authenc_response.xml");
        SoapEnvelope req = parse_envelope(r.log[2].xml), res = parse_envelope(r.log[3].xml);
        if (req.header->nq != "-1" || res.header->np != "-1" || res.header->nq != "-1")
            problems.push_back("AuthEnc nonce dummies missing");
        if (hex_colon(req.header->signature) != "4E:00:6F:00" || hex_colon(res.header->signature) != "4E:00:6F:00")
            problems.push_back("AuthEnc signature dummy missing");
    }
    std::mt19937_64 g(2024);
    std::size_t round_trips = 0;
    for (std::size_t i = 0; i < kRoundTrips; ++i) {
        SoapEnvelope e = random_envelope(g);
        std::string xml = serialize_envelope(e);
        if (parse_envelope(xml) == e && serialize_envelope(parse_envelope(xml)) == xml) ++round_trips;
    }
    if (round_trips != kRoundTrips) problems.push_back(std::to_string(kRoundTrips - round_trips) + " round trips differ");

    std::string d = "6 fixtures byte-identical, AuthEnc dummies present, " + std::to_string(round_trips) + "/" +
                    std::to_string(kRoundTrips) + " round trips";
    if (!problems.empty()) d = problems.front() + (problems.size() > 1 ? " (+" + std::to_string(problems.size() - 1) + " more)" : "");
    return {problems.empty(), d};
}

// ---- 8 ----

Outcome battery() {
    using namespace soap::testing;
    std::string d;
    bool ok = true;
    for (Variant v : {Variant::Auth, Variant::AuthEnc, Variant::AuthAsym, Variant::AuthAsymDeferred, Variant::AuthEncAsym}) {
        BatteryReport rep = run_battery(v, kBatteryTrials, 7);
        bool pass = rep.pass(v);
        ok = ok && pass;
        d += std::string(d.empty() ? "" : ", ") + name_of(v) + " " + (pass ? "ok" : "FAILED");
        if (!pass && !rep.failures.empty()) d += " [" + rep.failures.front() + "]";
    }
    return {ok, std::to_string(kBatteryTrials) + " trials each: " + d};
}

struct Criterion {
    int number;
    const char* name;
    double limit; // seconds; 0 for none
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv) {
    std::vector<Criterion> all{
        {1, "banking golden", kBankingLimit, banking_golden},
        {2, "soundness", kSoundnessLimit, soundness},
        {3, "preservation", 0, preservation},
        {4, "exploration and replay", kExplorationLimit, exploration},
        {5, "robust safety campaign", kCampaignLimit, robust_safety},
        {6, "translation adequacy", kAdequacyLimit, adequacy},
        {7, "wire fidelity", 0, wire_fidelity},
        {8, "replay and integrity battery", kBatteryLimit, battery},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.number)) continue;
        auto t0 = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        double took = seconds_since(t0);
        if (c.limit > 0 && took > c.limit) {
            o.pass = false;
            o.detail += "; over the " + std::to_string(static_cast<int>(c.limit)) + " s limit";
        }
        if (!o.pass) ++failed;
        std::printf("criterion %d: %s  %s: %s (%.2f s)\n", c.number, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), took);
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
