// wsec: type-check, run, translate, simulate, verify and attack programs of
// the web-service object language, and demonstrate the SOAP protocols.
//
// Exit codes: 0 success or safe, 1 type error, failed run or violation,
// 2 usage error.

#include "wsec/adversary/adversary.hpp"
#include "wsec/obj/eval.hpp"
#include "wsec/obj/parser.hpp"
#include "wsec/obj/printer.hpp"
#include "wsec/obj/types.hpp"
#include "wsec/soap/protocol.hpp"
#include "wsec/spi/parser.hpp"
#include "wsec/spi/printer.hpp"
#include "wsec/spi/runtime.hpp"
#include "wsec/translate/translator.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

using namespace wsec;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A rejected input: parse or type error, stuck run, violation.
struct Rejected : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::string format = "text";
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    bool json() const { return format == "json"; }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool is_spi(const std::string& path) { return std::filesystem::path(path).extension() == ".spi"; }

obj::Program load_program(const std::string& path) {
    std::string text = read_file(path);
    try {
        return obj::parse_program(text);
    } catch (const obj::ParseError& e) {
        throw Rejected(path + ":" + std::to_string(e.pos.line) + ":" + std::to_string(e.pos.col) + ": " + e.what());
    }
}

obj::BodyPtr pick_body(const obj::Program& prog, const std::string& name) {
    obj::BodyPtr b = prog.body(name);
    if (!b) throw UsageError("no body named " + name);
    return b;
}

std::string pick_principal(const obj::Program& prog, const std::string& as) {
    if (!as.empty()) {
        if (!prog.env.is_principal(as)) throw UsageError("unknown principal " + as);
        return as;
    }
    if (prog.env.principals.empty()) throw UsageError("program declares no principals");
    return prog.env.is_principal("Alice") ? "Alice" : *prog.env.principals.begin();
}

translate::Mutation pick_mutation(const std::string& m) {
    auto parsed = translate::parse_mutation(m);
    if (!parsed) throw UsageError("unknown mutation " + m);
    return *parsed;
}

obj::ObjType checked_type(const obj::Program& prog, const obj::BodyPtr& b) {
    try {
        obj::TypeSet ts = obj::type_of_body({}, b, prog.env);
        if (ts.is_empty()) throw Rejected("body has no type");
        auto members = ts.members(prog.env);
        if (auto u = ts.unique()) return *u;
        if (members.empty()) throw Rejected("body has no type");
        return members.front();
    } catch (const obj::TypeError& e) {
        throw Rejected("type error (" + e.rule + "): " + e.what());
    }
}

// A closed system: a translated body, or a spi file.
struct Loaded {
    spi::Configuration config;
    std::vector<spi::Name> channels;
    std::vector<spi::Name> principals;
    std::optional<spi::Name> result;
    spi::ProcPtr process;
};

void collect_channels(const spi::ProcPtr& p, std::set<spi::Name>& out) {
    if (p->kind == spi::ProcKind::Out || p->kind == spi::ProcKind::In || p->kind == spi::ProcKind::RepIn) {
        if (p->msgs[0]->kind == spi::MsgKind::Name) out.insert(p->msgs[0]->name);
    }
    for (const auto& k : p->kids) collect_channels(k, out);
}

Loaded load_system(const std::string& path, const std::string& body, const std::string& as, translate::Mutation m) {
    Loaded l;
    if (is_spi(path)) {
        spi::SpiFile f;
        try {
            f = spi::parse_spi_file(read_file(path));
        } catch (const UsageError&) {
            throw;
        } catch (const std::exception& e) {
            throw Rejected(path + ": " + e.what());
        }
        l.process = f.process;
        std::vector<spi::Name> publics = f.publics;
        if (!f.publics_declared)
            for (const auto& n : spi::free_names(f.process)) publics.push_back(n);
        std::set<spi::Name> used;
        collect_channels(f.process, used);
        for (const auto& n : publics) (used.count(n) ? l.channels : l.principals).push_back(n);
    } else {
        obj::Program prog = load_program(path);
        obj::BodyPtr b = pick_body(prog, body);
        std::string p = pick_principal(prog, as);
        checked_type(prog, b);
        translate::System sys;
        try {
            sys = translate::build_system(b, p, prog.env, {m});
        } catch (const translate::TranslateError& e) {
            throw Rejected(std::string("translation failed: ") + e.what());
        }
        l.process = sys.process;
        l.result = sys.result;
        l.channels = sys.publics;
        for (const auto& q : prog.env.principals) l.principals.push_back(spi::source_name(q));
    }
    l.config = spi::Configuration::of(l.process);
    return l;
}

std::vector<std::uint64_t> seed_range(std::uint64_t from, std::size_t n) {
    std::vector<std::uint64_t> s(n);
    std::iota(s.begin(), s.end(), from);
    return s;
}

// ---- commands ----

int cmd_check(const Globals& g, const std::string& path, const std::string& only) {
    obj::Program prog = load_program(path);
    obj::EnvReport env = obj::validate_environment(prog.env);
    json out{{"file", path}, {"environment", env.to_json()}, {"bodies", json::array()}};
    bool ok = env.ok();
    for (const auto& [name, b] : prog.bodies) {
        if (!only.empty() && name != only) continue;
        json entry{{"body", name}};
        try {
            entry["type"] = obj::print_type(checked_type(prog, b));
        } catch (const Rejected& e) {
            entry["error"] = e.what();
            ok = false;
        }
        out["bodies"].push_back(entry);
    }
    if (!only.empty() && out["bodies"].empty()) throw UsageError("no body named " + only);
    out["ok"] = ok;
    if (g.json()) {
        std::cout << out.dump(2) << "\n";
    } else {
        std::cout << (env.ok() ? "environment well-typed\n" : env.str());
        for (const auto& e : out["bodies"]) {
            if (e.contains("type"))
                std::cout << e["body"].get<std::string>() << " : " << e["type"].get<std::string>() << "\n";
            else
                std::cout << e["body"].get<std::string>() << ": " << e["error"].get<std::string>() << "\n";
        }
    }
    return ok ? 0 : 1;
}

int cmd_run(const Globals& g, const std::string& path, const std::string& body, const std::string& as,
            std::uint64_t fuel, std::size_t trace) {
    obj::Program prog = load_program(path);
    obj::BodyPtr b = pick_body(prog, body);
    std::string p = pick_principal(prog, as);
    obj::ObjType t = checked_type(prog, b);
    obj::EvalResult r = obj::eval(b, p, prog.env, fuel, {trace, {}});
    json out{{"status", std::string(obj::to_string(r.status))}, {"steps", r.steps}, {"type", obj::print_type(t)}};
    if (trace) {
        out["trace"] = json::array();
        for (const auto& x : r.trace) out["trace"].push_back(obj::print_body(x));
    }
    if (trace && !g.json())
        for (const auto& x : r.trace) std::cout << "  " << obj::print_body(x) << "\n";
    if (r.value) {
        out["value"] = obj::print_value(r.value);
        if (auto n = obj::as_num(r.value)) out["numeral"] = *n;
    }
    if (!r.stuck_reason.empty()) out["reason"] = r.stuck_reason;
    if (g.json()) {
        std::cout << out.dump(2) << "\n";
    } else if (r.status == obj::EvalStatus::Value) {
        auto n = obj::as_num(r.value);
        std::cout << (n ? std::to_string(*n) : obj::print_value(r.value)) << " : " << obj::print_type(t) << "\n";
    } else {
        std::cout << obj::to_string(r.status) << " after " << r.steps << " steps"
                  << (r.stuck_reason.empty() ? "" : ": " + r.stuck_reason) << "\n";
    }
    return r.status == obj::EvalStatus::Value || r.status == obj::EvalStatus::NullBlocked ? 0 : 1;
}

int cmd_translate(const Globals& g, const std::string& path, const std::string& body, const std::string& as,
                  const std::string& mutation) {
    if (is_spi(path)) throw UsageError("translate takes an object-language program");
    Loaded l = load_system(path, body, as, pick_mutation(mutation));
    spi::Printer pr;
    std::string text = pr.process(l.process);
    if (g.json()) {
        json pubs = json::array();
        for (const auto& n : l.channels) pubs.push_back(pr.name(n));
        std::cout << json{{"process", text}, {"result", pr.name(*l.result)}, {"publics", pubs}}.dump(2) << "\n";
    } else {
        std::cout << text << "\n";
    }
    return 0;
}

int cmd_simulate(const Globals& g, const std::string& path, const std::string& body, const std::string& as,
                 const std::string& mutation, std::uint64_t fuel) {
    Loaded l = load_system(path, body, as, pick_mutation(mutation));
    spi::RunResult r = spi::run(l.config, g.seed, fuel);
    spi::SafetyVerdict v = spi::check_safety(r.trace);
    spi::Printer pr;
    std::vector<std::string> delivered;
    if (l.result)
        for (const auto& m : translate::delivered_on(r.final, *l.result)) delivered.push_back(pr.message(m));
    if (g.json()) {
        std::cout << json{{"seed", g.seed},
                          {"steps", r.steps},
                          {"fuel_exhausted", r.fuel_exhausted},
                          {"safe", v.safe},
                          {"verdict", v.str()},
                          {"trace", spi::trace_json(r.trace, pr)},
                          {"delivered", delivered}}
                         .dump(2)
                  << "\n";
    } else {
        std::cout << spi::format_trace(r.trace, pr);
        for (const auto& d : delivered) std::cout << "result: " << d << "\n";
        std::cout << r.steps << " steps" << (r.fuel_exhausted ? " (fuel exhausted)" : "") << "; " << v.str() << "\n";
    }
    return v.safe ? 0 : 1;
}

int cmd_verify(const Globals& g, const std::string& path, const std::string& body, const std::string& as,
               const std::string& mutation, std::size_t states) {
    Loaded l = load_system(path, body, as, pick_mutation(mutation));
    spi::ExploreOptions opts;
    opts.max_states = states;
    opts.stop_on_violation = true;
    opts.keep_terminals = l.result.has_value();
    spi::ExploreResult r = spi::explore_all(l.config, opts);
    spi::Printer pr;
    std::set<std::string> delivered;
    if (l.result)
        for (const auto& c : r.terminals)
            for (const auto& m : translate::delivered_on(c, *l.result)) delivered.insert(pr.message(m));
    std::string summary = r.violation ? "violation: " + r.violation->str()
                          : r.exhaustive ? "all traces safe"
                                         : "no violation within " + std::to_string(states) + " states (not exhaustive)";
    if (g.json()) {
        json out{{"states", r.states},     {"exhaustive", r.exhaustive}, {"safe", !r.violation},
                 {"summary", summary},     {"traces", r.traces.size()},  {"delivered", delivered}};
        if (r.violation) out["trace"] = spi::trace_json(r.violating_trace, pr);
        std::cout << out.dump(2) << "\n";
    } else {
        std::cout << summary << "\n";
        std::cout << r.states << " states, " << r.traces.size() << " terminal traces\n";
        for (const auto& d : delivered) std::cout << "result: " << d << "\n";
        if (r.violation) std::cout << spi::format_trace(r.violating_trace, pr);
    }
    return r.violation ? 1 : 0;
}

int cmd_attack(const Globals& g, const std::string& path, const std::string& body, const std::string& as,
               const std::string& mutation, const std::string& suite, std::size_t runs, std::size_t budget,
               std::uint64_t fuel) {
    Loaded l = load_system(path, body, as, pick_mutation(mutation));
    adversary::Surface s = adversary::surface_of(l.process, l.channels, l.principals);
    adversary::CampaignOptions opts;
    opts.fuel = fuel;
    opts.jobs = g.jobs;
    std::vector<adversary::CampaignReport> reports;
    std::vector<std::string> names;
    if (suite == "canned" || suite == "all") {
        reports.push_back(adversary::robust_safety_campaign(l.config, adversary::canned_opponents(s), seed_range(g.seed, runs), opts));
        names.push_back("canned");
    }
    if (suite == "random" || suite == "all") {
        reports.push_back(adversary::random_campaign(l.config, s, seed_range(g.seed, runs), budget, opts));
        names.push_back("random");
    }
    bool clean = true;
    for (const auto& r : reports) clean = clean && r.clean();
    if (g.json()) {
        json out = json::object();
        for (std::size_t i = 0; i < reports.size(); ++i) out[names[i]] = reports[i].to_json();
        out["clean"] = clean;
        std::cout << out.dump(2) << "\n";
    } else {
        for (std::size_t i = 0; i < reports.size(); ++i) std::cout << "[" << names[i] << "]\n" << reports[i].str();
        std::cout << (clean ? "no violation found\n" : "violation found\n");
    }
    return clean ? 0 : 1;
}

std::string fixtures_dir() {
    if (const char* d = std::getenv("WSEC_FIXTURES")) return d;
    return WSEC_SOURCE_DIR "/fixtures";
}

int cmd_soap(const Globals& g, const std::string& path, const std::string& level_name, const std::string& as,
             std::string method, const std::vector<std::size_t>& args, std::string suite_name, bool show_wire,
             bool pinned, bool compare) {
    const bool asym = level_name.ends_with("-asym");
    std::string base = asym ? level_name.substr(0, level_name.size() - 5) : level_name;
    auto level = parse_security_level(base);
    if (!level || (asym && *level == SecurityLevel::None)) throw UsageError("unknown level " + level_name);
    obj::Program prog = load_program(path);
    if (prog.env.services.empty()) throw UsageError(path + " declares no web service");
    const obj::ServiceDef& w = prog.env.services.begin()->second;
    const obj::ClassDef* cls = prog.env.find_class(w.cls);
    if (method.empty()) {
        for (const auto& [name, m] : cls->methods)
            if (m.level == *level) method = name;
        if (method.empty())
            for (const auto& [name, m] : cls->methods)
                if (m.level != SecurityLevel::None && method.empty()) method = name;
    }
    const obj::MethodDef* m = cls->method(method);
    if (!m) throw UsageError("service " + w.name + " has no method " + method);
    std::vector<obj::ValuePtr> values;
    for (std::size_t a : args) values.push_back(obj::mk_num(a));
    while (values.size() < m->sig.params.size()) values.push_back(obj::mk_num(12345));
    if (values.size() != m->sig.params.size()) throw UsageError("too many arguments for " + method);
    if (compare) {
        pinned = true;
        suite_name = "paper-compat";
    }
    std::unique_ptr<soap::SymmetricSuite> suite;
    try {
        suite = soap::suite_by_name(suite_name);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    std::vector<std::string> principals(prog.env.principals.begin(), prog.env.principals.end());
    soap::KeyStore keys = soap::KeyStore::derived(principals, suite->key_size());
    std::unique_ptr<soap::Rng> rng;
    if (pinned) rng = std::make_unique<soap::PinnedRng>(std::vector<std::string>{"13", "42"}, 13042);
    else rng = std::make_unique<soap::SystemRng>();
    soap::Transport transport;
    soap::Server server(prog.env, w.name, keys, *suite, *rng, soap::ServerOptions{asym, false});
    soap::CallContext ctx{prog.env, keys, *suite, *rng, transport, server};
    soap::CallRequest req{*level, pick_principal(prog, as), w.name, method, values};

    json out{{"level", level_name}, {"method", method}, {"suite", suite->name()}};
    int rc = 0;
    std::vector<soap::Frame> log;
    try {
        soap::CallResult r = asym ? soap::run_call_asym(req, ctx) : soap::run_call(req, ctx);
        out["result"] = soap::value_text(r.value);
        log = r.log;
    } catch (const soap::ProtocolError& e) {
        out["error"] = e.what();
        log = transport.log();
        rc = 1;
    }
    json wire = json::array();
    for (const auto& f : log) wire.push_back({{"from", f.from}, {"to", f.to}, {"label", f.label}, {"session", f.session}, {"xml", f.xml}});
    if (show_wire || g.json()) out["wire"] = wire;

    if (compare) {
        std::map<std::string, std::vector<std::string>> names{
            {"auth", {"nonce_request.xml", "nonce_response.xml", "auth_request.xml", "auth_response.xml"}},
            {"authenc", {"nonce_request.xml", "nonce_response.xml", "authenc_request.xml", "authenc_response.xml"}}};
        if (!names.count(level_name)) throw UsageError("fixtures exist for auth and authenc only");
        json diffs = json::array();
        for (std::size_t i = 0; i < names[level_name].size(); ++i) {
            std::string file = fixtures_dir() + "/" + names[level_name][i];
            std::string d = i < log.size() ? soap::first_difference(soap::parse_xml_tree(log[i].xml),
                                                                    soap::parse_xml_tree(read_file(file)))
                                           : "missing envelope";
            diffs.push_back({{"fixture", file}, {"difference", d}});
            if (!d.empty()) rc = 1;
        }
        out["fixtures"] = diffs;
    }

    if (g.json()) {
        std::cout << out.dump(2) << "\n";
        return rc;
    }
    std::cout << level_name << " call " << w.name << ":" << method << " as " << req.client << " (" << suite->name() << ")\n";
    if (show_wire)
        for (const auto& f : log) std::cout << "--- " << f.label << ": " << f.from << " -> " << f.to << "\n" << f.xml;
    if (out.contains("result")) std::cout << "result: " << out["result"].get<std::string>() << "\n";
    else std::cout << "rejected: " << out["error"].get<std::string>() << "\n";
    if (compare)
        for (const auto& d : out["fixtures"])
            std::cout << d["fixture"].get<std::string>() << ": "
                      << (d["difference"].get<std::string>().empty() ? "match" : d["difference"].get<std::string>()) << "\n";
    return rc;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"wsec: secure web-service programs, their spi translation, and SOAP protocols"};
    app.require_subcommand(1);
    Globals g;
    auto globals = [&](CLI::App* sub) {
        sub->add_option("--format", g.format, "Output format")->check(CLI::IsMember({"text", "json"}));
        sub->add_option("--seed", g.seed, "Seed for every random choice");
        sub->add_option("--jobs", g.jobs, "Worker threads for campaigns")->check(CLI::Range(1u, 256u));
    };

    std::string file, body = "main", as, mutation = "none", suite = "canned", level = "auth", method, crypto = "modern";
    std::uint64_t fuel = 10000;
    std::size_t states = 200000, runs = 100, budget = 8;
    std::vector<std::size_t> args;
    bool show_wire = false, pinned = false, compare = false;
    auto program_opts = [&](CLI::App* sub, bool with_body) {
        sub->add_option("file", file, "Program (.obc) or spi file (.spi)")->required();
        if (with_body) {
            sub->add_option("--body", body, "Named body to use");
            sub->add_option("--as", as, "Principal running the body");
        }
    };
    auto mutation_opt = [&](CLI::App* sub) {
        sub->add_option("--mutation,--mutate", mutation, "Deliberate protocol flaw")
            ->check(CLI::IsMember({"none", "no-nonce-check", "reuse-session", "swap-keys"}));
    };

    CLI::App* check = app.add_subcommand("check", "Type-check a program");
    globals(check);
    program_opts(check, false);
    std::string only;
    check->add_option("--body", only, "Check only this body");

    CLI::App* run = app.add_subcommand("run", "Evaluate a body");
    globals(run);
    program_opts(run, true);
    run->add_option("--fuel", fuel, "Step bound");
    std::size_t trace = 0;
    run->add_flag("--trace{64}", trace, "Print the last N intermediate bodies (default 64)");

    CLI::App* tr = app.add_subcommand("translate", "Print the spi translation of a body");
    globals(tr);
    program_opts(tr, true);
    mutation_opt(tr);

    CLI::App* sim = app.add_subcommand("simulate", "One random run of the translated system");
    globals(sim);
    program_opts(sim, true);
    mutation_opt(sim);
    sim->add_option("--fuel", fuel, "Step bound");
    CLI::Option* sim_explore = sim->add_option("--explore", states, "Explore up to N states instead of one run");

    CLI::App* ver = app.add_subcommand("verify", "Bounded exhaustive exploration for safety");
    globals(ver);
    program_opts(ver, true);
    mutation_opt(ver);
    ver->add_option("--explore", states, "State budget");

    CLI::App* att = app.add_subcommand("attack", "Run opponents against the system");
    globals(att);
    program_opts(att, true);
    mutation_opt(att);
    att->add_option("--suite", suite, "Opponents to use")->check(CLI::IsMember({"canned", "random", "all"}));
    att->add_option("--runs,--seeds", runs, "Seeds per opponent");
    att->add_option("--budget", budget, "Actions per random opponent");
    att->add_option("--fuel", fuel, "Steps per run");

    CLI::App* demo = app.add_subcommand("soap-demo", "Run one secure call over SOAP envelopes");
    globals(demo);
    demo->add_option("file", file, "Program (.obc)")->default_val(std::string(WSEC_SOURCE_DIR "/samples/banking.obc"));
    demo->add_option("--level", level, "Protocol")
        ->check(CLI::IsMember({"none", "auth", "authenc", "auth-asym", "authenc-asym"}));
    demo->add_option("--as", as, "Calling principal");
    demo->add_option("--method", method, "Web method (default: one declared at the level)");
    demo->add_option("--arg", args, "Numeric arguments");
    demo->add_option("--suite", crypto, "Symmetric suite")->check(CLI::IsMember({"modern", "paper-compat"}));
    demo->add_flag("--show-wire", show_wire, "Print every envelope");
    demo->add_flag("--pinned", pinned, "Pinned nonces 13/42 and a seeded generator");
    demo->add_flag("--compare-fixtures", compare, "Compare the wire with the golden envelopes (WSEC_FIXTURES)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*check) return cmd_check(g, file, only);
        if (*run) return cmd_run(g, file, body, as, fuel, trace);
        if (*tr) return cmd_translate(g, file, body, as, mutation);
        if (*sim && *sim_explore) return cmd_verify(g, file, body, as, mutation, states);
        if (*sim) return cmd_simulate(g, file, body, as, mutation, fuel);
        if (*ver) return cmd_verify(g, file, body, as, mutation, states);
        if (*att) return cmd_attack(g, file, body, as, mutation, suite, runs, budget, fuel);
        if (*demo) return cmd_soap(g, file, level, as, method, args, crypto, show_wire, pinned, compare);
    } catch (const UsageError& e) {
        std::cerr << "wsec: " << e.what() << "\n" << app.help();
        return 2;
    } catch (const Rejected& e) {
        std::cerr << "wsec: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "wsec: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
