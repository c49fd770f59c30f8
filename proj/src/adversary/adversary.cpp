#include "wsec/adversary/adversary.hpp"

#include "wsec/spi/parser.hpp"
#include "wsec/spi/printer.hpp"

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace wsec::adversary {

using namespace wsec::spi;

// ---- knowledge ----

KnowledgeBase::KnowledgeBase(KnowledgeLimits limits) : limits_(limits) {}

bool KnowledgeBase::add(const MsgPtr& m) {
    if (set_.count(m)) return false;
    if (items_.size() >= limits_.max_size) {
        truncated_ = true;
        return false;
    }
    set_.insert(m);
    items_.push_back(m);
    return true;
}

void KnowledgeBase::learn(const MsgPtr& m) {
    if (add(m)) saturate();
}

void KnowledgeBase::saturate() {
    // Analysis to a fixpoint; a ciphertext may open once its key shows up later.
    bool changed = true;
    std::size_t scanned = 0;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < items_.size(); ++i) {
            MsgPtr m = items_[i];
            bool first_visit = i >= scanned;
            switch (m->kind) {
            case MsgKind::Record:
            case MsgKind::Tagged:
                if (first_visit)
                    for (const auto& k : m->kids) changed |= add(k);
                break;
            case MsgKind::KeyPart:
                if (first_visit) changed |= add(m->kids[0]);
                break;
            case MsgKind::SymEnc:
                if (!set_.count(m->kids[0]) && derivable(m->kids[1])) changed |= add(m->kids[0]);
                break;
            case MsgKind::AsymEnc: {
                const MsgPtr& key = m->kids[1];
                if (set_.count(m->kids[0]) || key->kind != MsgKind::KeyPart || key->attr != KeyAttr::Encrypt) break;
                if (derivable(m_keypart(KeyAttr::Decrypt, key->kids[0]))) changed |= add(m->kids[0]);
                break;
            }
            case MsgKind::Name: break;
            }
            // a known key pair yields both of its parts
            if (first_visit && m->kind == MsgKind::Name) {
                changed |= add(m_keypart(KeyAttr::Encrypt, m));
                changed |= add(m_keypart(KeyAttr::Decrypt, m));
            }
        }
        scanned = items_.size();
        if (truncated_) break;
    }
}

bool KnowledgeBase::knows(const MsgPtr& m) const { return set_.count(m) != 0; }

bool KnowledgeBase::derivable(const MsgPtr& m) const { return derivable_at(m, 0); }

bool KnowledgeBase::derivable_at(const MsgPtr& m, std::size_t depth) const {
    if (set_.count(m)) return true;
    if (depth >= limits_.max_depth || m->kind == MsgKind::Name) return false;
    return std::all_of(m->kids.begin(), m->kids.end(), [&](const MsgPtr& k) { return derivable_at(k, depth + 1); });
}

// ---- attack plans ----

namespace {

void collect_tags(const MsgPtr& m, std::set<Symbol>& out) {
    if (m->kind == MsgKind::Tagged) out.insert(m->tag);
    for (const auto& k : m->kids)
        if (k->kind != MsgKind::Name) collect_tags(k, out);
}

void collect_tags(const ProcPtr& p, std::set<Symbol>& out) {
    for (const auto& m : p->msgs) collect_tags(m, out);
    for (auto t : p->tags) out.insert(t);
    for (const auto& k : p->kids) collect_tags(k, out);
}

} // namespace

Surface surface_of(const ProcPtr& system, const std::vector<Name>& publics, const std::vector<Name>& principals) {
    Surface s;
    s.channels = publics;
    s.principals = principals;
    std::set<Symbol> tags{Symbol("req"), Symbol("res"), Symbol("getnonce"), Symbol("null")};
    collect_tags(system, tags);
    s.tags.assign(tags.begin(), tags.end());
    return s;
}

ProcPtr AttackPlan::compile() const {
    ProcPtr p = p_stop();
    for (auto it = actions.rbegin(); it != actions.rend(); ++it) {
        const AttackAction& a = *it;
        switch (a.kind) {
        case AttackAction::Kind::Listen:
            p = a.replicated ? p_rep_in(a.chan, un(a.binds[0]), p) : p_in(a.chan, un(a.binds[0]), p);
            break;
        case AttackAction::Kind::Send: p = p_par(p_out(a.chan, a.msg), p); break;
        case AttackAction::Kind::Fork: p = p_par(a.branch ? a.branch->compile() : p_stop(), p); break;
        case AttackAction::Kind::Split: {
            std::vector<Binder> xs;
            for (const auto& n : a.binds) xs.push_back(un(n));
            p = p_split(a.msg, xs, p);
            break;
        }
        case AttackAction::Kind::Decrypt: p = p_symdec(a.msg, un(a.binds[0]), a.key, p); break;
        case AttackAction::Kind::Fresh: p = p_new(un(a.binds[0]), p); break;
        }
    }
    return p;
}

// ---- canned opponents ----

namespace {

// A tapped template intercepts up to kTapDepth messages on chan, forwards
// each one and runs `text` on it as x.  Untapped templates run once as is.
constexpr int kTapDepth = 6;

struct Template {
    const char* name;
    const char* text; // over the placeholders chan, who and x
    bool tapped;
    bool per_principal;
};

const Template kTemplates[] = {
    {"replay", "in chan(x); out chan x; out chan x", false, false},
    {"drop", "in chan(x); stop", false, false},
    {"reflect", "split x is (b, k); out k b | split x is (p, c, n, k2); out k2 (p, c)", true, false},
    {"reroute",
     "split x is (p, c, n, k); in chan(y); out chan y;"
     " split y is (p2, c2, n2, k2); out chan (p, c, n, k2); out chan (p2, c2, n2, k)",
     true, false},
    {"impersonate", "split x is (p, c, n, k); out chan (who, c, n, k)", true, true},
    {"nonce-reuse",
     "split x is (b, k); in k(r); out k r; in chan(y); out chan y; split y is (b2, k2); out k2 r", true, false},
    {"request-replay",
     "split x is (p, c, n, k); new k1; out chan (req(getnonce()), k1); in k1(r); out chan x", true, false},
    {"response-replay",
     "split x is (p, c, n, k); in k(r); out k r; in chan(y); out chan y; split y is (p2, c2, n2, k2); out k2 r",
     true, false},
};

ProcPtr tap(const ProcPtr& action, const MsgPtr& chan, int depth) {
    if (depth == 0) return p_stop();
    Name x = renamed(source_name("x"));
    ProcPtr act = subst(action, source_name("x"), m_name(x));
    return p_in(chan, un(x), p_par({p_out(chan, m_name(x)), act, tap(action, chan, depth - 1)}));
}

ProcPtr instantiate(const Template& t, const Surface& s) {
    static std::mutex mu; // the parser interns symbols; keep template parsing serial
    ProcPtr body;
    {
        std::lock_guard<std::mutex> lock(mu);
        body = parse_process(t.text);
    }
    std::vector<ProcPtr> parts;
    for (const auto& c : s.channels) {
        ProcPtr on_chan = subst(body, source_name("chan"), m_name(c));
        std::vector<ProcPtr> variants;
        if (t.per_principal)
            for (const auto& who : s.principals) variants.push_back(subst(on_chan, source_name("who"), m_name(who)));
        else
            variants.push_back(on_chan);
        for (const auto& v : variants) parts.push_back(t.tapped ? tap(v, m_name(c), kTapDepth) : v);
    }
    return p_par(parts);
}

} // namespace

std::vector<std::string> canned_names() {
    std::vector<std::string> out;
    for (const auto& t : kTemplates) out.emplace_back(t.name);
    return out;
}

std::optional<NamedOpponent> canned_opponent(const std::string& name, const Surface& s) {
    for (const auto& t : kTemplates)
        if (name == t.name) return NamedOpponent{t.name, instantiate(t, s)};
    return std::nullopt;
}

std::vector<NamedOpponent> canned_opponents(const Surface& s) {
    std::vector<NamedOpponent> out;
    for (const auto& t : kTemplates) out.push_back({t.name, instantiate(t, s)});
    return out;
}

// ---- random opponents ----

namespace {

class OpponentGen {
public:
    OpponentGen(std::uint64_t seed, const Surface& s) : rng_(seed), s_(s) {
        for (const auto& c : s.channels) known_.push_back(m_name(c));
        for (const auto& p : s.principals) known_.push_back(m_name(p));
    }

    AttackPlan plan(std::size_t budget, int depth = 0) {
        AttackPlan out;
        std::size_t mark = known_.size();
        while (budget > 0) {
            --budget;
            unsigned r = pick(100);
            if (r < 30 || learned() == 0) {
                Name x = fresh("x");
                MsgPtr chan = channel();
                out.actions.push_back({AttackAction::Kind::Listen, chan, nullptr, nullptr, {x}, false, nullptr});
                known_.push_back(m_name(x));
                if (pick(2)) // pass it on, as a man in the middle would
                    out.actions.push_back({AttackAction::Kind::Send, chan, m_name(x), nullptr, {}, false, nullptr});
            } else if (r < 65) {
                out.actions.push_back({AttackAction::Kind::Send, channel(), message(2), nullptr, {}, false, nullptr});
            } else if (r < 75) {
                std::size_t n = pick(2) ? 2 : 4;
                std::vector<Name> xs;
                for (std::size_t i = 0; i < n; ++i) xs.push_back(fresh("y"));
                out.actions.push_back({AttackAction::Kind::Split, nullptr, learned_msg(), nullptr, xs, false, nullptr});
                for (const auto& x : xs) known_.push_back(m_name(x));
            } else if (r < 80) {
                Name x = fresh("d");
                out.actions.push_back(
                    {AttackAction::Kind::Decrypt, nullptr, learned_msg(), any_known(), {x}, false, nullptr});
                known_.push_back(m_name(x));
            } else if (r < 85) {
                Name n = fresh("n");
                out.actions.push_back({AttackAction::Kind::Fresh, nullptr, nullptr, nullptr, {n}, false, nullptr});
                known_.push_back(m_name(n));
            } else if (depth < 3 && budget > 0) {
                std::size_t share = 1 + pick(budget);
                budget -= std::min(budget, share);
                auto branch = std::make_shared<AttackPlan>(plan(share, depth + 1));
                out.actions.push_back({AttackAction::Kind::Fork, nullptr, nullptr, nullptr, {}, false, branch});
            }
        }
        known_.resize(mark); // names bound in this plan are out of scope after it
        return out;
    }

private:
    std::mt19937_64 rng_;
    const Surface& s_;
    std::vector<MsgPtr> known_;

    unsigned pick(std::size_t n) { return static_cast<unsigned>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_)); }
    static Name fresh(const char* id) { return renamed(source_name(id)); }
    std::size_t learned() const { return known_.size() - s_.channels.size() - s_.principals.size(); }
    MsgPtr any_known() { return known_[pick(known_.size())]; }
    MsgPtr learned_msg() {
        if (learned() == 0) return any_known();
        return known_[s_.channels.size() + s_.principals.size() + pick(learned())];
    }
    // Mostly public channels, sometimes a learned name (continuations travel in messages).
    MsgPtr channel() {
        if (!s_.channels.empty() && (learned() == 0 || pick(3) != 0)) return m_name(s_.channels[pick(s_.channels.size())]);
        return learned_msg();
    }
    MsgPtr message(int depth) {
        unsigned r = pick(100);
        if (r < 30 && learned()) return known_.back();
        if (depth <= 0 || r < 45) return r < 38 && learned() ? learned_msg() : any_known();
        if (r < 57) return m_record({m_tagged("req", m_tagged("getnonce", m_record({}))), any_known()});
        if (r < 72) {
            std::size_t n = pick(2) ? 2 : 4;
            std::vector<MsgPtr> xs;
            for (std::size_t i = 0; i < n; ++i) xs.push_back(message(depth - 1));
            return m_record(std::move(xs));
        }
        if (r < 87 && !s_.tags.empty()) return m_tagged(s_.tags[pick(s_.tags.size())], message(depth - 1));
        return m_symenc(message(depth - 1), any_known());
    }
};

} // namespace

ProcPtr random_opponent(std::uint64_t seed, std::size_t budget, const Surface& s) {
    if (budget == 0) return p_stop();
    OpponentGen gen(seed, s);
    return gen.plan(budget).compile();
}

// ---- campaigns ----

RunResult replay(const Configuration& sys, const ProcPtr& opponent, std::uint64_t seed, std::uint64_t fuel) {
    Configuration c = sys;
    c.add(opponent);
    return run(std::move(c), seed, fuel);
}

namespace {

// Replace the idx-th subprocess (preorder) with stop.
ProcPtr cut_at(const ProcPtr& p, std::size_t& idx) {
    if (idx == 0) {
        idx = static_cast<std::size_t>(-1);
        return p_stop();
    }
    --idx;
    std::vector<ProcPtr> kids;
    bool changed = false;
    for (const auto& k : p->kids) {
        if (idx == static_cast<std::size_t>(-1)) {
            kids.push_back(k);
            continue;
        }
        ProcPtr nk = cut_at(k, idx);
        changed |= nk != k;
        kids.push_back(nk);
    }
    if (!changed) return p;
    if (p->kind == ProcKind::Par && kids[0]->kind == ProcKind::Stop) return kids[1];
    if (p->kind == ProcKind::Par && kids[1]->kind == ProcKind::Stop) return kids[0];
    return p_rebuild(*p, p->msgs, p->binders, std::move(kids), p->type);
}

std::size_t proc_size(const ProcPtr& p) { return p->size; }

Counterexample make_counterexample(const Configuration& sys, const std::string& name, const ProcPtr& opp,
                                   std::uint64_t seed, const CampaignOptions& opts) {
    ProcPtr best = opp;
    RunResult r = replay(sys, best, seed, opts.fuel);
    if (opts.shrink) {
        // Greedy: cut subprocesses while the same seed still violates.
        bool progress = true;
        std::size_t attempts = 0;
        while (progress && attempts < 400) {
            progress = false;
            for (std::size_t i = 1; i < proc_size(best) && attempts < 400; ++i) {
                std::size_t idx = i;
                ProcPtr candidate = cut_at(best, idx);
                if (candidate == best) continue;
                ++attempts;
                RunResult rc = replay(sys, candidate, seed, opts.fuel);
                if (!check_safety(rc.trace).safe) {
                    best = candidate;
                    r = std::move(rc);
                    progress = true;
                    break;
                }
            }
        }
    }
    Counterexample cx;
    cx.opponent = name;
    cx.seed = seed;
    cx.opponent_process = best;
    cx.trace = r.trace;
    cx.verdict = check_safety(r.trace);
    cx.prefix.assign(r.trace.begin(), r.trace.begin() + static_cast<std::ptrdiff_t>(cx.verdict.index + 1));
    return cx;
}

struct Cell {
    std::string name;
    ProcPtr opponent;
    std::uint64_t seed;
};

CampaignReport run_cells(const Configuration& sys, const std::vector<Cell>& cells, const CampaignOptions& opts) {
    struct Outcome {
        bool ran = false;
        bool violation = false;
        bool exhausted = false;
    };
    std::vector<Outcome> outcomes(cells.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= cells.size() || stop.load()) return;
            RunResult r = replay(sys, cells[i].opponent, cells[i].seed, opts.fuel);
            outcomes[i].ran = true;
            outcomes[i].violation = !check_safety(r.trace).safe;
            outcomes[i].exhausted = r.fuel_exhausted;
            if (outcomes[i].violation && opts.stop_at_first) stop.store(true);
        }
    };
    unsigned jobs = std::max(1u, opts.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    CampaignReport rep;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!outcomes[i].ran) continue;
        ++rep.cells;
        rep.exhausted += outcomes[i].exhausted;
        if (!outcomes[i].violation) continue;
        ++rep.violations;
        if (rep.counterexamples.size() < opts.max_counterexamples)
            rep.counterexamples.push_back(
                make_counterexample(sys, cells[i].name, cells[i].opponent, cells[i].seed, opts));
        if (opts.stop_at_first) break;
    }
    return rep;
}

} // namespace

CampaignReport robust_safety_campaign(const Configuration& sys, const std::vector<NamedOpponent>& opponents,
                                      const std::vector<std::uint64_t>& seeds, const CampaignOptions& opts) {
    std::vector<Cell> cells;
    for (const auto& o : opponents)
        for (auto s : seeds) cells.push_back({o.name, o.process, s});
    return run_cells(sys, cells, opts);
}

CampaignReport random_campaign(const Configuration& sys, const Surface& s, const std::vector<std::uint64_t>& seeds,
                               std::size_t budget, const CampaignOptions& opts) {
    std::vector<Cell> cells;
    for (auto seed : seeds) cells.push_back({"random#" + std::to_string(seed), random_opponent(seed, budget, s), seed});
    return run_cells(sys, cells, opts);
}

std::string CampaignReport::str() const {
    std::ostringstream os;
    os << cells << " runs, " << violations << " violation(s), " << exhausted << " hit the fuel bound\n";
    for (const auto& cx : counterexamples) {
        Printer pr;
        os << "counterexample: opponent " << cx.opponent << ", seed " << cx.seed << "\n";
        os << "  " << cx.verdict.str() << "\n";
        os << "  opponent: " << pr.process(cx.opponent_process, 2) << "\n";
        os << "  trace up to the violation:\n";
        std::istringstream lines(format_trace(cx.prefix, pr));
        for (std::string line; std::getline(lines, line);) os << "    " << line << "\n";
    }
    return os.str();
}

nlohmann::json CampaignReport::to_json() const {
    nlohmann::json j;
    j["runs"] = cells;
    j["violations"] = violations;
    j["fuel_exhausted"] = exhausted;
    j["counterexamples"] = nlohmann::json::array();
    for (const auto& cx : counterexamples) {
        Printer pr;
        j["counterexamples"].push_back({{"opponent", cx.opponent},
                                        {"seed", cx.seed},
                                        {"verdict", cx.verdict.str()},
                                        {"opponent_process", pr.process(cx.opponent_process)},
                                        {"trace", trace_json(cx.prefix, pr)}});
    }
    return j;
}

} // namespace wsec::adversary
