#include "wsec/spi/runtime.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace wsec::spi {

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t combine(std::uint64_t h, std::uint64_t v) { return mix(h ^ (v + 0x632be59bd9b4e019ull + (h << 6))); }

// Hashing that renames run-time generated names canonically (or collapses
// them entirely in generic mode).  Subtrees without such names use their
// cached structural hash.
class Canon {
public:
    explicit Canon(bool generic) : generic_(generic) {}

    std::uint64_t name(const Name& n) {
        if (!n.runtime()) return n.hash();
        if (generic_) return 0x5bd1e995ull;
        auto [it, inserted] = ids_.emplace(n, ids_.size());
        return combine(0x27d4eb2full, it->second);
    }

    std::uint64_t msg(const MsgPtr& m) {
        if (!m->runtime) return m->hash;
        std::uint64_t h = combine(static_cast<std::uint64_t>(m->kind) + 1, m->kids.size());
        if (m->is_name()) return combine(h, name(m->name));
        if (m->kind == MsgKind::Tagged) h = combine(h, m->tag.index());
        if (m->kind == MsgKind::KeyPart) h = combine(h, static_cast<std::uint64_t>(m->attr));
        for (const auto& k : m->kids) h = combine(h, msg(k));
        return h;
    }

    std::uint64_t type(const TypePtr& t) {
        if (!t) return 0;
        if (!t->runtime) return t->hash;
        std::uint64_t h = combine(static_cast<std::uint64_t>(t->kind) + 100, t->fields.size());
        for (const auto& [x, ft] : t->fields) h = combine(h, type(ft));
        for (const auto& [tag, ct] : t->cases) h = combine(combine(h, tag.index()), type(ct));
        h = combine(h, type(t->inner));
        h = combine(h, static_cast<std::uint64_t>(t->attr) * 3 + static_cast<std::uint64_t>(t->level));
        std::uint64_t sum = 0;
        for (const auto& e : t->effect)
            sum += mix(combine(combine(static_cast<std::uint64_t>(e.kind), msg(e.msg)), type(e.type)));
        return combine(h, sum);
    }

    std::uint64_t proc(const ProcPtr& p) {
        if (!p->runtime) return p->hash;
        std::uint64_t h = combine(static_cast<std::uint64_t>(p->kind) + 200, p->kids.size());
        for (const auto& m : p->msgs) h = combine(h, msg(m));
        for (const auto& b : p->binders) h = combine(combine(h, b.name.hash()), type(b.type));
        for (auto t : p->tags) h = combine(h, t.index());
        h = combine(h, type(p->type));
        for (const auto& k : p->kids) h = combine(h, proc(k));
        return h;
    }

private:
    bool generic_;
    std::unordered_map<Name, std::uint64_t> ids_;
};

bool is_local(ProcKind k) {
    switch (k) {
    case ProcKind::New:
    case ProcKind::Split:
    case ProcKind::Match:
    case ProcKind::Case:
    case ProcKind::IfEq:
    case ProcKind::SymDec:
    case ProcKind::AsymDec:
    case ProcKind::CheckNonce:
    case ProcKind::Cast:
    case ProcKind::Witness:
    case ProcKind::Trust: return true;
    default: return false;
    }
}

// Fires a local step.  Returns false on deadlock.
bool fire_local(const ProcPtr& p, Configuration& c, std::vector<ProcPtr>& out) {
    auto bind1 = [&](const MsgPtr& m) { out.push_back(subst(p->kids[0], p->binders[0].name, m)); };
    switch (p->kind) {
    case ProcKind::New: {
        Name fresh{p->binders[0].name.id, kRuntimeStamp | c.next_fresh++};
        bind1(m_name(fresh));
        return true;
    }
    case ProcKind::Split: {
        const MsgPtr& m = p->msgs[0];
        if (m->kind != MsgKind::Record || m->kids.size() != p->binders.size()) return false;
        Subst s;
        for (std::size_t i = 0; i < m->kids.size(); ++i) s.emplace_back(p->binders[i].name, m->kids[i]);
        // Later binders shadow earlier ones with the same name.
        std::reverse(s.begin(), s.end());
        Subst uniq;
        for (auto& e : s)
            if (std::none_of(uniq.begin(), uniq.end(), [&](const auto& u) { return u.first == e.first; }))
                uniq.push_back(e);
        out.push_back(subst(p->kids[0], uniq));
        return true;
    }
    case ProcKind::Match: {
        const MsgPtr& m = p->msgs[0];
        if (m->kind != MsgKind::Record || m->kids.size() != 2 || !msg_eq(m->kids[0], p->msgs[1])) return false;
        bind1(m->kids[1]);
        return true;
    }
    case ProcKind::Case: {
        const MsgPtr& m = p->msgs[0];
        if (m->kind != MsgKind::Tagged) return false;
        for (std::size_t i = 0; i < p->tags.size(); ++i) {
            if (p->tags[i] != m->tag) continue;
            out.push_back(subst(p->kids[i], p->binders[i].name, m->kids[0]));
            return true;
        }
        return false;
    }
    case ProcKind::IfEq:
        out.push_back(msg_eq(p->msgs[0], p->msgs[1]) ? p->kids[0] : p->kids[1]);
        return true;
    case ProcKind::SymDec: {
        const MsgPtr& m = p->msgs[0];
        if (m->kind != MsgKind::SymEnc || !msg_eq(m->kids[1], p->msgs[1])) return false;
        bind1(m->kids[0]);
        return true;
    }
    case ProcKind::AsymDec: {
        const MsgPtr& m = p->msgs[0];
        const MsgPtr& k = p->msgs[1];
        if (m->kind != MsgKind::AsymEnc) return false;
        const MsgPtr& ek = m->kids[1];
        if (ek->kind != MsgKind::KeyPart || ek->attr != KeyAttr::Encrypt) return false;
        if (k->kind != MsgKind::KeyPart || k->attr != KeyAttr::Decrypt) return false;
        if (!msg_eq(ek->kids[0], k->kids[0])) return false;
        bind1(m->kids[0]);
        return true;
    }
    case ProcKind::CheckNonce: {
        const MsgPtr& a = p->msgs[0];
        const MsgPtr& b = p->msgs[1];
        if (!a->is_name() || !b->is_name() || a->name != b->name) return false;
        if (c.record_audit) c.audit.push_back({AuditEntry::Kind::Check, a, nullptr});
        out.push_back(p->kids[0]);
        return true;
    }
    case ProcKind::Cast:
        if (c.record_audit) c.audit.push_back({AuditEntry::Kind::Cast, p->msgs[0], p->binders[0].type});
        bind1(p->msgs[0]);
        return true;
    case ProcKind::Trust:
        if (c.record_audit) c.audit.push_back({AuditEntry::Kind::Trust, p->msgs[0], p->binders[0].type});
        bind1(p->msgs[0]);
        return true;
    case ProcKind::Witness:
        if (c.record_audit) c.audit.push_back({AuditEntry::Kind::Witness, p->msgs[0], p->type});
        out.push_back(p->kids[0]);
        return true;
    default: return false;
    }
}

struct Action {
    enum class Kind : std::uint8_t { Local, Begin, End, Comm };
    Kind kind;
    std::size_t i = 0; // acting process, or the output
    std::size_t j = 0; // the input, for Comm
};

std::vector<Action> enabled(const Configuration& c, bool with_local) {
    std::vector<Action> out;
    std::vector<std::size_t> outs, ins;
    for (std::size_t i = 0; i < c.procs.size(); ++i) {
        ProcKind k = c.procs[i]->kind;
        if (k == ProcKind::Begin) out.push_back({Action::Kind::Begin, i});
        else if (k == ProcKind::End) out.push_back({Action::Kind::End, i});
        else if (k == ProcKind::Out) outs.push_back(i);
        else if (k == ProcKind::In || k == ProcKind::RepIn) ins.push_back(i);
        else if (with_local && is_local(k)) out.push_back({Action::Kind::Local, i});
    }
    for (std::size_t o : outs)
        for (std::size_t n : ins)
            if (msg_eq(c.procs[o]->msgs[0], c.procs[n]->msgs[0])) out.push_back({Action::Kind::Comm, o, n});
    return out;
}

void remove_indices(std::vector<ProcPtr>& v, std::size_t a, std::size_t b) {
    if (a < b) std::swap(a, b);
    v.erase(v.begin() + static_cast<std::ptrdiff_t>(a));
    if (b != a) v.erase(v.begin() + static_cast<std::ptrdiff_t>(b));
}

// Applies an action; returns false if a local step deadlocks (the process is
// then left in place, stuck).
bool apply(Configuration& c, const Action& a) {
    ++c.steps;
    switch (a.kind) {
    case Action::Kind::Local: {
        ProcPtr p = c.procs[a.i];
        std::vector<ProcPtr> res;
        if (!fire_local(p, c, res)) {
            --c.steps;
            return false;
        }
        c.procs.erase(c.procs.begin() + static_cast<std::ptrdiff_t>(a.i));
        for (const auto& r : res) c.add(r);
        return true;
    }
    case Action::Kind::Begin:
    case Action::Kind::End: {
        ProcPtr p = c.procs[a.i];
        c.trace.push_back({a.kind == Action::Kind::Begin ? Event::Kind::Begin : Event::Kind::End, p->msgs[0]});
        c.procs.erase(c.procs.begin() + static_cast<std::ptrdiff_t>(a.i));
        c.add(p->kids[0]);
        return true;
    }
    case Action::Kind::Comm: {
        ProcPtr o = c.procs[a.i];
        ProcPtr in = c.procs[a.j];
        if (c.record_wire) c.wire.push_back({o->msgs[0], o->msgs[1]});
        ProcPtr cont = subst(in->kids[0], in->binders[0].name, o->msgs[1]);
        if (in->kind == ProcKind::RepIn) c.procs.erase(c.procs.begin() + static_cast<std::ptrdiff_t>(a.i));
        else remove_indices(c.procs, a.i, a.j);
        c.add(cont);
        return true;
    }
    }
    return false;
}

} // namespace

// ---- configuration ----

Configuration Configuration::of(const ProcPtr& p) {
    Configuration c;
    c.add(p);
    return c;
}

void Configuration::add(const ProcPtr& p) {
    if (p->kind == ProcKind::Stop) return;
    if (p->kind == ProcKind::Par) {
        add(p->kids[0]);
        add(p->kids[1]);
        return;
    }
    procs.push_back(p);
}

ProcPtr Configuration::as_process() const { return p_par(procs); }

std::uint64_t Configuration::key() const {
    Canon generic(true);
    std::vector<std::pair<std::uint64_t, std::size_t>> order;
    order.reserve(procs.size());
    for (std::size_t i = 0; i < procs.size(); ++i) order.emplace_back(generic.proc(procs[i]), i);
    std::sort(order.begin(), order.end());
    Canon canon(false);
    std::uint64_t h = combine(0xc0ffee, procs.size());
    for (const auto& [g, i] : order) h = combine(h, canon.proc(procs[i]));
    h = combine(h, trace.size());
    for (const auto& e : trace) h = combine(combine(h, static_cast<std::uint64_t>(e.kind)), canon.msg(e.label));
    return h;
}

std::vector<Configuration> reduce_step(const Configuration& c) {
    std::vector<Configuration> out;
    for (const auto& a : enabled(c, true)) {
        Configuration next = c;
        if (apply(next, a)) out.push_back(std::move(next));
    }
    return out;
}

void settle(Configuration& c) {
    std::deque<ProcPtr> work(c.procs.begin(), c.procs.end());
    c.procs.clear();
    while (!work.empty()) {
        ProcPtr p = std::move(work.front());
        work.pop_front();
        if (p->kind == ProcKind::Stop) continue;
        if (p->kind == ProcKind::Par) {
            work.push_front(p->kids[1]);
            work.push_front(p->kids[0]);
            continue;
        }
        if (!is_local(p->kind)) {
            c.procs.push_back(std::move(p));
            continue;
        }
        std::vector<ProcPtr> res;
        if (fire_local(p, c, res)) {
            ++c.steps;
            for (auto it = res.rbegin(); it != res.rend(); ++it) work.push_front(*it);
        }
        // a deadlocked local step can never fire later: drop it
    }
}

std::vector<Configuration> scheduled_steps(const Configuration& c) {
    std::vector<Configuration> out;
    for (const auto& a : enabled(c, false)) {
        Configuration next = c;
        apply(next, a);
        settle(next);
        out.push_back(std::move(next));
    }
    return out;
}

// ---- safety ----

SafetyVerdict check_safety(const EventTrace& t) {
    std::vector<const MsgPtr*> open;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const Event& e = t[i];
        if (e.kind == Event::Kind::Begin) {
            open.push_back(&e.label);
            continue;
        }
        auto it = std::find_if(open.begin(), open.end(), [&](const MsgPtr* b) { return msg_eq(*b, e.label); });
        if (it != open.end()) {
            open.erase(it);
            continue;
        }
        SafetyVerdict v;
        v.safe = false;
        v.index = i;
        v.label = e.label;
        for (std::size_t k = 0; k < i; ++k)
            if (t[k].kind == Event::Kind::Begin && msg_eq(t[k].label, e.label)) ++v.prior_begins;
        return v;
    }
    return {};
}

std::string SafetyVerdict::str() const {
    if (safe) return "safe";
    return "violation at event " + std::to_string(index) + ": end " + print_message(label) + " with " +
           std::to_string(prior_begins) + " matching begin(s) before it";
}

std::vector<AuditIssue> audit_issues(const std::vector<AuditEntry>& audit) {
    struct Count {
        MsgPtr nonce;
        std::size_t checks = 0, casts = 0;
    };
    std::vector<Count> counts;
    auto slot = [&](const MsgPtr& m) -> Count& {
        for (auto& c : counts)
            if (msg_eq(c.nonce, m)) return c;
        counts.push_back({m});
        return counts.back();
    };
    for (const auto& e : audit) {
        if (e.kind == AuditEntry::Kind::Check) ++slot(e.msg).checks;
        else if (e.kind == AuditEntry::Kind::Cast) ++slot(e.msg).casts;
    }
    std::vector<AuditIssue> out;
    for (const auto& c : counts) {
        if (c.checks <= c.casts) continue;
        out.push_back({c.checks > 1 ? AuditIssue::Kind::DoubleCheck : AuditIssue::Kind::CheckWithoutCast, c.nonce,
                       c.checks, c.casts});
    }
    return out;
}

std::string AuditIssue::str() const {
    return std::string(kind == Kind::DoubleCheck ? "nonce checked more than once: " : "nonce checked without a cast: ") +
           print_message(nonce) + " (" + std::to_string(checks) + " check(s), " + std::to_string(casts) + " cast(s))";
}

// ---- runs ----

RunResult run(Configuration c, std::uint64_t seed, std::uint64_t fuel, bool eager) {
    std::mt19937_64 rng(seed);
    RunResult r;
    if (eager) settle(c);
    while (true) {
        auto acts = enabled(c, !eager);
        if (acts.empty()) break;
        if (r.steps >= fuel) {
            r.fuel_exhausted = true;
            break;
        }
        // Locally deadlocked processes are dropped so they do not keep being chosen.
        const Action& a = acts[std::uniform_int_distribution<std::size_t>(0, acts.size() - 1)(rng)];
        if (!apply(c, a)) {
            c.procs.erase(c.procs.begin() + static_cast<std::ptrdiff_t>(a.i));
            continue;
        }
        ++r.steps;
        if (eager) settle(c);
    }
    r.trace = c.trace;
    r.final = std::move(c);
    return r;
}

ExploreResult explore_all(const Configuration& start, const ExploreOptions& opts) {
    ExploreResult r;
    Configuration c0 = start;
    settle(c0);
    std::deque<std::pair<Configuration, std::size_t>> queue;
    std::unordered_set<std::uint64_t> seen{c0.key()};
    std::unordered_set<std::uint64_t> trace_keys;
    auto note_violation = [&](const Configuration& c) {
        if (r.violation || c.trace.empty() || c.trace.back().kind != Event::Kind::End) return;
        SafetyVerdict v = check_safety(c.trace);
        if (!v.safe) {
            r.violation = v;
            r.violating_trace = c.trace;
        }
    };
    queue.emplace_back(std::move(c0), 0);
    r.states = 1;
    while (!queue.empty()) {
        auto [c, depth] = std::move(queue.front());
        queue.pop_front();
        auto succ = scheduled_steps(c);
        if (succ.empty()) {
            Configuration tc;
            tc.trace = c.trace;
            if (trace_keys.insert(tc.key()).second) r.traces.push_back(c.trace);
            if (opts.keep_terminals) r.terminals.push_back(std::move(c));
            continue;
        }
        if (depth >= opts.max_depth) {
            r.exhaustive = false;
            continue;
        }
        for (auto& s : succ) {
            note_violation(s);
            if (r.violation && opts.stop_on_violation) {
                r.exhaustive = false;
                return r;
            }
            if (!seen.insert(s.key()).second) continue;
            if (r.states >= opts.max_states) {
                r.exhaustive = false;
                return r;
            }
            ++r.states;
            queue.emplace_back(std::move(s), depth + 1);
        }
    }
    return r;
}

// ---- output ----

std::string format_trace(const EventTrace& t, Printer& pr) {
    std::string s;
    for (const auto& e : t) s += (e.kind == Event::Kind::Begin ? "begin " : "end ") + pr.message(e.label) + "\n";
    return s;
}

std::string format_trace(const EventTrace& t) {
    Printer pr;
    return format_trace(t, pr);
}

nlohmann::json trace_json(const EventTrace& t, Printer& pr) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& e : t)
        a.push_back({{"event", e.kind == Event::Kind::Begin ? "begin" : "end"}, {"label", pr.message(e.label)}});
    return a;
}

bool trace_eq(const EventTrace& a, const EventTrace& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].kind != b[i].kind || !msg_eq(a[i].label, b[i].label)) return false;
    return true;
}

} // namespace wsec::spi
