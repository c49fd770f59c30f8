#include "wsec/spi/ast.hpp"

#include <algorithm>
#include <atomic>
#include <deque>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

namespace wsec::spi {

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t combine(std::uint64_t h, std::uint64_t v) { return mix(h ^ (v + 0x632be59bd9b4e019ull + (h << 6))); }

struct SymbolTable {
    std::shared_mutex mu;
    std::deque<std::string> names{""};
    std::unordered_map<std::string, std::uint32_t> index{{"", 0}};
};

SymbolTable& symbols() {
    static SymbolTable t;
    return t;
}

std::atomic<std::uint64_t> g_rename_counter{1};

} // namespace

Symbol::Symbol(std::string_view s) {
    auto& t = symbols();
    std::string key(s);
    {
        std::shared_lock lock(t.mu);
        if (auto it = t.index.find(key); it != t.index.end()) {
            idx_ = it->second;
            return;
        }
    }
    std::unique_lock lock(t.mu);
    auto [it, inserted] = t.index.emplace(key, static_cast<std::uint32_t>(t.names.size()));
    if (inserted) t.names.push_back(key);
    idx_ = it->second;
}

const std::string& Symbol::str() const {
    auto& t = symbols();
    std::shared_lock lock(t.mu);
    return t.names[idx_];
}

std::uint64_t Name::hash() const { return mix(combine(id.index(), stamp)); }

Name source_name(std::string_view id) { return Name{Symbol(id), 0}; }

Name renamed(const Name& n) { return Name{n.id, g_rename_counter.fetch_add(1, std::memory_order_relaxed)}; }

// ---- messages ----

namespace {

MsgPtr finish(Message m) {
    std::uint64_t h = combine(static_cast<std::uint64_t>(m.kind) + 1, 0);
    std::uint64_t f = 0;
    std::uint32_t size = 1;
    switch (m.kind) {
    case MsgKind::Name:
        h = combine(h, m.name.hash());
        f = m.name.filter_bit();
        m.runtime = m.name.runtime();
        break;
    case MsgKind::Tagged: h = combine(h, mix(m.tag.index())); break;
    case MsgKind::KeyPart: h = combine(h, static_cast<std::uint64_t>(m.attr)); break;
    default: h = combine(h, m.kids.size()); break;
    }
    for (const auto& k : m.kids) {
        h = combine(h, k->hash);
        f |= k->filter;
        size += k->size;
        m.runtime |= k->runtime;
    }
    m.hash = h;
    m.filter = f;
    m.size = size;
    return std::make_shared<const Message>(std::move(m));
}

} // namespace

MsgPtr m_name(const Name& n) {
    Message m{MsgKind::Name};
    m.name = n;
    return finish(std::move(m));
}

MsgPtr m_name(std::string_view id) { return m_name(source_name(id)); }

MsgPtr m_record(std::vector<MsgPtr> fields) {
    Message m{MsgKind::Record};
    m.kids = std::move(fields);
    return finish(std::move(m));
}

MsgPtr m_pair(MsgPtr a, MsgPtr b) { return m_record({std::move(a), std::move(b)}); }

MsgPtr m_tagged(Symbol tag, MsgPtr body) {
    Message m{MsgKind::Tagged};
    m.tag = tag;
    m.kids = {std::move(body)};
    return finish(std::move(m));
}

MsgPtr m_tagged(std::string_view tag, MsgPtr body) { return m_tagged(Symbol(tag), std::move(body)); }

MsgPtr m_symenc(MsgPtr plain, MsgPtr key) {
    Message m{MsgKind::SymEnc};
    m.kids = {std::move(plain), std::move(key)};
    return finish(std::move(m));
}

MsgPtr m_asymenc(MsgPtr plain, MsgPtr key) {
    Message m{MsgKind::AsymEnc};
    m.kids = {std::move(plain), std::move(key)};
    return finish(std::move(m));
}

MsgPtr m_keypart(KeyAttr a, MsgPtr pair) {
    Message m{MsgKind::KeyPart};
    m.attr = a;
    m.kids = {std::move(pair)};
    return finish(std::move(m));
}

MsgPtr m_nest(const std::vector<MsgPtr>& parts) {
    if (parts.empty()) return m_record({});
    MsgPtr acc = parts.back();
    for (std::size_t i = parts.size() - 1; i-- > 0;) acc = m_pair(parts[i], acc);
    return acc;
}

bool msg_eq(const MsgPtr& a, const MsgPtr& b) {
    if (a == b) return true;
    if (a->hash != b->hash || a->kind != b->kind || a->kids.size() != b->kids.size()) return false;
    switch (a->kind) {
    case MsgKind::Name: return a->name == b->name;
    case MsgKind::Tagged:
        if (a->tag != b->tag) return false;
        break;
    case MsgKind::KeyPart:
        if (a->attr != b->attr) return false;
        break;
    default: break;
    }
    for (std::size_t i = 0; i < a->kids.size(); ++i)
        if (!msg_eq(a->kids[i], b->kids[i])) return false;
    return true;
}

bool mentions(const MsgPtr& m, const Name& n) {
    if (!(m->filter & n.filter_bit())) return false;
    if (m->is_name()) return m->name == n;
    for (const auto& k : m->kids)
        if (mentions(k, n)) return true;
    return false;
}

void collect_names(const MsgPtr& m, std::set<Name>& out) {
    if (m->is_name()) out.insert(m->name);
    for (const auto& k : m->kids) collect_names(k, out);
}

// ---- types ----

namespace {

std::uint64_t effect_hash(const Effect& es, std::uint64_t& filter, bool& runtime) {
    // Order-insensitive: sum of element hashes.
    std::uint64_t sum = 0;
    for (const auto& e : es) {
        std::uint64_t h = combine(static_cast<std::uint64_t>(e.kind) + 7, e.msg->hash);
        filter |= e.msg->filter;
        runtime |= e.msg->runtime;
        if (e.kind == AtomicEffect::Kind::Check) h = combine(h, static_cast<std::uint64_t>(e.level));
        if (e.type) {
            h = combine(h, e.type->hash);
            filter |= e.type->filter;
            runtime |= e.type->runtime;
        }
        sum += mix(h);
    }
    return sum;
}

TypePtr finish(Type t) {
    // null components stand for Un
    for (auto& f : t.fields)
        if (!f.second) f.second = t_un();
    for (auto& c : t.cases)
        if (!c.second) c.second = t_un();
    for (auto& e : t.effect)
        if (e.kind == AtomicEffect::Kind::Trust && !e.type) e.type = t_un();
    if (!t.inner && (t.kind == TypeKind::SharedKey || t.kind == TypeKind::KeyPair || t.kind == TypeKind::Key))
        t.inner = t_un();
    std::uint64_t h = combine(static_cast<std::uint64_t>(t.kind) + 100, 0);
    std::uint64_t f = 0;
    bool rt = false;
    for (const auto& [x, ft] : t.fields) {
        h = combine(h, ft->hash); // binder names do not contribute, keeping the hash alpha-invariant
        f |= ft->filter | x.filter_bit();
        rt |= ft->runtime;
    }
    for (const auto& [tag, ct] : t.cases) {
        h = combine(combine(h, mix(tag.index())), ct->hash);
        f |= ct->filter;
        rt |= ct->runtime;
    }
    if (t.inner) {
        h = combine(h, t.inner->hash);
        f |= t.inner->filter;
        rt |= t.inner->runtime;
    }
    h = combine(h, static_cast<std::uint64_t>(t.attr) * 3 + static_cast<std::uint64_t>(t.level));
    h = combine(h, effect_hash(t.effect, f, rt));
    t.runtime = rt;
    t.hash = h;
    t.filter = f;
    return std::make_shared<const Type>(std::move(t));
}

} // namespace

TypePtr t_un() {
    static const TypePtr u = finish(Type{TypeKind::Un});
    return u;
}

TypePtr t_top() {
    static const TypePtr u = finish(Type{TypeKind::Top});
    return u;
}

TypePtr t_record(std::vector<std::pair<Name, TypePtr>> fields) {
    Type t{TypeKind::Record};
    t.fields = std::move(fields);
    return finish(std::move(t));
}

TypePtr t_union(std::vector<std::pair<Symbol, TypePtr>> cases) {
    Type t{TypeKind::Union};
    t.cases = std::move(cases);
    return finish(std::move(t));
}

TypePtr t_shared_key(TypePtr inner) {
    Type t{TypeKind::SharedKey};
    t.inner = std::move(inner);
    return finish(std::move(t));
}

TypePtr t_key_pair(TypePtr inner) {
    Type t{TypeKind::KeyPair};
    t.inner = std::move(inner);
    return finish(std::move(t));
}

TypePtr t_key(KeyAttr a, TypePtr inner) {
    Type t{TypeKind::Key};
    t.attr = a;
    t.inner = std::move(inner);
    return finish(std::move(t));
}

TypePtr t_challenge(NonceLevel l, Effect es) {
    Type t{TypeKind::Challenge};
    t.level = l;
    t.effect = std::move(es);
    return finish(std::move(t));
}

TypePtr t_response(NonceLevel l, Effect fs) {
    Type t{TypeKind::Response};
    t.level = l;
    t.effect = std::move(fs);
    return finish(std::move(t));
}

AtomicEffect e_end(MsgPtr label) { return {AtomicEffect::Kind::End, std::move(label), NonceLevel::Public, nullptr}; }
AtomicEffect e_check(NonceLevel l, MsgPtr nonce) { return {AtomicEffect::Kind::Check, std::move(nonce), l, nullptr}; }
AtomicEffect e_trust(MsgPtr m, TypePtr t) {
    return {AtomicEffect::Kind::Trust, std::move(m), NonceLevel::Public, std::move(t)};
}

bool is_un(const TypePtr& t) { return !t || t->kind == TypeKind::Un; }

bool is_public(const TypePtr& t) {
    if (is_un(t)) return true;
    switch (t->kind) {
    case TypeKind::Record:
        return std::all_of(t->fields.begin(), t->fields.end(), [](const auto& f) { return is_public(f.second); });
    case TypeKind::Union:
        return std::all_of(t->cases.begin(), t->cases.end(), [](const auto& c) { return is_public(c.second); });
    case TypeKind::Top: return false;
    case TypeKind::SharedKey:
    case TypeKind::KeyPair: return is_public(t->inner) && is_tainted(t->inner);
    case TypeKind::Key: return t->attr == KeyAttr::Encrypt ? is_tainted(t->inner) : is_public(t->inner);
    case TypeKind::Challenge: return t->level == NonceLevel::Public && t->effect.empty();
    case TypeKind::Response: return t->level == NonceLevel::Public;
    default: return true;
    }
}

bool is_tainted(const TypePtr& t) {
    if (is_un(t)) return true;
    switch (t->kind) {
    case TypeKind::Record:
        return std::all_of(t->fields.begin(), t->fields.end(), [](const auto& f) { return is_tainted(f.second); });
    case TypeKind::Union:
        return std::all_of(t->cases.begin(), t->cases.end(), [](const auto& c) { return is_tainted(c.second); });
    case TypeKind::Top: return true;
    case TypeKind::SharedKey:
    case TypeKind::KeyPair: return is_public(t->inner) && is_tainted(t->inner);
    case TypeKind::Key: return t->attr == KeyAttr::Encrypt ? is_public(t->inner) : is_tainted(t->inner);
    case TypeKind::Challenge:
    case TypeKind::Response: return t->level == NonceLevel::Private || t->effect.empty();
    default: return true;
    }
}

// ---- processes ----

std::string_view to_string(ProcKind k) {
    switch (k) {
    case ProcKind::Out: return "out";
    case ProcKind::In: return "in";
    case ProcKind::RepIn: return "repeat in";
    case ProcKind::Split: return "split";
    case ProcKind::Match: return "match";
    case ProcKind::Case: return "case";
    case ProcKind::IfEq: return "if";
    case ProcKind::New: return "new";
    case ProcKind::Par: return "par";
    case ProcKind::Stop: return "stop";
    case ProcKind::SymDec: return "decrypt";
    case ProcKind::AsymDec: return "decrypt-asym";
    case ProcKind::CheckNonce: return "check";
    case ProcKind::Begin: return "begin";
    case ProcKind::End: return "end";
    case ProcKind::Cast: return "cast";
    case ProcKind::Witness: return "witness";
    case ProcKind::Trust: return "trust";
    }
    return "?";
}

namespace {

ProcPtr finish(Process p) {
    for (auto& b : p.binders)
        if (b.type && b.type->kind == TypeKind::Un) b.type = nullptr;
    if (p.kind == ProcKind::Witness && !p.type) p.type = t_un();
    std::uint64_t h = combine(static_cast<std::uint64_t>(p.kind) + 200, p.kids.size());
    std::uint64_t f = 0;
    std::uint32_t size = 1;
    bool rt = false;
    for (const auto& m : p.msgs) {
        h = combine(h, m->hash);
        f |= m->filter;
        rt |= m->runtime;
    }
    for (const auto& b : p.binders) {
        h = combine(h, b.name.hash());
        f |= b.name.filter_bit();
        if (b.type) {
            h = combine(h, b.type->hash);
            f |= b.type->filter;
            rt |= b.type->runtime;
        }
    }
    for (auto t : p.tags) h = combine(h, mix(t.index()));
    if (p.type) {
        h = combine(h, p.type->hash);
        f |= p.type->filter;
        rt |= p.type->runtime;
    }
    for (const auto& k : p.kids) {
        h = combine(h, k->hash);
        f |= k->filter;
        size += k->size;
        rt |= k->runtime;
    }
    p.runtime = rt;
    p.hash = h;
    p.filter = f;
    p.size = size;
    return std::make_shared<const Process>(std::move(p));
}

ProcPtr make(ProcKind k, std::vector<MsgPtr> msgs, std::vector<Binder> binders, std::vector<ProcPtr> kids,
             TypePtr type = nullptr, std::vector<Symbol> tags = {}) {
    Process p{k};
    p.msgs = std::move(msgs);
    p.binders = std::move(binders);
    p.kids = std::move(kids);
    p.type = std::move(type);
    p.tags = std::move(tags);
    return finish(std::move(p));
}

} // namespace

Binder un(const Name& n) { return {n, nullptr}; }
Binder un(std::string_view id) { return {source_name(id), nullptr}; }

ProcPtr p_out(MsgPtr chan, MsgPtr payload) { return make(ProcKind::Out, {std::move(chan), std::move(payload)}, {}, {}); }
ProcPtr p_in(MsgPtr chan, Binder x, ProcPtr p) { return make(ProcKind::In, {std::move(chan)}, {std::move(x)}, {std::move(p)}); }
ProcPtr p_rep_in(MsgPtr chan, Binder x, ProcPtr p) {
    return make(ProcKind::RepIn, {std::move(chan)}, {std::move(x)}, {std::move(p)});
}
ProcPtr p_split(MsgPtr m, std::vector<Binder> xs, ProcPtr p) {
    return make(ProcKind::Split, {std::move(m)}, std::move(xs), {std::move(p)});
}
ProcPtr p_match(MsgPtr m, MsgPtr n, Binder y, ProcPtr p) {
    return make(ProcKind::Match, {std::move(m), std::move(n)}, {std::move(y)}, {std::move(p)});
}
ProcPtr p_case(MsgPtr m, std::vector<CaseBranch> branches) {
    std::vector<Symbol> tags;
    std::vector<Binder> bs;
    std::vector<ProcPtr> kids;
    for (auto& b : branches) {
        tags.push_back(b.tag);
        bs.push_back(std::move(b.binder));
        kids.push_back(std::move(b.body));
    }
    return make(ProcKind::Case, {std::move(m)}, std::move(bs), std::move(kids), nullptr, std::move(tags));
}
ProcPtr p_if(MsgPtr m, MsgPtr n, ProcPtr then_p, ProcPtr else_p) {
    return make(ProcKind::IfEq, {std::move(m), std::move(n)}, {}, {std::move(then_p), std::move(else_p)});
}
ProcPtr p_new(Binder x, ProcPtr p) { return make(ProcKind::New, {}, {std::move(x)}, {std::move(p)}); }
ProcPtr p_par(ProcPtr p, ProcPtr q) { return make(ProcKind::Par, {}, {}, {std::move(p), std::move(q)}); }
ProcPtr p_par(const std::vector<ProcPtr>& ps) {
    if (ps.empty()) return p_stop();
    ProcPtr acc = ps.back();
    for (std::size_t i = ps.size() - 1; i-- > 0;) acc = p_par(ps[i], acc);
    return acc;
}
ProcPtr p_stop() {
    static const ProcPtr s = make(ProcKind::Stop, {}, {}, {});
    return s;
}
ProcPtr p_symdec(MsgPtr m, Binder x, MsgPtr key, ProcPtr p) {
    return make(ProcKind::SymDec, {std::move(m), std::move(key)}, {std::move(x)}, {std::move(p)});
}
ProcPtr p_asymdec(MsgPtr m, Binder x, MsgPtr key, ProcPtr p) {
    return make(ProcKind::AsymDec, {std::move(m), std::move(key)}, {std::move(x)}, {std::move(p)});
}
ProcPtr p_check(MsgPtr m, MsgPtr n, ProcPtr p) {
    return make(ProcKind::CheckNonce, {std::move(m), std::move(n)}, {}, {std::move(p)});
}
ProcPtr p_begin(MsgPtr label, ProcPtr p) { return make(ProcKind::Begin, {std::move(label)}, {}, {std::move(p)}); }
ProcPtr p_end(MsgPtr label, ProcPtr p) { return make(ProcKind::End, {std::move(label)}, {}, {std::move(p)}); }
ProcPtr p_cast(MsgPtr m, Binder x, ProcPtr p) { return make(ProcKind::Cast, {std::move(m)}, {std::move(x)}, {std::move(p)}); }
ProcPtr p_witness(MsgPtr m, TypePtr t, ProcPtr p) {
    return make(ProcKind::Witness, {std::move(m)}, {}, {std::move(p)}, std::move(t));
}
ProcPtr p_trust(MsgPtr m, Binder x, ProcPtr p) {
    return make(ProcKind::Trust, {std::move(m)}, {std::move(x)}, {std::move(p)});
}

ProcPtr p_rebuild(const Process& like, std::vector<MsgPtr> msgs, std::vector<Binder> binders,
                  std::vector<ProcPtr> kids, TypePtr type) {
    return make(like.kind, std::move(msgs), std::move(binders), std::move(kids), std::move(type), like.tags);
}

// ---- substitution ----

namespace {

std::uint64_t subst_filter(const Subst& s) {
    std::uint64_t f = 0;
    for (const auto& [x, m] : s) f |= x.filter_bit();
    return f;
}

const MsgPtr* lookup(const Subst& s, const Name& n) {
    for (const auto& [x, m] : s)
        if (x == n) return &m;
    return nullptr;
}

MsgPtr subst_msg(const MsgPtr& m, const Subst& s, std::uint64_t sf) {
    if (!(m->filter & sf)) return m;
    if (m->is_name()) {
        const MsgPtr* r = lookup(s, m->name);
        return r ? *r : m;
    }
    std::vector<MsgPtr> kids;
    kids.reserve(m->kids.size());
    bool changed = false;
    for (const auto& k : m->kids) {
        kids.push_back(subst_msg(k, s, sf));
        changed |= kids.back() != k;
    }
    if (!changed) return m;
    Message copy{m->kind};
    copy.name = m->name;
    copy.tag = m->tag;
    copy.attr = m->attr;
    copy.kids = std::move(kids);
    return finish(std::move(copy));
}

bool captured_by(const Subst& s, const Name& binder) {
    for (const auto& [x, m] : s)
        if (mentions(m, binder)) return true;
    return false;
}

// Adjust a substitution for going under `binder`.  The binder may be renamed.
Name enter_binder(Subst& s, const Name& binder) {
    s.erase(std::remove_if(s.begin(), s.end(), [&](const auto& e) { return e.first == binder; }), s.end());
    if (s.empty() || !captured_by(s, binder)) return binder;
    Name fresh = renamed(binder);
    s.emplace_back(binder, m_name(fresh));
    return fresh;
}

TypePtr subst_type(const TypePtr& t, const Subst& s, std::uint64_t sf);

Effect subst_effect(const Effect& es, const Subst& s, std::uint64_t sf) {
    Effect out;
    out.reserve(es.size());
    for (const auto& e : es)
        out.push_back({e.kind, subst_msg(e.msg, s, sf), e.level, e.type ? subst_type(e.type, s, sf) : nullptr});
    return out;
}

TypePtr subst_type(const TypePtr& t, const Subst& s, std::uint64_t sf) {
    if (!t || !(t->filter & sf)) return t;
    Type copy{t->kind};
    copy.attr = t->attr;
    copy.level = t->level;
    copy.cases.reserve(t->cases.size());
    for (const auto& [tag, ct] : t->cases) copy.cases.emplace_back(tag, subst_type(ct, s, sf));
    if (t->inner) copy.inner = subst_type(t->inner, s, sf);
    copy.effect = subst_effect(t->effect, s, sf);
    Subst cur = s;
    for (const auto& [x, ft] : t->fields) {
        TypePtr ft2 = cur.empty() ? ft : subst_type(ft, cur, subst_filter(cur));
        Name x2 = cur.empty() ? x : enter_binder(cur, x);
        copy.fields.emplace_back(x2, ft2);
    }
    return finish(std::move(copy));
}

ProcPtr subst_proc(const ProcPtr& p, const Subst& s, std::uint64_t sf) {
    if (s.empty() || !(p->filter & sf)) return p;
    std::vector<MsgPtr> msgs;
    msgs.reserve(p->msgs.size());
    for (const auto& m : p->msgs) msgs.push_back(subst_msg(m, s, sf));
    TypePtr type = subst_type(p->type, s, sf);
    std::vector<Binder> binders;
    std::vector<ProcPtr> kids;
    binders.reserve(p->binders.size());
    kids.reserve(p->kids.size());
    if (p->kind == ProcKind::Case) {
        for (std::size_t i = 0; i < p->kids.size(); ++i) {
            Subst inner = s;
            TypePtr bt = subst_type(p->binders[i].type, s, sf);
            Name x = enter_binder(inner, p->binders[i].name);
            binders.push_back({x, bt});
            kids.push_back(subst_proc(p->kids[i], inner, subst_filter(inner)));
        }
    } else {
        Subst inner = s;
        for (const auto& b : p->binders) {
            const Subst& scope = p->kind == ProcKind::Split ? inner : s;
            TypePtr bt = scope.empty() ? b.type : subst_type(b.type, scope, subst_filter(scope));
            Name x = enter_binder(inner, b.name);
            binders.push_back({x, bt});
        }
        std::uint64_t inf = subst_filter(inner);
        for (const auto& k : p->kids) kids.push_back(subst_proc(k, inner, inf));
    }
    return p_rebuild(*p, std::move(msgs), std::move(binders), std::move(kids), std::move(type));
}

} // namespace

MsgPtr subst(const MsgPtr& m, const Subst& s) { return subst_msg(m, s, subst_filter(s)); }
TypePtr subst(const TypePtr& t, const Subst& s) { return subst_type(t, s, subst_filter(s)); }
ProcPtr subst(const ProcPtr& p, const Subst& s) { return subst_proc(p, s, subst_filter(s)); }
ProcPtr subst(const ProcPtr& p, const Name& x, const MsgPtr& m) { return subst(p, Subst{{x, m}}); }

// ---- free names ----

namespace {

using Bound = std::vector<Name>;

bool is_bound(const Bound& b, const Name& n) { return std::find(b.begin(), b.end(), n) != b.end(); }

void fn_msg(const MsgPtr& m, const Bound& b, std::set<Name>& out) {
    if (m->is_name()) {
        if (!is_bound(b, m->name)) out.insert(m->name);
        return;
    }
    for (const auto& k : m->kids) fn_msg(k, b, out);
}

void fn_type(const TypePtr& t, Bound& b, std::set<Name>& out) {
    if (!t) return;
    for (const auto& [tag, ct] : t->cases) fn_type(ct, b, out);
    if (t->inner) fn_type(t->inner, b, out);
    for (const auto& e : t->effect) {
        fn_msg(e.msg, b, out);
        fn_type(e.type, b, out);
    }
    std::size_t mark = b.size();
    for (const auto& [x, ft] : t->fields) {
        fn_type(ft, b, out);
        b.push_back(x);
    }
    b.resize(mark);
}

void fn_proc(const ProcPtr& p, Bound& b, std::set<Name>& out) {
    for (const auto& m : p->msgs) fn_msg(m, b, out);
    fn_type(p->type, b, out);
    std::size_t mark = b.size();
    if (p->kind == ProcKind::Case) {
        for (std::size_t i = 0; i < p->kids.size(); ++i) {
            fn_type(p->binders[i].type, b, out);
            b.push_back(p->binders[i].name);
            fn_proc(p->kids[i], b, out);
            b.resize(mark);
        }
        return;
    }
    for (const auto& x : p->binders) {
        if (p->kind == ProcKind::Split) fn_type(x.type, b, out);
        else {
            Bound outer(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(mark));
            fn_type(x.type, outer, out);
        }
        b.push_back(x.name);
    }
    for (const auto& k : p->kids) fn_proc(k, b, out);
    b.resize(mark);
}

} // namespace

std::set<Name> free_names(const ProcPtr& p) {
    std::set<Name> out;
    Bound b;
    fn_proc(p, b, out);
    return out;
}

std::set<Name> free_names(const TypePtr& t) {
    std::set<Name> out;
    Bound b;
    fn_type(t, b, out);
    return out;
}

// ---- alpha-equivalence ----

namespace {

using Pairs = std::vector<std::pair<Name, Name>>;

bool name_eq(const Pairs& env, const Name& a, const Name& b) {
    for (auto it = env.rbegin(); it != env.rend(); ++it) {
        bool la = it->first == a, rb = it->second == b;
        if (la || rb) return la && rb;
    }
    return a == b;
}

bool msg_alpha(const Pairs& env, const MsgPtr& a, const MsgPtr& b) {
    if (env.empty()) return msg_eq(a, b);
    if (a->kind != b->kind || a->kids.size() != b->kids.size()) return false;
    if (a->kind == MsgKind::Name) return name_eq(env, a->name, b->name);
    if (a->kind == MsgKind::Tagged && a->tag != b->tag) return false;
    if (a->kind == MsgKind::KeyPart && a->attr != b->attr) return false;
    for (std::size_t i = 0; i < a->kids.size(); ++i)
        if (!msg_alpha(env, a->kids[i], b->kids[i])) return false;
    return true;
}

bool type_alpha(Pairs& env, const TypePtr& a, const TypePtr& b);

bool effect_alpha(Pairs& env, const Effect& a, const Effect& b) {
    if (a.size() != b.size()) return false;
    std::vector<bool> used(b.size(), false);
    for (const auto& e : a) {
        bool found = false;
        for (std::size_t j = 0; j < b.size() && !found; ++j) {
            if (used[j]) continue;
            const auto& f = b[j];
            if (e.kind != f.kind || e.level != f.level || !msg_alpha(env, e.msg, f.msg)) continue;
            if ((e.type == nullptr) != (f.type == nullptr)) continue;
            if (e.type && !type_alpha(env, e.type, f.type)) continue;
            used[j] = found = true;
        }
        if (!found) return false;
    }
    return true;
}

bool type_alpha(Pairs& env, const TypePtr& a, const TypePtr& b) {
    if (is_un(a) || is_un(b)) return is_un(a) && is_un(b);
    if (a == b && env.empty()) return true;
    if (a->kind != b->kind || a->attr != b->attr || a->level != b->level) return false;
    if (a->fields.size() != b->fields.size() || a->cases.size() != b->cases.size()) return false;
    if ((a->inner == nullptr) != (b->inner == nullptr)) return false;
    for (std::size_t i = 0; i < a->cases.size(); ++i)
        if (a->cases[i].first != b->cases[i].first || !type_alpha(env, a->cases[i].second, b->cases[i].second))
            return false;
    if (a->inner && !type_alpha(env, a->inner, b->inner)) return false;
    if (!effect_alpha(env, a->effect, b->effect)) return false;
    std::size_t mark = env.size();
    bool ok = true;
    for (std::size_t i = 0; i < a->fields.size() && ok; ++i) {
        ok = type_alpha(env, a->fields[i].second, b->fields[i].second);
        env.emplace_back(a->fields[i].first, b->fields[i].first);
    }
    env.resize(mark);
    return ok;
}

bool proc_alpha(Pairs& env, const ProcPtr& a, const ProcPtr& b) {
    if (a == b && env.empty()) return true;
    if (a->kind != b->kind || a->msgs.size() != b->msgs.size() || a->binders.size() != b->binders.size() ||
        a->kids.size() != b->kids.size() || a->tags != b->tags)
        return false;
    for (std::size_t i = 0; i < a->msgs.size(); ++i)
        if (!msg_alpha(env, a->msgs[i], b->msgs[i])) return false;
    if (!type_alpha(env, a->type, b->type)) return false;
    std::size_t mark = env.size();
    if (a->kind == ProcKind::Case) {
        for (std::size_t i = 0; i < a->kids.size(); ++i) {
            if (!type_alpha(env, a->binders[i].type, b->binders[i].type)) return false;
            env.emplace_back(a->binders[i].name, b->binders[i].name);
            bool ok = proc_alpha(env, a->kids[i], b->kids[i]);
            env.resize(mark);
            if (!ok) return false;
        }
        return true;
    }
    bool ok = true;
    for (std::size_t i = 0; i < a->binders.size() && ok; ++i) {
        if (a->kind == ProcKind::Split) {
            ok = type_alpha(env, a->binders[i].type, b->binders[i].type);
        } else {
            Pairs outer(env.begin(), env.begin() + static_cast<std::ptrdiff_t>(mark));
            ok = type_alpha(outer, a->binders[i].type, b->binders[i].type);
        }
        env.emplace_back(a->binders[i].name, b->binders[i].name);
    }
    for (std::size_t i = 0; i < a->kids.size() && ok; ++i) ok = proc_alpha(env, a->kids[i], b->kids[i]);
    env.resize(mark);
    return ok;
}

} // namespace

bool type_eq(const TypePtr& a, const TypePtr& b) {
    Pairs env;
    return type_alpha(env, a, b);
}

bool effect_eq(const Effect& a, const Effect& b) {
    Pairs env;
    return effect_alpha(env, a, b);
}

bool alpha_eq(const ProcPtr& a, const ProcPtr& b) {
    Pairs env;
    return proc_alpha(env, a, b);
}

// ---- predicates ----

bool is_opponent(const ProcPtr& p) {
    if (p->kind == ProcKind::Begin || p->kind == ProcKind::End) return false;
    if (!is_un(p->type)) return false;
    for (const auto& b : p->binders)
        if (!is_un(b.type)) return false;
    for (const auto& k : p->kids)
        if (!is_opponent(k)) return false;
    return true;
}

std::size_t count_kind(const ProcPtr& p, ProcKind k) {
    std::size_t n = p->kind == k ? 1 : 0;
    for (const auto& c : p->kids) n += count_kind(c, k);
    return n;
}

} // namespace wsec::spi
