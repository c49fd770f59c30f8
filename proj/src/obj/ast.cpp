#include "wsec/obj/ast.hpp"

#include <functional>
#include <mutex>

namespace wsec::obj {

namespace {

std::size_t mix(std::size_t h, std::size_t v) {
    return h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

std::size_t str_hash(const std::string& s) { return std::hash<std::string>{}(s); }

} // namespace

ValuePtr mk_var(std::string name) {
    auto v = std::make_shared<Value>();
    v->hash = mix(1, str_hash(name));
    v->has_vars = true;
    v->node = VarV{std::move(name)};
    return v;
}

ValuePtr mk_null() {
    static const ValuePtr null_value = [] {
        auto v = std::make_shared<Value>();
        v->node = NullV{};
        v->hash = 2;
        return v;
    }();
    return null_value;
}

ValuePtr mk_new(std::string cls, std::vector<ValuePtr> args) {
    auto v = std::make_shared<Value>();
    std::size_t h = mix(3, str_hash(cls));
    std::size_t depth = 0;
    for (const auto& a : args) {
        h = mix(h, a->hash);
        v->has_vars = v->has_vars || a->has_vars;
        depth = std::max(depth, a->depth);
    }
    v->hash = h;
    v->depth = depth + 1;
    v->node = NewV{std::move(cls), std::move(args)};
    return v;
}

ValuePtr mk_prin(std::string name) {
    auto v = std::make_shared<Value>();
    v->hash = mix(4, str_hash(name));
    v->node = PrinV{std::move(name)};
    return v;
}

// Numerals are shared and kept alive for the whole run, so deep ones are built
// once and never torn down recursively.
ValuePtr mk_num(std::size_t n) {
    static std::mutex mu;
    static auto& cache = *new std::vector<ValuePtr>(); // never destroyed
    std::lock_guard<std::mutex> lock(mu);
    if (cache.empty()) cache.push_back(mk_new("Num", {mk_null()}));
    while (cache.size() <= n) cache.push_back(mk_new("Num", {cache.back()}));
    return cache[n];
}

std::optional<std::size_t> as_num(const ValuePtr& v) {
    std::size_t layers = 0;
    const Value* cur = v.get();
    while (const auto* nv = std::get_if<NewV>(&cur->node)) {
        if (nv->cls != "Num" || nv->args.size() != 1) return std::nullopt;
        ++layers;
        cur = nv->args[0].get();
    }
    if (!cur->is_null() || layers == 0) return std::nullopt;
    return layers - 1;
}

bool value_eq(const ValuePtr& a, const ValuePtr& b) {
    if (a == b) return true;
    if (a->hash != b->hash || a->depth != b->depth) return false;
    if (a->node.index() != b->node.index()) return false;
    return std::visit(
        [&](const auto& x) -> bool {
            using T = std::decay_t<decltype(x)>;
            const auto& y = std::get<T>(b->node);
            if constexpr (std::is_same_v<T, VarV>) return x.name == y.name;
            else if constexpr (std::is_same_v<T, NullV>) return true;
            else if constexpr (std::is_same_v<T, PrinV>) return x.name == y.name;
            else {
                if (x.cls != y.cls || x.args.size() != y.args.size()) return false;
                for (std::size_t i = 0; i < x.args.size(); ++i)
                    if (!value_eq(x.args[i], y.args[i])) return false;
                return true;
            }
        },
        a->node);
}

// ---- bodies ----

namespace {
BodyPtr make_body(auto node, SourcePos pos) {
    auto b = std::make_shared<Body>();
    b->node = std::move(node);
    b->pos = pos;
    return b;
}
} // namespace

BodyPtr mk_val(ValuePtr v, SourcePos pos) { return make_body(ValB{std::move(v)}, pos); }
BodyPtr mk_let(std::string x, BodyPtr bound, BodyPtr body, SourcePos pos) {
    return make_body(LetB{std::move(x), std::move(bound), std::move(body)}, pos);
}
BodyPtr mk_if(ValuePtr u, ValuePtr v, BodyPtr a, BodyPtr b, SourcePos pos) {
    return make_body(IfB{std::move(u), std::move(v), std::move(a), std::move(b)}, pos);
}
BodyPtr mk_field(ValuePtr target, std::string f, SourcePos pos) {
    return make_body(FieldB{std::move(target), std::move(f)}, pos);
}
BodyPtr mk_invoke(ValuePtr target, std::string m, std::vector<ValuePtr> args, SourcePos pos) {
    return make_body(InvokeB{std::move(target), std::move(m), std::move(args)}, pos);
}
BodyPtr mk_call(std::string w, std::string m, std::vector<ValuePtr> args, SourcePos pos) {
    return make_body(CallB{std::move(w), std::move(m), std::move(args)}, pos);
}
BodyPtr mk_running(std::string p, BodyPtr a, SourcePos pos) {
    return make_body(RunningB{std::move(p), std::move(a)}, pos);
}

namespace {

void collect_fv(const ValuePtr& v, std::set<std::string>& out) {
    if (!v->has_vars) return;
    if (const auto* x = std::get_if<VarV>(&v->node)) out.insert(x->name);
    else if (const auto* n = std::get_if<NewV>(&v->node))
        for (const auto& a : n->args) collect_fv(a, out);
}

void collect_fv(const BodyPtr& a, std::set<std::string>& out) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, ValB>) collect_fv(n.value, out);
            else if constexpr (std::is_same_v<T, LetB>) {
                collect_fv(n.bound, out);
                std::set<std::string> inner;
                collect_fv(n.body, inner);
                inner.erase(n.var);
                out.insert(inner.begin(), inner.end());
            } else if constexpr (std::is_same_v<T, IfB>) {
                collect_fv(n.lhs, out);
                collect_fv(n.rhs, out);
                collect_fv(n.then_b, out);
                collect_fv(n.else_b, out);
            } else if constexpr (std::is_same_v<T, FieldB>) collect_fv(n.target, out);
            else if constexpr (std::is_same_v<T, InvokeB>) {
                collect_fv(n.target, out);
                for (const auto& u : n.args) collect_fv(u, out);
            } else if constexpr (std::is_same_v<T, CallB>) {
                for (const auto& u : n.args) collect_fv(u, out);
            } else collect_fv(n.body, out);
        },
        a->node);
}

} // namespace

std::set<std::string> free_vars(const ValuePtr& v) {
    std::set<std::string> out;
    collect_fv(v, out);
    return out;
}

std::set<std::string> free_vars(const BodyPtr& a) {
    std::set<std::string> out;
    collect_fv(a, out);
    return out;
}

bool contains_running(const BodyPtr& a) {
    if (const auto* l = a->as<LetB>()) return contains_running(l->bound) || contains_running(l->body);
    if (const auto* i = a->as<IfB>()) return contains_running(i->then_b) || contains_running(i->else_b);
    return a->as<RunningB>() != nullptr;
}

bool contains_call(const BodyPtr& a) {
    if (const auto* l = a->as<LetB>()) return contains_call(l->bound) || contains_call(l->body);
    if (const auto* i = a->as<IfB>()) return contains_call(i->then_b) || contains_call(i->else_b);
    if (const auto* r = a->as<RunningB>()) return contains_call(r->body);
    return a->as<CallB>() != nullptr;
}

std::size_t body_size(const BodyPtr& a) {
    if (const auto* l = a->as<LetB>()) return 1 + body_size(l->bound) + body_size(l->body);
    if (const auto* i = a->as<IfB>()) return 1 + body_size(i->then_b) + body_size(i->else_b);
    if (const auto* r = a->as<RunningB>()) return 1 + body_size(r->body);
    return 1;
}

// ---- substitution ----

namespace {

using Sigma = std::map<std::string, ValuePtr>;

ValuePtr subst_value(const ValuePtr& v, const Sigma& s) {
    if (!v->has_vars) return v;
    if (const auto* x = std::get_if<VarV>(&v->node)) {
        auto it = s.find(x->name);
        return it == s.end() ? v : it->second;
    }
    const auto& n = std::get<NewV>(v->node);
    std::vector<ValuePtr> args;
    args.reserve(n.args.size());
    for (const auto& a : n.args) args.push_back(subst_value(a, s));
    return mk_new(n.cls, std::move(args));
}

std::vector<ValuePtr> subst_values(const std::vector<ValuePtr>& vs, const Sigma& s) {
    std::vector<ValuePtr> out;
    out.reserve(vs.size());
    for (const auto& v : vs) out.push_back(subst_value(v, s));
    return out;
}

std::string fresh_variant(const std::string& base, const std::set<std::string>& avoid) {
    for (std::size_t i = 1;; ++i) {
        std::string cand = base + "_" + std::to_string(i);
        if (!avoid.count(cand)) return cand;
    }
}

BodyPtr subst_body(const BodyPtr& a, const Sigma& s) {
    if (s.empty()) return a;
    return std::visit(
        [&](const auto& n) -> BodyPtr {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, ValB>) return mk_val(subst_value(n.value, s), a->pos);
            else if constexpr (std::is_same_v<T, LetB>) {
                BodyPtr bound = subst_body(n.bound, s);
                std::set<std::string> body_fv = free_vars(n.body);
                Sigma inner;
                for (const auto& [k, v] : s)
                    if (k != n.var && body_fv.count(k)) inner.emplace(k, v);
                if (inner.empty()) return mk_let(n.var, bound, n.body, a->pos);
                std::set<std::string> range_fv;
                for (const auto& [k, v] : inner) collect_fv(v, range_fv);
                if (!range_fv.count(n.var)) return mk_let(n.var, bound, subst_body(n.body, inner), a->pos);
                std::set<std::string> avoid = body_fv;
                avoid.insert(range_fv.begin(), range_fv.end());
                for (const auto& [k, v] : inner) avoid.insert(k);
                std::string y = fresh_variant(n.var, avoid);
                inner.emplace(n.var, mk_var(y));
                return mk_let(y, bound, subst_body(n.body, inner), a->pos);
            } else if constexpr (std::is_same_v<T, IfB>) {
                return mk_if(subst_value(n.lhs, s), subst_value(n.rhs, s), subst_body(n.then_b, s),
                             subst_body(n.else_b, s), a->pos);
            } else if constexpr (std::is_same_v<T, FieldB>) {
                return mk_field(subst_value(n.target, s), n.field, a->pos);
            } else if constexpr (std::is_same_v<T, InvokeB>) {
                return mk_invoke(subst_value(n.target, s), n.method, subst_values(n.args, s), a->pos);
            } else if constexpr (std::is_same_v<T, CallB>) {
                return mk_call(n.service, n.method, subst_values(n.args, s), a->pos);
            } else {
                return mk_running(n.principal, subst_body(n.body, s), a->pos);
            }
        },
        a->node);
}

} // namespace

ValuePtr substitute(const ValuePtr& v, const std::string& x, const ValuePtr& by) {
    return subst_value(v, Sigma{{x, by}});
}

BodyPtr substitute(const BodyPtr& a, const std::string& x, const ValuePtr& by) {
    return subst_body(a, Sigma{{x, by}});
}

BodyPtr substitute(const BodyPtr& a, const std::map<std::string, ValuePtr>& sigma) { return subst_body(a, sigma); }

// ---- alpha equivalence ----

namespace {

using Binds = std::vector<std::pair<std::string, std::string>>;

// Position of the innermost binder for a name on one side, or -1.
long lookup(const Binds& b, const std::string& x, bool left) {
    for (long i = static_cast<long>(b.size()) - 1; i >= 0; --i)
        if ((left ? b[i].first : b[i].second) == x) return i;
    return -1;
}

bool alpha_value(const ValuePtr& a, const ValuePtr& b, const Binds& binds) {
    if (!a->has_vars && !b->has_vars) return value_eq(a, b);
    if (a->node.index() != b->node.index()) return false;
    if (const auto* x = std::get_if<VarV>(&a->node)) {
        const auto& y = std::get<VarV>(b->node);
        long i = lookup(binds, x->name, true), j = lookup(binds, y.name, false);
        if (i != j) return false;
        return i >= 0 || x->name == y.name;
    }
    if (const auto* n = std::get_if<NewV>(&a->node)) {
        const auto& m = std::get<NewV>(b->node);
        if (n->cls != m.cls || n->args.size() != m.args.size()) return false;
        for (std::size_t i = 0; i < n->args.size(); ++i)
            if (!alpha_value(n->args[i], m.args[i], binds)) return false;
        return true;
    }
    return value_eq(a, b);
}

bool alpha_values(const std::vector<ValuePtr>& a, const std::vector<ValuePtr>& b, const Binds& binds) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!alpha_value(a[i], b[i], binds)) return false;
    return true;
}

bool alpha_body(const BodyPtr& a, const BodyPtr& b, Binds& binds) {
    if (a->node.index() != b->node.index()) return false;
    return std::visit(
        [&](const auto& n) -> bool {
            using T = std::decay_t<decltype(n)>;
            const auto& m = std::get<T>(b->node);
            if constexpr (std::is_same_v<T, ValB>) return alpha_value(n.value, m.value, binds);
            else if constexpr (std::is_same_v<T, LetB>) {
                if (!alpha_body(n.bound, m.bound, binds)) return false;
                binds.emplace_back(n.var, m.var);
                bool ok = alpha_body(n.body, m.body, binds);
                binds.pop_back();
                return ok;
            } else if constexpr (std::is_same_v<T, IfB>) {
                return alpha_value(n.lhs, m.lhs, binds) && alpha_value(n.rhs, m.rhs, binds) &&
                       alpha_body(n.then_b, m.then_b, binds) && alpha_body(n.else_b, m.else_b, binds);
            } else if constexpr (std::is_same_v<T, FieldB>) {
                return n.field == m.field && alpha_value(n.target, m.target, binds);
            } else if constexpr (std::is_same_v<T, InvokeB>) {
                return n.method == m.method && alpha_value(n.target, m.target, binds) &&
                       alpha_values(n.args, m.args, binds);
            } else if constexpr (std::is_same_v<T, CallB>) {
                return n.service == m.service && n.method == m.method && alpha_values(n.args, m.args, binds);
            } else {
                return n.principal == m.principal && alpha_body(n.body, m.body, binds);
            }
        },
        a->node);
}

} // namespace

bool alpha_eq(const BodyPtr& a, const BodyPtr& b) {
    Binds binds;
    return alpha_body(a, b, binds);
}

// ---- environment ----

std::optional<std::size_t> ClassDef::field_index(const std::string& f) const {
    for (std::size_t i = 0; i < fields.size(); ++i)
        if (fields[i].first == f) return i;
    return std::nullopt;
}

const MethodDef* ClassDef::method(const std::string& m) const {
    auto it = methods.find(m);
    return it == methods.end() ? nullptr : &it->second;
}

const ClassDef* ExecutionEnvironment::find_class(const std::string& c) const {
    auto it = classes.find(c);
    return it == classes.end() ? nullptr : &it->second;
}

const ServiceDef* ExecutionEnvironment::find_service(const std::string& w) const {
    auto it = services.find(w);
    return it == services.end() ? nullptr : &it->second;
}

ClassDef num_class() {
    ClassDef c;
    c.name = "Num";
    c.fields = {{"pred", ObjType::of_class("Num")}};
    // succ() = new Num(this)
    MethodDef succ;
    succ.sig.result = ObjType::of_class("Num");
    succ.body = mk_val(mk_new("Num", {mk_var("this")}));
    c.methods.emplace("succ", succ);
    // add(x) = if x.pred = null then this else this.add(x.pred).succ()
    MethodDef add;
    add.sig.result = ObjType::of_class("Num");
    add.sig.params = {{"x", ObjType::of_class("Num")}};
    add.body = mk_let(
        "p", mk_field(mk_var("x"), "pred"),
        mk_if(mk_var("p"), mk_null(), mk_val(mk_var("this")),
              mk_let("s", mk_invoke(mk_var("this"), "add", {mk_var("p")}), mk_invoke(mk_var("s"), "succ", {}))));
    c.methods.emplace("add", add);
    return c;
}

BodyPtr Program::body(const std::string& name) const {
    for (const auto& [n, b] : bodies)
        if (n == name) return b;
    if (name == "main" && !bodies.empty()) return bodies.front().second;
    return nullptr;
}

} // namespace wsec::obj
