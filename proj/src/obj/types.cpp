#include "wsec/obj/types.hpp"

#include "wsec/obj/printer.hpp"

#include <algorithm>
#include <sstream>

namespace wsec::obj {

TypeError::TypeError(std::string r, const std::string& msg, SourcePos p)
    : std::runtime_error("[type error (" + r + ")] " + msg), rule(std::move(r)), pos(p) {}

// ---- TypeSet ----

TypeSet TypeSet::of(const ObjType& t) {
    TypeSet s;
    if (t.is_id()) s.id_ = true;
    else s.classes_.insert(t.class_name());
    return s;
}

TypeSet TypeSet::any_class() {
    TypeSet s;
    s.any_class_ = true;
    return s;
}

bool TypeSet::contains(const ObjType& t) const {
    if (t.is_id()) return id_;
    return any_class_ || classes_.count(t.class_name()) != 0;
}

std::optional<ObjType> TypeSet::unique() const {
    if (any_class_) return std::nullopt;
    if (id_ && classes_.empty()) return ObjType::id();
    if (!id_ && classes_.size() == 1) return ObjType::of_class(*classes_.begin());
    return std::nullopt;
}

std::vector<ObjType> TypeSet::members(const ExecutionEnvironment& env) const {
    std::vector<ObjType> out;
    if (id_) out.push_back(ObjType::id());
    if (any_class_) {
        for (const auto& [name, c] : env.classes) out.push_back(ObjType::of_class(name));
    } else {
        for (const auto& c : classes_) out.push_back(ObjType::of_class(c));
    }
    return out;
}

TypeSet TypeSet::intersect(const TypeSet& o) const {
    TypeSet r;
    r.id_ = id_ && o.id_;
    if (any_class_ && o.any_class_) r.any_class_ = true;
    else if (any_class_) r.classes_ = o.classes_;
    else if (o.any_class_) r.classes_ = classes_;
    else
        std::set_intersection(classes_.begin(), classes_.end(), o.classes_.begin(), o.classes_.end(),
                              std::inserter(r.classes_, r.classes_.end()));
    return r;
}

TypeSet TypeSet::unite(const TypeSet& o) const {
    TypeSet r;
    r.id_ = id_ || o.id_;
    r.any_class_ = any_class_ || o.any_class_;
    if (!r.any_class_) {
        r.classes_ = classes_;
        r.classes_.insert(o.classes_.begin(), o.classes_.end());
    }
    return r;
}

std::string TypeSet::str() const {
    std::vector<std::string> parts;
    if (id_) parts.push_back("Id");
    if (any_class_) parts.push_back("<any class>");
    for (const auto& c : classes_) parts.push_back(c);
    if (parts.empty()) return "{}";
    if (parts.size() == 1) return parts[0];
    std::string s = "{";
    for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? ", " : "") + parts[i];
    return s + "}";
}

// ---- judgments ----

namespace {

bool type_resolves(const ObjType& t, const ExecutionEnvironment& env) {
    return t.is_id() || env.find_class(t.class_name()) != nullptr;
}

TypeEnv extend(const TypeEnv& E, const std::string& x, const ObjType& A) {
    // A rebinding is read as an alpha-renamed binder.
    TypeEnv out;
    out.reserve(E.size() + 1);
    for (const auto& b : E)
        if (b.first != x) out.push_back(b);
    out.emplace_back(x, A);
    return out;
}

TypeSet synth_body(const TypeEnv& E, const BodyPtr& a, const ExecutionEnvironment& env);

std::vector<TypeSet> synth_values(const TypeEnv& E, const std::vector<ValuePtr>& vs, const ExecutionEnvironment& env) {
    std::vector<TypeSet> out;
    out.reserve(vs.size());
    for (const auto& v : vs) out.push_back(type_of_value(E, v, env));
    return out;
}

bool args_fit(const std::vector<TypeSet>& got, const MethodSig& sig) {
    if (got.size() != sig.params.size()) return false;
    for (std::size_t k = 0; k < got.size(); ++k)
        if (!got[k].contains(sig.params[k].second)) return false;
    return true;
}

std::string arg_mismatch(const std::vector<TypeSet>& got, const MethodSig& sig, const std::string& what) {
    if (got.size() != sig.params.size())
        return what + " expects " + std::to_string(sig.params.size()) + " argument(s), got " +
               std::to_string(got.size());
    for (std::size_t k = 0; k < got.size(); ++k)
        if (!got[k].contains(sig.params[k].second))
            return what + " argument " + sig.params[k].first + " expects " + sig.params[k].second.str() + ", got " +
                   got[k].str();
    return what + " arguments do not fit";
}

TypeSet synth_body(const TypeEnv& E, const BodyPtr& a, const ExecutionEnvironment& env) {
    return std::visit(
        [&](const auto& n) -> TypeSet {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, ValB>) {
                return type_of_value(E, n.value, env);
            } else if constexpr (std::is_same_v<T, LetB>) {
                TypeSet bound = synth_body(E, n.bound, env);
                auto candidates = bound.members(env);
                if (!free_vars(n.body).count(n.var) && candidates.size() > 1) candidates.resize(1);
                TypeSet result;
                std::optional<TypeError> first;
                for (const auto& A : candidates) {
                    try {
                        result = result.unite(synth_body(extend(E, n.var, A), n.body, env));
                    } catch (const TypeError& e) {
                        if (!first) first = e;
                    }
                }
                if (result.is_empty()) {
                    if (first) throw *first;
                    throw TypeError("Body Let", "bound expression has no type", a->pos);
                }
                return result;
            } else if constexpr (std::is_same_v<T, IfB>) {
                TypeSet tu = type_of_value(E, n.lhs, env), tv = type_of_value(E, n.rhs, env);
                if (tu.intersect(tv).is_empty())
                    throw TypeError("Body If",
                                    "compared values " + print_value(n.lhs) + " : " + tu.str() + " and " +
                                        print_value(n.rhs) + " : " + tv.str() + " have no common type",
                                    a->pos);
                TypeSet ta = synth_body(E, n.then_b, env), tb = synth_body(E, n.else_b, env);
                TypeSet r = ta.intersect(tb);
                if (r.is_empty())
                    throw TypeError("Body If", "branches have types " + ta.str() + " and " + tb.str(), a->pos);
                return r;
            } else if constexpr (std::is_same_v<T, FieldB>) {
                TypeSet tv = type_of_value(E, n.target, env);
                TypeSet r;
                for (const auto& c : tv.members(env)) {
                    if (!c.is_class()) continue;
                    const ClassDef* cls = env.find_class(c.class_name());
                    if (!cls) continue;
                    if (auto j = cls->field_index(n.field)) r = r.unite(TypeSet::of(cls->fields[*j].second));
                }
                if (r.is_empty())
                    throw TypeError("Body Field", "no field " + n.field + " on " + print_value(n.target) + " : " +
                                                      tv.str(),
                                    a->pos);
                return r;
            } else if constexpr (std::is_same_v<T, InvokeB>) {
                TypeSet tv = type_of_value(E, n.target, env);
                auto targs = synth_values(E, n.args, env);
                TypeSet r;
                std::string why = "no method " + n.method + " on " + print_value(n.target) + " : " + tv.str();
                for (const auto& c : tv.members(env)) {
                    if (!c.is_class()) continue;
                    const ClassDef* cls = env.find_class(c.class_name());
                    const MethodDef* m = cls ? cls->method(n.method) : nullptr;
                    if (!m) continue;
                    if (args_fit(targs, m->sig)) r = r.unite(TypeSet::of(m->sig.result));
                    else why = arg_mismatch(targs, m->sig, c.class_name() + "." + n.method);
                }
                if (r.is_empty()) throw TypeError("Body Invoke", why, a->pos);
                return r;
            } else if constexpr (std::is_same_v<T, CallB>) {
                const ServiceDef* w = env.find_service(n.service);
                if (!w) throw TypeError("Body Remote", "unknown web service " + n.service, a->pos);
                const ClassDef* cls = env.find_class(w->cls);
                const MethodDef* m = cls ? cls->method(n.method) : nullptr;
                if (!m) throw TypeError("Body Remote", "service " + n.service + " has no method " + n.method, a->pos);
                auto targs = synth_values(E, n.args, env);
                if (!args_fit(targs, m->sig))
                    throw TypeError("Body Remote", arg_mismatch(targs, m->sig, n.service + ":" + n.method), a->pos);
                return TypeSet::of(m->sig.result);
            } else {
                return synth_body(E, n.body, env);
            }
        },
        a->node);
}

} // namespace

void check_type_env(const TypeEnv& E, const ExecutionEnvironment& env) {
    std::set<std::string> seen;
    for (const auto& [x, t] : E) {
        if (!seen.insert(x).second) throw TypeError("Env x", "variable " + x + " bound twice");
        if (!type_resolves(t, env)) throw TypeError("Env x", "unknown class " + t.str() + " for " + x);
    }
}

namespace {

// Type of v assuming its immediate components are well typed.
TypeSet head_type(const TypeEnv& E, const Value& v, const ExecutionEnvironment& env) {
    return std::visit(
        [&](const auto& n) -> TypeSet {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, VarV>) {
                for (auto it = E.rbegin(); it != E.rend(); ++it)
                    if (it->first == n.name) return TypeSet::of(it->second);
                throw TypeError("Val x", "unbound variable " + n.name);
            } else if constexpr (std::is_same_v<T, NullV>) {
                if (env.classes.empty()) throw TypeError("Val null", "no class types exist");
                return TypeSet::any_class();
            } else if constexpr (std::is_same_v<T, PrinV>) {
                if (!env.is_principal(n.name)) throw TypeError("Val Princ", "unknown principal " + n.name);
                return TypeSet::of(ObjType::id());
            } else {
                return TypeSet::of(ObjType::of_class(n.cls));
            }
        },
        v.node);
}

} // namespace

// Iterative so that deeply nested numerals do not exhaust the stack.
TypeSet type_of_value(const TypeEnv& E, const ValuePtr& v, const ExecutionEnvironment& env) {
    std::vector<const Value*> todo{v.get()};
    while (!todo.empty()) {
        const Value* cur = todo.back();
        todo.pop_back();
        const auto* n = std::get_if<NewV>(&cur->node);
        if (!n) {
            head_type(E, *cur, env);
            continue;
        }
        const ClassDef* cls = env.find_class(n->cls);
        if (!cls) throw TypeError("Val Object", "unknown class " + n->cls);
        if (cls->fields.size() != n->args.size())
            throw TypeError("Val Object", "new " + n->cls + " expects " + std::to_string(cls->fields.size()) +
                                              " argument(s), got " + std::to_string(n->args.size()));
        for (std::size_t i = 0; i < n->args.size(); ++i) {
            TypeSet ti = head_type(E, *n->args[i], env);
            if (!ti.contains(cls->fields[i].second))
                throw TypeError("Val Object", "field " + n->cls + "." + cls->fields[i].first + " expects " +
                                                  cls->fields[i].second.str() + ", got " + ti.str());
        }
        for (std::size_t i = n->args.size(); i-- > 0;) todo.push_back(n->args[i].get());
    }
    return head_type(E, *v, env);
}

TypeSet type_of_body(const TypeEnv& E, const BodyPtr& a, const ExecutionEnvironment& env) {
    check_type_env(E, env);
    return synth_body(E, a, env);
}

bool check_body(const TypeEnv& E, const BodyPtr& a, const ObjType& A, const ExecutionEnvironment& env) {
    try {
        return type_of_body(E, a, env).contains(A);
    } catch (const TypeError&) {
        return false;
    }
}

// ---- annotation ----

namespace {

void annotate_into(const TypeEnv& E, const BodyPtr& a, const ObjType& A, const ExecutionEnvironment& env,
                   Annotations& out) {
    out.node_type[a.get()] = A;
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, LetB>) {
                TypeSet bound = synth_body(E, n.bound, env);
                for (const auto& B : bound.members(env)) {
                    TypeEnv E2 = extend(E, n.var, B);
                    bool ok = false;
                    try {
                        ok = synth_body(E2, n.body, env).contains(A);
                    } catch (const TypeError&) {
                    }
                    if (!ok) continue;
                    out.let_type[a.get()] = B;
                    annotate_into(E, n.bound, B, env, out);
                    annotate_into(E2, n.body, A, env, out);
                    return;
                }
                throw TypeError("Body Let", "no derivation at type " + A.str(), a->pos);
            } else if constexpr (std::is_same_v<T, IfB>) {
                annotate_into(E, n.then_b, A, env, out);
                annotate_into(E, n.else_b, A, env, out);
            } else if constexpr (std::is_same_v<T, FieldB>) {
                TypeSet tv = type_of_value(E, n.target, env);
                for (const auto& c : tv.members(env)) {
                    const ClassDef* cls = c.is_class() ? env.find_class(c.class_name()) : nullptr;
                    if (!cls) continue;
                    auto j = cls->field_index(n.field);
                    if (j && cls->fields[*j].second == A) {
                        out.receiver_class[a.get()] = cls->name;
                        return;
                    }
                }
                throw TypeError("Body Field", "no derivation at type " + A.str(), a->pos);
            } else if constexpr (std::is_same_v<T, InvokeB>) {
                TypeSet tv = type_of_value(E, n.target, env);
                auto targs = synth_values(E, n.args, env);
                for (const auto& c : tv.members(env)) {
                    const ClassDef* cls = c.is_class() ? env.find_class(c.class_name()) : nullptr;
                    const MethodDef* m = cls ? cls->method(n.method) : nullptr;
                    if (m && m->sig.result == A && args_fit(targs, m->sig)) {
                        out.receiver_class[a.get()] = cls->name;
                        return;
                    }
                }
                throw TypeError("Body Invoke", "no derivation at type " + A.str(), a->pos);
            } else if constexpr (std::is_same_v<T, RunningB>) {
                annotate_into(E, n.body, A, env, out);
            }
        },
        a->node);
}

} // namespace

Annotations annotate(const TypeEnv& E, const BodyPtr& a, const ObjType& A, const ExecutionEnvironment& env) {
    TypeSet t = type_of_body(E, a, env);
    if (!t.contains(A)) throw TypeError("Body", "body has type " + t.str() + ", expected " + A.str(), a->pos);
    Annotations out;
    annotate_into(E, a, A, env, out);
    return out;
}

// ---- environment assumptions ----

EnvReport validate_environment(const ExecutionEnvironment& env) {
    EnvReport r;
    auto add = [&](int asm_no, std::string c, std::string m, std::string rule, std::string msg) {
        r.issues.push_back({asm_no, std::move(c), std::move(m), std::move(rule), std::move(msg)});
    };
    for (const auto& [name, c] : env.classes) {
        for (const auto& [f, t] : c.fields)
            if (!type_resolves(t, env)) add(0, name, "", "fields", "field " + f + " has unknown type " + t.str());
        for (const auto& [m, def] : c.methods) {
            bool sig_ok = type_resolves(def.sig.result, env);
            std::set<std::string> seen;
            for (const auto& [x, t] : def.sig.params) {
                if (!type_resolves(t, env)) sig_ok = false;
                if (x == "this" || !seen.insert(x).second) {
                    add(0, name, m, "methods", "parameter names must be distinct and differ from this");
                    sig_ok = false;
                }
            }
            if (!sig_ok) {
                add(0, name, m, "methods", "signature mentions an unknown class");
                continue;
            }
            if (contains_running(def.body)) {
                add(2, name, m, "Assumption 2", "stored body contains a running form p[a]");
                continue;
            }
            TypeEnv E{{"this", ObjType::of_class(name)}};
            for (const auto& p : def.sig.params) E.push_back(p);
            try {
                TypeSet t = type_of_body(E, def.body, env);
                if (!t.contains(def.sig.result))
                    add(3, name, m, "Assumption 3",
                        "body has type " + t.str() + ", declared " + def.sig.result.str());
            } catch (const TypeError& e) {
                add(3, name, m, e.rule, e.what());
            }
        }
    }
    for (const auto& [w, s] : env.services) {
        if (!env.is_principal(s.owner)) add(0, s.cls, "", "owner", "service " + w + " has unknown owner " + s.owner);
        const ClassDef* c = env.find_class(s.cls);
        if (!c) {
            add(0, s.cls, "", "class", "service " + w + " has unknown class " + s.cls);
            continue;
        }
        bool only_caller = c->fields.size() == 1 && c->fields[0].first == "CallerId" && c->fields[0].second.is_id();
        if (!only_caller)
            add(1, s.cls, "", "Assumption 1", "class of service " + w + " must have exactly the field CallerId : Id");
    }
    return r;
}

std::string EnvReport::str() const {
    if (issues.empty()) return "environment ok\n";
    std::ostringstream os;
    for (const auto& i : issues) {
        os << (i.assumption ? "assumption " + std::to_string(i.assumption) : std::string("well-formedness")) << ": "
           << i.cls;
        if (!i.method.empty()) os << "." << i.method;
        os << ": (" << i.rule << ") " << i.message << "\n";
    }
    return os.str();
}

nlohmann::json EnvReport::to_json() const {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& i : issues)
        a.push_back({{"assumption", i.assumption},
                     {"class", i.cls},
                     {"method", i.method},
                     {"rule", i.rule},
                     {"message", i.message}});
    return {{"ok", ok()}, {"issues", a}};
}

} // namespace wsec::obj
