#include "wsec/translate/translator.hpp"
#include "wsec/spi/printer.hpp"

#include <algorithm>
#include <map>

namespace wsec::translate {

using namespace wsec::spi;
using obj::BodyPtr;
using obj::ObjType;

std::string_view to_string(Mutation m) {
    switch (m) {
    case Mutation::None: return "none";
    case Mutation::DropNonceCheck: return "no-nonce-check";
    case Mutation::ReuseSessionTag: return "reuse-session";
    case Mutation::SwapKeys: return "swap-keys";
    }
    return "none";
}

std::optional<Mutation> parse_mutation(std::string_view s) {
    for (Mutation m : {Mutation::None, Mutation::DropNonceCheck, Mutation::ReuseSessionTag, Mutation::SwapKeys})
        if (to_string(m) == s) return m;
    return std::nullopt;
}

Name channel_name(const std::string& cls, const std::string& method) { return source_name(cls + "_" + method); }
Name key_name(const std::string& client, const std::string& server) {
    return source_name("K_" + client + "_" + server);
}

namespace {

Name fresh(std::string_view id) { return renamed(source_name(id)); }

MsgPtr tuple(std::vector<MsgPtr> xs) { return xs.size() == 1 ? xs[0] : m_record(std::move(xs)); }
MsgPtr tagged(std::string_view tag, std::vector<MsgPtr> xs) { return m_tagged(tag, tuple(std::move(xs))); }
MsgPtr nm(const Name& n) { return m_name(n); }

MsgPtr getnonce() { return m_tagged("getnonce", m_record({})); }

TypePtr tuple_type(const std::vector<TypePtr>& ts) {
    if (ts.size() == 1) return ts[0];
    std::vector<std::pair<Name, TypePtr>> fields;
    for (const auto& t : ts) fields.emplace_back(fresh("x"), t);
    return t_record(std::move(fields));
}

// label(p, q, w, x, t) for the begin/end events of requests and responses
MsgPtr event_label(std::string_view tag, const MsgPtr& p, const MsgPtr& q, const MsgPtr& w, const MsgPtr& x,
                   const MsgPtr& t) {
    return m_tagged(tag, m_record({p, q, w, x, t}));
}

TypePtr response_for(const MsgPtr& label) { return t_response(NonceLevel::Public, {e_end(label)}); }

} // namespace

TypePtr translate_type(const ObjType& A) {
    if (A.is_id()) return t_un();
    return t_union({{Symbol("null"), t_un()}, {Symbol(A.class_name()), t_un()}});
}

MsgPtr translate_value(const obj::ValuePtr& v) {
    if (auto n = obj::as_num(v)) return m_numeral(*n);
    return std::visit(
        [](const auto& n) -> MsgPtr {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, obj::VarV>) {
                return m_name(n.name);
            } else if constexpr (std::is_same_v<T, obj::NullV>) {
                return m_tagged("null", m_record({}));
            } else if constexpr (std::is_same_v<T, obj::NewV>) {
                std::vector<MsgPtr> xs;
                for (const auto& a : n.args) xs.push_back(translate_value(a));
                return tagged(n.cls, std::move(xs));
            } else {
                return m_name(n.name);
            }
        },
        v->node);
}

struct Translator::Ctx {
    obj::Annotations ann;
    std::map<std::string, Name> vars;
    MsgPtr prin;
    std::optional<std::string> prin_name;
    MsgPtr shared_tag;   // ReuseSessionTag
    MsgPtr shared_nonce; // ReuseSessionTag
};

Translator::Translator(const obj::ExecutionEnvironment& env, TranslateOptions opts) : env_(env), opts_(opts) {
    for (const auto& p : env.principals) reserved_.push_back(p);
    for (const auto& [w, s] : env.services) reserved_.push_back(w);
    for (const auto& [c, cls] : env.classes)
        for (const auto& [m, def] : cls.methods) reserved_.push_back(channel_name(c, m).id.str());
    for (const auto& p : env.principals)
        for (const auto& q : env.principals) reserved_.push_back(key_name(p, q).id.str());
    reserved_.push_back("result");
}

Name Translator::var_name(const std::string& x) const {
    if (std::find(reserved_.begin(), reserved_.end(), x) != reserved_.end()) return fresh(x);
    return source_name(x);
}

MsgPtr Translator::tv(const obj::ValuePtr& v, const Ctx& cx) const {
    if (!v->has_vars) return translate_value(v);
    return std::visit(
        [&](const auto& n) -> MsgPtr {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, obj::VarV>) {
                auto it = cx.vars.find(n.name);
                return it != cx.vars.end() ? nm(it->second) : m_name(n.name);
            } else if constexpr (std::is_same_v<T, obj::NewV>) {
                std::vector<MsgPtr> xs;
                for (const auto& a : n.args) xs.push_back(tv(a, cx));
                return tagged(n.cls, std::move(xs));
            } else {
                return translate_value(v);
            }
        },
        v->node);
}

ProcPtr Translator::tr(const BodyPtr& a, Ctx& cx, const MsgPtr& k) const {
    auto receiver = [&](const obj::Body* node) -> const obj::ClassDef& {
        auto it = cx.ann.receiver_class.find(node);
        if (it == cx.ann.receiver_class.end()) throw TranslateError("missing type annotation on a field or method access");
        const obj::ClassDef* cls = env_.find_class(it->second);
        if (!cls) throw TranslateError("unknown class " + it->second);
        return *cls;
    };
    auto null_branch = [] { return CaseBranch{Symbol("null"), un(fresh("y")), p_stop()}; };

    return std::visit(
        [&](const auto& n) -> ProcPtr {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, obj::ValB>) {
                return p_out(k, tv(n.value, cx));
            } else if constexpr (std::is_same_v<T, obj::LetB>) {
                Name k2 = fresh("k");
                ProcPtr bound = tr(n.bound, cx, nm(k2));
                Name x = var_name(n.var);
                auto saved = cx.vars;
                cx.vars[n.var] = x;
                ProcPtr rest = tr(n.body, cx, k);
                cx.vars = std::move(saved);
                return p_new(un(k2), p_par(bound, p_in(nm(k2), un(x), rest)));
            } else if constexpr (std::is_same_v<T, obj::IfB>) {
                return p_if(tv(n.lhs, cx), tv(n.rhs, cx), tr(n.then_b, cx, k), tr(n.else_b, cx, k));
            } else if constexpr (std::is_same_v<T, obj::FieldB>) {
                const obj::ClassDef& cls = receiver(a.get());
                std::size_t j = *cls.field_index(n.field);
                Name y = fresh("y");
                ProcPtr pick;
                if (cls.fields.size() == 1) {
                    pick = p_out(k, nm(y));
                } else {
                    std::vector<Binder> xs;
                    for (const auto& [f, A] : cls.fields) xs.push_back({fresh(f), translate_type(A)});
                    pick = p_split(nm(y), xs, p_out(k, nm(xs[j].name)));
                }
                return p_case(tv(n.target, cx), {null_branch(), {Symbol(cls.name), un(y), pick}});
            } else if constexpr (std::is_same_v<T, obj::InvokeB>) {
                const obj::ClassDef& cls = receiver(a.get());
                std::vector<MsgPtr> tup{cx.prin, tv(n.target, cx)};
                for (const auto& u : n.args) tup.push_back(tv(u, cx));
                tup.push_back(k);
                return p_case(tv(n.target, cx), {null_branch(),
                                                  {Symbol(cls.name), un(fresh("y")),
                                                   p_out(nm(channel_name(cls.name, n.method)), m_record(tup))}});
            } else if constexpr (std::is_same_v<T, obj::CallB>) {
                return call(n, cx, k);
            } else {
                throw TranslateError("run-time principal frames cannot be translated");
            }
        },
        a->node);
}

ProcPtr Translator::call(const obj::CallB& c, const Ctx& cx, const MsgPtr& k) const {
    if (!env_.find_service(c.service)) throw TranslateError("unknown service " + c.service);
    if (cx.prin_name) return client_protocol(c, cx, *cx.prin_name, k);
    // the caller is only known at run time: one branch per principal
    std::vector<ProcPtr> branches;
    for (const auto& p : env_.principals)
        branches.push_back(p_if(cx.prin, m_name(p), client_protocol(c, cx, p, k), p_stop()));
    return p_par(branches);
}

ProcPtr Translator::client_protocol(const obj::CallB& c, const Ctx& cx, const std::string& client,
                                    const MsgPtr& k) const {
    const obj::ServiceDef& svc = *env_.find_service(c.service);
    MsgPtr p = m_name(client), q = m_name(svc.owner), w = m_name(svc.name);
    MsgPtr key = m_name(key_name(client, svc.owner));

    std::vector<MsgPtr> args;
    for (const auto& u : c.args) args.push_back(tv(u, cx));
    MsgPtr call_msg = tagged(c.method, args);

    Name k1 = fresh("k"), k2 = fresh("k"), t = fresh("t"), np = fresh("np");
    MsgPtr tag = cx.shared_tag ? cx.shared_tag : nm(t);
    MsgPtr own_nonce = cx.shared_nonce ? cx.shared_nonce : nm(np);

    MsgPtr req_label = event_label("req", p, q, w, call_msg, tag);

    // receive and check the response
    Name z = fresh("z"), q2 = fresh("q"), bdy = fresh("bdy"), z2 = fresh("z"), plain = fresh("plain");
    Name rest = fresh("rest"), r = fresh("r"), rest2 = fresh("rest"), np2 = fresh("np"), x = fresh("x");
    MsgPtr res_label = event_label("res", p, q, w, nm(r), tag);
    ProcPtr deliver = p_case(nm(r), {{Symbol(c.method), un(x), p_out(k, nm(x))}});
    ProcPtr after_check = p_end(res_label, deliver);
    ProcPtr checked = p_check(own_nonce, nm(np2), after_check);
    ProcPtr unpack = p_match(
        nm(plain), w, un(rest),
        p_split(nm(rest), {{r, response_type(svc.name)}, un(rest2)},
                p_match(nm(rest2), tag, {np2, response_for(res_label)}, checked)));
    ProcPtr receive = p_in(
        m_name(k2), un(z),
        p_split(nm(z), {un(q2), un(bdy)},
                p_symdec(nm(bdy), un(z2), key, p_case(nm(z2), {{Symbol("res"), un(plain), unpack}}))));

    // nonce round trip and encrypted request
    Name z3 = fresh("z"), z4 = fresh("z"), nq = fresh("nq"), nq2 = fresh("nq");
    MsgPtr request = m_symenc(m_tagged("req", m_nest({w, call_msg, tag, nm(nq2)})), key);
    ProcPtr send = p_par(p_out(w, m_record({p, request, own_nonce, nm(k2)})), receive);
    ProcPtr with_nonce =
        p_in(nm(k1), un(z3),
             p_case(nm(z3), {{Symbol("res"), un(z4),
                              p_case(nm(z4), {{Symbol("getnonce"), un(nq),
                                               p_cast(nm(nq), {nq2, response_for(req_label)}, send)}})}}));

    ProcPtr body = p_begin(req_label, p_par(p_out(w, m_record({m_tagged("req", getnonce()), nm(k1)})), with_nonce));
    if (!cx.shared_nonce) body = p_new({np, t_challenge(NonceLevel::Public, {})}, body);
    if (!cx.shared_tag) body = p_new(un(t), body);
    return p_new(un(k1), p_new(un(k2), body));
}

ProcPtr Translator::let_call(const obj::ServiceDef& w, const MsgPtr& client, const MsgPtr& args, const Binder& r,
                             ProcPtr then) const {
    const obj::ClassDef& cls = *env_.find_class(w.cls);
    MsgPtr q = m_name(w.owner);
    MsgPtr self = m_tagged(cls.name, client);
    Name k = fresh("k");
    std::vector<CaseBranch> branches;
    for (const auto& [mname, def] : cls.methods) {
        Name xs = fresh("xs"), k2 = fresh("k"), r0 = fresh("r");
        std::vector<MsgPtr> tup{q, self};
        std::vector<Binder> parts;
        std::size_t n = def.sig.params.size();
        if (n == 1) tup.push_back(nm(xs));
        if (n >= 2)
            for (const auto& [pn, pt] : def.sig.params) {
                parts.push_back({fresh(pn), translate_type(pt)});
                tup.push_back(nm(parts.back().name));
            }
        tup.push_back(nm(k2));
        ProcPtr dispatch = p_new(un(k2), p_par(p_out(nm(channel_name(cls.name, mname)), m_record(tup)),
                                              p_in(nm(k2), un(r0), p_out(nm(k), m_tagged(mname, nm(r0))))));
        if (n >= 2) dispatch = p_split(nm(xs), parts, dispatch);
        branches.push_back({Symbol(mname), un(xs), dispatch});
    }
    return p_new(un(k), p_par(p_case(args, std::move(branches)), p_in(nm(k), r, std::move(then))));
}

ProcPtr Translator::service_impl(const std::string& service) const {
    const obj::ServiceDef* svc = env_.find_service(service);
    if (!svc) throw TranslateError("unknown service " + service);
    MsgPtr q = m_name(svc->owner), w = m_name(svc->name);

    Name p2 = fresh("p"), cipher = fresh("cipher"), np = fresh("np"), k2 = fresh("k"), nq = fresh("nq");
    std::vector<ProcPtr> per_client;
    for (const auto& client : env_.principals) {
        MsgPtr p = m_name(client);
        MsgPtr key = m_name(opts_.mutation == Mutation::SwapKeys ? key_name(svc->owner, client)
                                                                 : key_name(client, svc->owner));
        Name z = fresh("z"), plain = fresh("plain"), rest = fresh("rest"), a = fresh("a"), rest2 = fresh("rest");
        Name t = fresh("t"), nq2 = fresh("nq"), r = fresh("r"), np2 = fresh("np");
        MsgPtr req_label = event_label("req", p, q, w, nm(a), nm(t));
        MsgPtr res_label = event_label("res", p, q, w, nm(r), nm(t));

        ProcPtr reply = p_begin(
            res_label,
            p_cast(nm(np), {np2, response_for(res_label)},
                   p_out(nm(k2), m_record({q, m_symenc(m_tagged("res", m_nest({w, nm(r), nm(t), nm(np2)})), key)}))));
        ProcPtr serve = p_end(req_label, let_call(*svc, p, nm(a), {r, response_type(service)}, reply));
        ProcPtr checked = opts_.mutation == Mutation::DropNonceCheck ? serve : p_check(nm(nq), nm(nq2), serve);
        ProcPtr unpack =
            p_match(nm(plain), w, un(rest),
                    p_split(nm(rest), {{a, request_type(service)}, un(rest2)},
                            p_split(nm(rest2), {un(t), {nq2, response_for(req_label)}}, checked)));
        ProcPtr decrypt = p_symdec(m_name(cipher), un(z), key, p_case(nm(z), {{Symbol("req"), un(plain), unpack}}));
        per_client.push_back(p_if(p, nm(p2), decrypt, p_stop()));
    }

    Name z = fresh("z"), bdy = fresh("bdy"), k1 = fresh("k"), z1 = fresh("z"), z2 = fresh("z"), z3 = fresh("z");
    ProcPtr second = p_in(w, un(z3), p_split(nm(z3), {un(p2), un(cipher), un(np), un(k2)}, p_par(per_client)));
    ProcPtr issue = p_new({nq, t_challenge(NonceLevel::Public, {})},
                          p_par(p_out(nm(k1), m_tagged("res", m_tagged("getnonce", nm(nq)))), second));
    ProcPtr getnonce_case =
        p_case(nm(bdy), {{Symbol("req"), un(z1), p_case(nm(z1), {{Symbol("getnonce"), un(z2), issue}})}});
    return p_rep_in(w, un(z), p_split(nm(z), {un(bdy), un(k1)}, getnonce_case));
}

ProcPtr Translator::class_impl(const std::string& c, const std::string& method) const {
    const obj::ClassDef* cls = env_.find_class(c);
    if (!cls) throw TranslateError("unknown class " + c);
    const obj::MethodDef* def = cls->method(method);
    if (!def) throw TranslateError("unknown method " + c + "." + method);

    obj::TypeEnv E{{"this", ObjType::of_class(c)}};
    for (const auto& prm : def->sig.params) E.push_back(prm);

    Ctx cx;
    cx.ann = obj::annotate(E, def->body, def->sig.result, env_);
    Name p = fresh("p"), z = fresh("z"), k = fresh("k");
    cx.prin = nm(p);
    std::vector<Binder> xs{un(p)};
    for (const auto& [x, A] : E) {
        Name n = var_name(x);
        cx.vars[x] = n;
        xs.push_back({n, x == "this" ? t_un() : translate_type(A)});
    }
    xs.push_back(un(k));
    ProcPtr body = tr(def->body, cx, nm(k));
    return p_rep_in(nm(channel_name(c, method)), un(z), p_split(nm(z), xs, body));
}

ProcPtr Translator::all_classes() const {
    std::vector<ProcPtr> ps;
    for (const auto& [c, cls] : env_.classes)
        for (const auto& [m, def] : cls.methods) ps.push_back(class_impl(c, m));
    return p_par(ps);
}

ProcPtr Translator::all_services() const {
    std::vector<ProcPtr> ps;
    for (const auto& [w, svc] : env_.services) ps.push_back(service_impl(w));
    return p_par(ps);
}

TypePtr Translator::request_type(const std::string& service) const {
    const obj::ServiceDef* svc = env_.find_service(service);
    if (!svc) throw TranslateError("unknown service " + service);
    std::vector<std::pair<Symbol, TypePtr>> cases;
    for (const auto& [m, def] : env_.find_class(svc->cls)->methods) {
        std::vector<TypePtr> ts;
        for (const auto& [x, A] : def.sig.params) ts.push_back(translate_type(A));
        cases.emplace_back(Symbol(m), tuple_type(ts));
    }
    return t_union(std::move(cases));
}

TypePtr Translator::response_type(const std::string& service) const {
    const obj::ServiceDef* svc = env_.find_service(service);
    if (!svc) throw TranslateError("unknown service " + service);
    std::vector<std::pair<Symbol, TypePtr>> cases;
    for (const auto& [m, def] : env_.find_class(svc->cls)->methods)
        cases.emplace_back(Symbol(m), translate_type(def.sig.result));
    return t_union(std::move(cases));
}

TypePtr Translator::cs_key(const std::string& client, const std::string& server) const {
    MsgPtr p = m_name(client), q = m_name(server);
    auto mode = [&](std::string_view tag, std::string_view payload) {
        Name w = fresh("w"), x = fresh(payload), t = fresh("t"), n = fresh("n"), rest = fresh("rest"),
             rest2 = fresh("rest");
        MsgPtr label = event_label(tag, p, q, nm(w), nm(x), nm(t));
        TypePtr inner = t_record({{t, t_un()}, {n, response_for(label)}});
        inner = t_record({{x, t_un()}, {rest2, inner}});
        return std::pair<Symbol, TypePtr>(Symbol(tag), t_record({{w, t_un()}, {rest, inner}}));
    };
    return t_shared_key(t_union({mode("req", "a"), mode("res", "r")}));
}

ProcPtr Translator::body(const BodyPtr& a, const obj::TypeEnv& E, const ObjType& A, const std::string& principal,
                         const MsgPtr& k) const {
    Ctx cx;
    cx.ann = obj::annotate(E, a, A, env_);
    cx.prin = m_name(principal);
    cx.prin_name = principal;
    for (const auto& [x, T] : E) cx.vars[x] = source_name(x);
    if (opts_.mutation != Mutation::ReuseSessionTag) return tr(a, cx, k);
    Name t = fresh("t"), np = fresh("np");
    cx.shared_tag = nm(t);
    cx.shared_nonce = nm(np);
    ProcPtr p = tr(a, cx, k);
    return p_new(un(t), p_new({np, t_challenge(NonceLevel::Public, {})}, p));
}

System build_system(const BodyPtr& b, const std::string& principal, const obj::ExecutionEnvironment& env,
                    const TranslateOptions& opts) {
    obj::EnvReport report = obj::validate_environment(env);
    if (!report.ok()) throw TranslateError("execution environment rejected:\n" + report.str());
    if (!env.is_principal(principal)) throw TranslateError("unknown principal " + principal);
    if (!obj::free_vars(b).empty()) throw TranslateError("body has free variables");

    obj::TypeSet ts = obj::type_of_body({}, b, env);
    auto members = ts.members(env);
    if (members.empty()) throw TranslateError("body has no type");
    ObjType A = ts.unique().value_or(members.front());

    Translator tr(env, opts);
    System sys;
    sys.result_type = A;
    sys.result = source_name("result");
    for (const auto& [w, svc] : env.services) sys.publics.push_back(source_name(w));
    for (const auto& p : env.principals) sys.publics.push_back(source_name(p));

    ProcPtr p = p_par({tr.all_classes(), tr.all_services(), tr.body(b, {}, A, principal, m_name(sys.result))});
    for (const auto& c : env.principals)
        for (const auto& s : env.principals) p = p_new({key_name(c, s), tr.cs_key(c, s)}, p);
    for (const auto& [c, cls] : env.classes)
        for (const auto& [m, def] : cls.methods) p = p_new(un(channel_name(c, m)), p);
    sys.process = p;
    return sys;
}

std::vector<MsgPtr> delivered_on(const Configuration& c, const Name& chan) {
    std::vector<MsgPtr> out;
    for (const auto& p : c.procs)
        if (p->kind == ProcKind::Out && p->msgs[0]->is_name() && p->msgs[0]->name == chan) out.push_back(p->msgs[1]);
    return out;
}

} // namespace wsec::translate
