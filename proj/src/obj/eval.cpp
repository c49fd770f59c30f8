#include "wsec/obj/eval.hpp"

#include "wsec/obj/printer.hpp"

namespace wsec::obj {

std::string_view to_string(EvalStatus s) {
    switch (s) {
    case EvalStatus::Value: return "value";
    case EvalStatus::NullBlocked: return "null-blocked";
    case EvalStatus::Stuck: return "stuck";
    case EvalStatus::FuelExhausted: return "fuel-exhausted";
    }
    return "?";
}

StepOutcome step(const BodyPtr& a, const std::string& principal, const ExecutionEnvironment& env) {
    return std::visit(
        [&](const auto& n) -> StepOutcome {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, ValB>) {
                return IsValue{n.value};
            } else if constexpr (std::is_same_v<T, LetB>) {
                if (const auto* v = n.bound->template as<ValB>()) // Red Let 2
                    return Stepped{substitute(n.body, n.var, v->value)};
                StepOutcome inner = step(n.bound, principal, env); // Red Let 1
                if (const auto* s = std::get_if<Stepped>(&inner)) return Stepped{mk_let(n.var, s->next, n.body, a->pos)};
                return inner;
            } else if constexpr (std::is_same_v<T, IfB>) {
                if (n.lhs->has_vars || n.rhs->has_vars) return Stuck{"comparison of open values"};
                return Stepped{value_eq(n.lhs, n.rhs) ? n.then_b : n.else_b};
            } else if constexpr (std::is_same_v<T, FieldB>) {
                if (n.target->is_null()) return NullBlocked{};
                const auto* obj = std::get_if<NewV>(&n.target->node);
                if (!obj) return Stuck{"field access on " + print_value(n.target)};
                const ClassDef* c = env.find_class(obj->cls);
                auto j = c ? c->field_index(n.field) : std::nullopt;
                if (!j || *j >= obj->args.size()) return Stuck{"no field " + n.field + " in " + obj->cls};
                return Stepped{mk_val(obj->args[*j], a->pos)};
            } else if constexpr (std::is_same_v<T, InvokeB>) {
                if (n.target->is_null()) return NullBlocked{};
                const auto* obj = std::get_if<NewV>(&n.target->node);
                if (!obj) return Stuck{"method call on " + print_value(n.target)};
                const ClassDef* c = env.find_class(obj->cls);
                const MethodDef* m = c ? c->method(n.method) : nullptr;
                if (!m) return Stuck{"no method " + n.method + " in " + obj->cls};
                if (m->sig.params.size() != n.args.size()) return Stuck{"arity mismatch calling " + n.method};
                std::map<std::string, ValuePtr> sigma{{"this", n.target}};
                for (std::size_t k = 0; k < n.args.size(); ++k) sigma[m->sig.params[k].first] = n.args[k];
                return Stepped{substitute(m->body, sigma)};
            } else if constexpr (std::is_same_v<T, CallB>) {
                const ServiceDef* w = env.find_service(n.service);
                if (!w) return Stuck{"unknown web service " + n.service};
                // Red Remote: w:l(u) ->p q[new c(p).l(u)]
                return Stepped{mk_running(
                    w->owner, mk_invoke(mk_new(w->cls, {mk_prin(principal)}), n.method, n.args, a->pos), a->pos)};
            } else {
                if (const auto* v = n.body->template as<ValB>()) return Stepped{mk_val(v->value, a->pos)}; // Red Prin 2
                StepOutcome inner = step(n.body, n.principal, env);                                          // Red Prin 1
                if (const auto* s = std::get_if<Stepped>(&inner))
                    return Stepped{mk_running(n.principal, s->next, a->pos)};
                return inner;
            }
        },
        a->node);
}

EvalResult eval(const BodyPtr& a, const std::string& principal, const ExecutionEnvironment& env, std::uint64_t fuel,
                const EvalOptions& opts) {
    EvalResult r;
    BodyPtr cur = a;
    auto record = [&](const BodyPtr& b) {
        if (opts.on_body) opts.on_body(b);
        if (opts.trace_capacity == 0) return;
        r.trace.push_back(b);
        if (r.trace.size() > opts.trace_capacity) r.trace.pop_front();
    };
    record(cur);
    while (true) {
        if (const auto* v = cur->as<ValB>()) {
            r.status = EvalStatus::Value;
            r.value = v->value;
            break;
        }
        if (r.steps >= fuel) {
            r.status = EvalStatus::FuelExhausted;
            break;
        }
        StepOutcome o = step(cur, principal, env);
        if (auto* s = std::get_if<Stepped>(&o)) {
            cur = s->next;
            ++r.steps;
            record(cur);
        } else if (std::holds_alternative<NullBlocked>(o)) {
            r.status = EvalStatus::NullBlocked;
            break;
        } else if (auto* st = std::get_if<Stuck>(&o)) {
            r.status = EvalStatus::Stuck;
            r.stuck_reason = st->reason;
            break;
        } else {
            r.status = EvalStatus::Value;
            r.value = std::get<IsValue>(o).value;
            break;
        }
    }
    r.last = cur;
    return r;
}

} // namespace wsec::obj
