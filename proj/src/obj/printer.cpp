#include "wsec/obj/printer.hpp"

#include <sstream>

namespace wsec::obj {

std::string print_type(const ObjType& t) { return t.str(); }

std::string print_value(const ValuePtr& v) {
    if (auto n = as_num(v)) return std::to_string(*n);
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, VarV>) return x.name;
            else if constexpr (std::is_same_v<T, NullV>) return "null";
            else if constexpr (std::is_same_v<T, PrinV>) return x.name;
            else {
                std::string s = "new " + x.cls + "(";
                for (std::size_t i = 0; i < x.args.size(); ++i) {
                    if (i) s += ", ";
                    s += print_value(x.args[i]);
                }
                return s + ")";
            }
        },
        v->node);
}

namespace {

std::string args_str(const std::vector<ValuePtr>& vs) {
    std::string s = "(";
    for (std::size_t i = 0; i < vs.size(); ++i) {
        if (i) s += ", ";
        s += print_value(vs[i]);
    }
    return s + ")";
}

void print_body_into(std::ostringstream& os, const BodyPtr& a, int indent) {
    auto pad = [&](int n) { return std::string(static_cast<std::size_t>(n) * 2, ' '); };
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, ValB>) os << print_value(n.value);
            else if constexpr (std::is_same_v<T, LetB>) {
                os << "let " << n.var << " = ";
                bool nested = n.bound->template as<LetB>() || n.bound->template as<IfB>();
                if (nested) {
                    os << "(\n" << pad(indent + 1);
                    print_body_into(os, n.bound, indent + 1);
                    os << ")";
                } else {
                    print_body_into(os, n.bound, indent);
                }
                os << " in\n" << pad(indent);
                print_body_into(os, n.body, indent);
            } else if constexpr (std::is_same_v<T, IfB>) {
                os << "if " << print_value(n.lhs) << " = " << print_value(n.rhs) << " then\n" << pad(indent + 1);
                print_body_into(os, n.then_b, indent + 1);
                os << "\n" << pad(indent) << "else\n" << pad(indent + 1);
                print_body_into(os, n.else_b, indent + 1);
            } else if constexpr (std::is_same_v<T, FieldB>) {
                os << print_value(n.target) << "." << n.field;
            } else if constexpr (std::is_same_v<T, InvokeB>) {
                os << print_value(n.target) << "." << n.method << args_str(n.args);
            } else if constexpr (std::is_same_v<T, CallB>) {
                os << n.service << ":" << n.method << args_str(n.args);
            } else {
                os << n.principal << "[";
                print_body_into(os, n.body, indent + 1);
                os << "]";
            }
        },
        a->node);
}

void print_class(std::ostringstream& os, const ClassDef& c) {
    os << "class " << c.name << "\n";
    for (const auto& [f, t] : c.fields) os << "  " << t.str() << " " << f << "\n";
    for (const auto& [m, def] : c.methods) {
        os << "  ";
        if (def.level != SecurityLevel::None) os << "@" << to_string(def.level) << " ";
        os << def.sig.result.str() << " " << m << "(";
        for (std::size_t i = 0; i < def.sig.params.size(); ++i) {
            if (i) os << ", ";
            os << def.sig.params[i].second.str() << " " << def.sig.params[i].first;
        }
        os << ") =\n    ";
        print_body_into(os, def.body, 2);
        os << "\n";
    }
    os << "end\n";
}

} // namespace

std::string print_body(const BodyPtr& a) {
    std::ostringstream os;
    print_body_into(os, a, 0);
    return os.str();
}

std::string print_environment(const ExecutionEnvironment& env) {
    std::ostringstream os;
    if (!env.principals.empty()) {
        os << "principals ";
        bool first = true;
        for (const auto& p : env.principals) {
            if (!first) os << ", ";
            os << p;
            first = false;
        }
        os << "\n\n";
    }
    for (const auto& [name, c] : env.classes) {
        print_class(os, c);
        os << "\n";
    }
    for (const auto& [name, s] : env.services) {
        os << "service " << s.name;
        if (!s.url.empty()) os << " \"" << s.url << "\"";
        os << " owner " << s.owner << " class " << s.cls << "\n";
    }
    return os.str();
}

std::string print_program(const Program& p) {
    std::ostringstream os;
    os << print_environment(p.env);
    for (const auto& [name, b] : p.bodies) os << "\nbody " << name << " =\n  " << print_body(b) << "\n";
    return os.str();
}

// ---- json ----

nlohmann::json to_json(const ValuePtr& v) {
    using nlohmann::json;
    if (auto n = as_num(v)) return json{{"kind", "num"}, {"value", *n}};
    return std::visit(
        [](const auto& x) -> json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, VarV>) return json{{"kind", "var"}, {"name", x.name}};
            else if constexpr (std::is_same_v<T, NullV>) return json{{"kind", "null"}};
            else if constexpr (std::is_same_v<T, PrinV>) return json{{"kind", "prin"}, {"name", x.name}};
            else {
                json args = json::array();
                for (const auto& a : x.args) args.push_back(to_json(a));
                return json{{"kind", "new"}, {"class", x.cls}, {"args", args}};
            }
        },
        v->node);
}

namespace {
nlohmann::json values_json(const std::vector<ValuePtr>& vs) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& v : vs) a.push_back(to_json(v));
    return a;
}
} // namespace

nlohmann::json to_json(const BodyPtr& a) {
    using nlohmann::json;
    return std::visit(
        [](const auto& n) -> json {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, ValB>) return json{{"kind", "val"}, {"value", to_json(n.value)}};
            else if constexpr (std::is_same_v<T, LetB>)
                return json{{"kind", "let"}, {"var", n.var}, {"bound", to_json(n.bound)}, {"body", to_json(n.body)}};
            else if constexpr (std::is_same_v<T, IfB>)
                return json{{"kind", "if"},
                            {"lhs", to_json(n.lhs)},
                            {"rhs", to_json(n.rhs)},
                            {"then", to_json(n.then_b)},
                            {"else", to_json(n.else_b)}};
            else if constexpr (std::is_same_v<T, FieldB>)
                return json{{"kind", "field"}, {"target", to_json(n.target)}, {"field", n.field}};
            else if constexpr (std::is_same_v<T, InvokeB>)
                return json{{"kind", "invoke"},
                            {"target", to_json(n.target)},
                            {"method", n.method},
                            {"args", values_json(n.args)}};
            else if constexpr (std::is_same_v<T, CallB>)
                return json{
                    {"kind", "call"}, {"service", n.service}, {"method", n.method}, {"args", values_json(n.args)}};
            else
                return json{{"kind", "running"}, {"principal", n.principal}, {"body", to_json(n.body)}};
        },
        a->node);
}

nlohmann::json to_json(const ExecutionEnvironment& env) {
    using nlohmann::json;
    json classes = json::object();
    for (const auto& [name, c] : env.classes) {
        json fields = json::array();
        for (const auto& [f, t] : c.fields) fields.push_back(json{{"name", f}, {"type", t.str()}});
        json methods = json::object();
        for (const auto& [m, d] : c.methods) {
            json params = json::array();
            for (const auto& [x, t] : d.sig.params) params.push_back(json{{"name", x}, {"type", t.str()}});
            methods[m] = json{{"result", d.sig.result.str()},
                              {"params", params},
                              {"level", std::string(to_string(d.level))},
                              {"body", to_json(d.body)}};
        }
        classes[name] = json{{"fields", fields}, {"methods", methods}};
    }
    json services = json::object();
    for (const auto& [name, s] : env.services)
        services[name] = json{{"url", s.url}, {"owner", s.owner}, {"class", s.cls}};
    return json{{"principals", env.principals}, {"classes", classes}, {"services", services}};
}

} // namespace wsec::obj
