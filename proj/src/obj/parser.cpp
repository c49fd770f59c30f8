#include "wsec/obj/parser.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace wsec::obj {

ParseError::ParseError(SourcePos p, const std::string& msg)
    : std::runtime_error("[syntax error (line " + std::to_string(p.line) + ", col " + std::to_string(p.col) + ")] " +
                         msg),
      pos(p) {}

namespace {

// ---- lexer ----

enum class TK { Ident, Number, String, Sym, End };

struct Tok {
    TK kind;
    std::string text;
    SourcePos pos;
};

std::vector<Tok> lex(std::string_view src) {
    std::vector<Tok> out;
    int line = 1, col = 1;
    std::size_t i = 0;
    auto adv = [&] {
        if (src[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
        ++i;
    };
    while (i < src.size()) {
        char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            adv();
            continue;
        }
        if (c == '#' || (c == '/' && i + 1 < src.size() && src[i + 1] == '/')) {
            while (i < src.size() && src[i] != '\n') adv();
            continue;
        }
        SourcePos p{line, col};
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::string s;
            while (i < src.size() &&
                   (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_' || src[i] == '\'')) {
                s += src[i];
                adv();
            }
            out.push_back({TK::Ident, s, p});
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::string s;
            while (i < src.size() && std::isdigit(static_cast<unsigned char>(src[i]))) {
                s += src[i];
                adv();
            }
            out.push_back({TK::Number, s, p});
        } else if (c == '"') {
            adv();
            std::string s;
            while (i < src.size() && src[i] != '"') {
                if (src[i] == '\n') throw ParseError(p, "unterminated string literal");
                s += src[i];
                adv();
            }
            if (i >= src.size()) throw ParseError(p, "unterminated string literal");
            adv();
            out.push_back({TK::String, s, p});
        } else if (std::string_view("(),.:=;[]@{}").find(c) != std::string_view::npos) {
            out.push_back({TK::Sym, std::string(1, c), p});
            adv();
        } else {
            throw ParseError(p, std::string("unexpected character '") + c + "'");
        }
    }
    out.push_back({TK::End, "", {line, col}});
    return out;
}

const std::set<std::string>& keywords() {
    static const std::set<std::string> k{"class", "end",  "let", "in",         "if",      "then",  "else",
                                         "new",   "null", "Id",  "principals", "service", "owner", "body"};
    return k;
}

constexpr std::size_t kMaxLiteral = 1000000;

// ---- parser ----

class Parser {
public:
    Parser(std::vector<Tok> toks, std::set<std::string> principals)
        : toks_(std::move(toks)), principals_(std::move(principals)) {
        for (const auto& t : toks_)
            if (t.kind == TK::Ident) idents_.insert(t.text);
    }

    Program program() {
        Program prog;
        prog.env.principals = principals_;
        std::set<std::string> body_names;
        while (!at_end()) {
            const Tok& t = peek();
            if (is_kw("principals")) {
                next();
                do {
                    ident("principal name");
                } while (accept(","));
                accept(";");
            } else if (is_kw("class")) {
                ClassDef c = class_decl();
                if (prog.env.classes.count(c.name)) throw ParseError(c.pos, "duplicate class " + c.name);
                prog.env.classes.emplace(c.name, std::move(c));
            } else if (is_kw("service")) {
                next();
                SourcePos p = peek().pos;
                ServiceDef s;
                s.name = ident("service name");
                if (peek().kind == TK::String) s.url = next().text;
                expect_kw("owner");
                s.owner = ident("owner principal");
                expect_kw("class");
                s.cls = ident("service class");
                accept(";");
                if (prog.env.services.count(s.name)) throw ParseError(p, "duplicate service " + s.name);
                service_pos_.emplace(s.name, p);
                prog.env.services.emplace(s.name, std::move(s));
            } else if (is_kw("body")) {
                next();
                SourcePos p = peek().pos;
                std::string name = ident("body name");
                if (!body_names.insert(name).second) throw ParseError(p, "duplicate body " + name);
                expect("=");
                scope_.clear();
                BodyPtr b = body();
                accept(";");
                prog.bodies.emplace_back(name, b);
            } else {
                throw ParseError(t.pos, "expected declaration, found '" + t.text + "'");
            }
        }
        for (const auto& [name, s] : prog.env.services) {
            SourcePos p = service_pos_.at(name);
            if (!prog.env.is_principal(s.owner))
                throw ParseError(p, "service " + name + " has unknown owner " + s.owner);
            if (!prog.env.find_class(s.cls)) throw ParseError(p, "service " + name + " has unknown class " + s.cls);
        }
        return prog;
    }

    BodyPtr single_body() {
        scope_.clear();
        BodyPtr b = body();
        if (!at_end()) throw ParseError(peek().pos, "trailing input '" + peek().text + "'");
        return b;
    }

private:
    std::vector<Tok> toks_;
    std::size_t pos_ = 0;
    std::set<std::string> principals_;
    std::set<std::string> idents_;
    std::vector<std::string> scope_;
    std::map<std::string, SourcePos> service_pos_;
    std::size_t fresh_ = 0;

    const Tok& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
    const Tok& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
    bool at_end() const { return peek().kind == TK::End; }
    bool is_sym(const char* s, std::size_t k = 0) const { return peek(k).kind == TK::Sym && peek(k).text == s; }
    bool is_kw(const char* s) const { return peek().kind == TK::Ident && peek().text == s; }
    bool accept(const char* s) {
        if (is_sym(s)) {
            next();
            return true;
        }
        return false;
    }
    void expect(const char* s) {
        if (!accept(s)) throw ParseError(peek().pos, std::string("expected '") + s + "', found '" + peek().text + "'");
    }
    void expect_kw(const char* s) {
        if (!is_kw(s)) throw ParseError(peek().pos, std::string("expected '") + s + "', found '" + peek().text + "'");
        next();
    }
    std::string ident(const char* what) {
        const Tok& t = peek();
        if (t.kind != TK::Ident || keywords().count(t.text))
            throw ParseError(t.pos, std::string("expected ") + what + ", found '" + t.text + "'");
        next();
        return t.text;
    }

    std::string fresh() {
        while (true) {
            std::string cand = "_" + std::to_string(++fresh_);
            if (!idents_.count(cand)) return cand;
        }
    }

    ObjType type() {
        const Tok& t = peek();
        if (t.kind == TK::Ident && t.text == "Id") {
            next();
            return ObjType::id();
        }
        return ObjType::of_class(ident("type"));
    }

    void check_binder(const std::string& x, SourcePos p) const {
        if (principals_.count(x)) throw ParseError(p, "variable " + x + " shadows a principal");
    }

    ClassDef class_decl() {
        expect_kw("class");
        ClassDef c;
        c.pos = peek().pos;
        c.name = ident("class name");
        if (c.name == "null") throw ParseError(c.pos, "class may not be named null");
        while (!is_kw("end")) {
            if (at_end()) throw ParseError(peek().pos, "unterminated class " + c.name);
            SecurityLevel level = SecurityLevel::None;
            bool has_level = false;
            if (accept("@")) {
                SourcePos lp = peek().pos;
                auto l = parse_security_level(ident("security level"));
                if (!l) throw ParseError(lp, "unknown security level");
                level = *l;
                has_level = true;
            }
            SourcePos mp = peek().pos;
            ObjType t = type();
            std::string name = ident("member name");
            if (accept("(")) {
                MethodDef m;
                m.pos = mp;
                m.level = level;
                m.sig.result = t;
                std::set<std::string> seen;
                if (!is_sym(")")) {
                    do {
                        SourcePos pp = peek().pos;
                        ObjType pt = type();
                        std::string pn = ident("parameter name");
                        if (pn == "this") throw ParseError(pp, "parameter may not be named this");
                        check_binder(pn, pp);
                        if (!seen.insert(pn).second) throw ParseError(pp, "duplicate parameter " + pn);
                        m.sig.params.emplace_back(pn, pt);
                    } while (accept(","));
                }
                expect(")");
                expect("=");
                scope_.assign({"this"});
                for (const auto& [pn, pt] : m.sig.params) scope_.push_back(pn);
                m.body = body();
                scope_.clear();
                if (c.methods.count(name)) throw ParseError(mp, "duplicate method " + c.name + "." + name);
                if (c.field_index(name)) throw ParseError(mp, "method " + name + " clashes with a field");
                c.methods.emplace(name, std::move(m));
            } else {
                if (has_level) throw ParseError(mp, "security level on a field");
                if (c.field_index(name)) throw ParseError(mp, "duplicate field " + c.name + "." + name);
                if (c.methods.count(name)) throw ParseError(mp, "field " + name + " clashes with a method");
                c.fields.emplace_back(name, t);
            }
            accept(";");
        }
        expect_kw("end");
        return c;
    }

    // ---- bodies ----

    using Pre = std::vector<std::pair<std::string, BodyPtr>>;

    ValuePtr to_value(const BodyPtr& b, Pre& pre) {
        if (const auto* v = b->as<ValB>()) return v->value;
        std::string x = fresh();
        pre.emplace_back(x, b);
        return mk_var(x);
    }

    static BodyPtr wrap(const Pre& pre, BodyPtr b) {
        for (auto it = pre.rbegin(); it != pre.rend(); ++it) b = mk_let(it->first, it->second, b, it->second->pos);
        return b;
    }

    BodyPtr body() {
        SourcePos p = peek().pos;
        if (is_kw("let")) {
            next();
            SourcePos xp = peek().pos;
            std::string x = ident("variable");
            check_binder(x, xp);
            expect("=");
            BodyPtr bound = body();
            expect_kw("in");
            scope_.push_back(x);
            BodyPtr rest = body();
            scope_.pop_back();
            return mk_let(x, bound, rest, p);
        }
        if (is_kw("if")) {
            next();
            Pre pre;
            ValuePtr u = to_value(postfix(), pre);
            expect("=");
            ValuePtr v = to_value(postfix(), pre);
            expect_kw("then");
            BodyPtr a = body();
            expect_kw("else");
            BodyPtr b = body();
            return wrap(pre, mk_if(u, v, a, b, p));
        }
        return postfix();
    }

    std::vector<ValuePtr> args(Pre& pre) {
        std::vector<ValuePtr> out;
        expect("(");
        if (!is_sym(")")) {
            do {
                out.push_back(to_value(body(), pre));
            } while (accept(","));
        }
        expect(")");
        return out;
    }

    BodyPtr postfix() {
        BodyPtr cur = primary();
        while (is_sym(".")) {
            SourcePos p = peek().pos;
            next();
            std::string name = ident("field or method name");
            Pre pre;
            ValuePtr target = to_value(cur, pre);
            if (is_sym("(")) {
                std::vector<ValuePtr> as = args(pre);
                cur = wrap(pre, mk_invoke(target, name, std::move(as), p));
            } else {
                cur = wrap(pre, mk_field(target, name, p));
            }
        }
        return cur;
    }

    BodyPtr primary() {
        const Tok& t = peek();
        SourcePos p = t.pos;
        if (t.kind == TK::Number) {
            next();
            if (t.text.size() > 7 || std::stoull(t.text) > kMaxLiteral)
                throw ParseError(p, "numeric literal too large");
            return mk_val(mk_num(std::stoull(t.text)), p);
        }
        if (is_sym("(")) {
            next();
            BodyPtr b = body();
            expect(")");
            return b;
        }
        if (t.kind != TK::Ident) throw ParseError(p, "expected a body, found '" + t.text + "'");
        if (t.text == "null") {
            next();
            return mk_val(mk_null(), p);
        }
        if (t.text == "new") {
            next();
            std::string c = ident("class name");
            Pre pre;
            std::vector<ValuePtr> as = args(pre);
            return wrap(pre, mk_val(mk_new(c, std::move(as)), p));
        }
        if (keywords().count(t.text)) throw ParseError(p, "unexpected keyword '" + t.text + "'");
        std::string name = t.text;
        next();
        if (is_sym("[")) throw ParseError(p, "running form " + name + "[...] may not appear in source");
        if (is_sym(":")) {
            next();
            std::string m = ident("web method name");
            Pre pre;
            std::vector<ValuePtr> as = args(pre);
            return wrap(pre, mk_call(name, m, std::move(as), p));
        }
        bool bound = std::find(scope_.begin(), scope_.end(), name) != scope_.end();
        if (!bound && principals_.count(name)) return mk_val(mk_prin(name), p);
        return mk_val(mk_var(name), p);
    }
};

std::set<std::string> prescan_principals(const std::vector<Tok>& toks) {
    std::set<std::string> out;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (toks[i].kind != TK::Ident || toks[i].text != "principals") continue;
        std::size_t j = i + 1;
        while (j < toks.size() && toks[j].kind == TK::Ident) {
            if (keywords().count(toks[j].text)) throw ParseError(toks[j].pos, "keyword used as principal name");
            if (!out.insert(toks[j].text).second) throw ParseError(toks[j].pos, "duplicate principal " + toks[j].text);
            if (j + 1 < toks.size() && toks[j + 1].kind == TK::Sym && toks[j + 1].text == ",") j += 2;
            else break;
        }
    }
    return out;
}

} // namespace

Program parse_program(std::string_view text) {
    auto toks = lex(text);
    auto principals = prescan_principals(toks);
    Parser p(std::move(toks), std::move(principals));
    return p.program();
}

BodyPtr parse_body(std::string_view text, const ExecutionEnvironment& env) {
    Parser p(lex(text), env.principals);
    return p.single_body();
}

} // namespace wsec::obj
