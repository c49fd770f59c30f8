#include "wsec/spi/parser.hpp"
#include "wsec/spi/printer.hpp"

#include <algorithm>
#include <cctype>

namespace wsec::spi {

SpiParseError::SpiParseError(int l, int c, const std::string& msg)
    : std::runtime_error("[syntax error (line " + std::to_string(l) + ", col " + std::to_string(c) + ")] " + msg),
      line(l), col(c) {}

namespace {

enum class TK { Ident, Sym, End };

struct Tok {
    TK kind;
    std::string text;
    int line, col;
    bool adjacent; // no whitespace before this token
};

std::vector<Tok> lex(std::string_view src) {
    std::vector<Tok> out;
    int line = 1, col = 1;
    std::size_t i = 0;
    bool space = true;
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
            space = true;
            continue;
        }
        if (c == '#' || (c == '/' && i + 1 < src.size() && src[i + 1] == '/')) {
            while (i < src.size() && src[i] != '\n') adv();
            space = true;
            continue;
        }
        int l = line, co = col;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || std::isdigit(static_cast<unsigned char>(c))) {
            std::string s;
            while (i < src.size() &&
                   (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_' || src[i] == '\'')) {
                s += src[i];
                adv();
            }
            out.push_back({TK::Ident, s, l, co, !space});
        } else {
            std::string_view rest = src.substr(i);
            std::string sym;
            for (std::string_view two : {"{|", "|}", "=>"})
                if (rest.substr(0, 2) == two) sym = std::string(two);
            if (sym.empty()) {
                if (std::string_view("(){}[],;:|=").find(c) == std::string_view::npos)
                    throw SpiParseError(l, co, std::string("unexpected character '") + c + "'");
                sym = std::string(1, c);
            }
            for (std::size_t k = 0; k < sym.size(); ++k) adv();
            out.push_back({TK::Sym, sym, l, co, !space});
        }
        space = false;
    }
    out.push_back({TK::End, "", line, col, false});
    return out;
}

class Parser {
public:
    explicit Parser(std::string_view text) : toks_(lex(text)) {}

    SpiFile file() {
        SpiFile f;
        while (is_ident("public")) {
            next();
            f.publics_declared = true;
            f.publics.push_back(source_name(ident("public name")));
            while (accept(",")) f.publics.push_back(source_name(ident("public name")));
            expect(";");
        }
        f.process = proc();
        end_of_input();
        return f;
    }

    ProcPtr whole_process() {
        ProcPtr p = proc();
        end_of_input();
        return p;
    }

    MsgPtr whole_message() {
        MsgPtr m = msg();
        end_of_input();
        return m;
    }

    TypePtr whole_type() {
        TypePtr t = type();
        end_of_input();
        return t;
    }

private:
    std::vector<Tok> toks_;
    std::size_t pos_ = 0;

    const Tok& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
    const Tok& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

    [[noreturn]] void fail(const std::string& msg) const {
        const Tok& t = peek();
        std::string found = t.kind == TK::End ? "end of input" : "'" + t.text + "'";
        throw SpiParseError(t.line, t.col, msg + ", found " + found);
    }

    bool is_sym(std::string_view s, std::size_t k = 0) const {
        return peek(k).kind == TK::Sym && peek(k).text == s;
    }
    bool is_ident(std::string_view s) const { return peek().kind == TK::Ident && peek().text == s; }
    bool accept(std::string_view s) {
        if (!is_sym(s)) return false;
        next();
        return true;
    }
    void expect(std::string_view s) {
        if (!accept(s)) fail("expected '" + std::string(s) + "'");
    }
    void keyword(std::string_view s) {
        if (!is_ident(s)) fail("expected '" + std::string(s) + "'");
        next();
    }
    std::string ident(const std::string& what) {
        if (peek().kind != TK::Ident || is_spi_keyword_token(peek().text) ||
            std::isdigit(static_cast<unsigned char>(peek().text[0])))
            fail("expected " + what);
        return next().text;
    }
    void end_of_input() {
        if (peek().kind != TK::End) fail("expected end of input");
    }

    static bool is_spi_keyword_token(const std::string& s) {
        static const char* kw[] = {"out",   "in",    "repeat",  "split", "match", "case",  "if",    "then",
                                   "else",  "new",   "stop",    "decrypt", "check", "begin", "end",   "cast",
                                   "witness", "trust", "is",    "public"};
        for (const char* k : kw)
            if (s == k) return true;
        return false;
    }

    // ---- processes ----

    ProcPtr proc() {
        std::vector<ProcPtr> parts{seq()};
        while (accept("|")) parts.push_back(seq());
        return p_par(parts);
    }

    ProcPtr cont() { return accept(";") ? seq() : p_stop(); }

    Binder bind() {
        Binder b{source_name(ident("a name to bind")), nullptr};
        if (accept(":")) b.type = type();
        if (is_un(b.type)) b.type = nullptr;
        return b;
    }

    MsgPtr chan() {
        if (peek().kind == TK::Ident && !is_spi_keyword_token(peek().text) && peek().text != "Encrypt" &&
            peek().text != "Decrypt" && is_sym("(", 1))
            return m_name(source_name(next().text));
        return msg();
    }

    ProcPtr seq() {
        if (accept("(")) {
            ProcPtr p = proc();
            expect(")");
            return p;
        }
        if (peek().kind != TK::Ident) fail("expected a process");
        std::string kw = peek().text;
        if (kw == "stop") {
            next();
            return p_stop();
        }
        if (kw == "out") {
            next();
            MsgPtr c = msg();
            MsgPtr m = msg();
            ProcPtr out = p_out(c, m);
            if (accept(";")) return p_par(out, seq());
            return out;
        }
        if (kw == "in" || kw == "repeat") {
            next();
            bool rep = kw == "repeat";
            if (rep) keyword("in");
            MsgPtr c = chan();
            expect("(");
            Binder x = bind();
            expect(")");
            ProcPtr p = cont();
            return rep ? p_rep_in(c, x, p) : p_in(c, x, p);
        }
        if (kw == "split") {
            next();
            MsgPtr m = msg();
            keyword("is");
            expect("(");
            std::vector<Binder> xs;
            if (!is_sym(")")) {
                xs.push_back(bind());
                while (accept(",")) xs.push_back(bind());
            }
            expect(")");
            return p_split(m, xs, cont());
        }
        if (kw == "match") {
            next();
            MsgPtr m = msg();
            keyword("is");
            expect("(");
            MsgPtr n = msg();
            expect(",");
            Binder y = bind();
            expect(")");
            return p_match(m, n, y, cont());
        }
        if (kw == "case") {
            next();
            MsgPtr m = msg();
            expect("{");
            std::vector<CaseBranch> bs;
            if (!is_sym("}")) {
                do {
                    Symbol tag(ident("a tag"));
                    for (const auto& b : bs)
                        if (b.tag == tag) fail("duplicate tag " + tag.str() + " in case");
                    expect("(");
                    Binder x = bind();
                    expect(")");
                    expect("=>");
                    bs.push_back({tag, x, seq()});
                } while (accept(","));
            }
            expect("}");
            return p_case(m, std::move(bs));
        }
        if (kw == "if") {
            next();
            MsgPtr m = msg();
            expect("=");
            MsgPtr n = msg();
            keyword("then");
            ProcPtr a = seq();
            keyword("else");
            ProcPtr b = seq();
            return p_if(m, n, a, b);
        }
        if (kw == "new") {
            next();
            Binder x = bind();
            return p_new(x, cont());
        }
        if (kw == "decrypt") {
            next();
            MsgPtr m = msg();
            keyword("is");
            bool asym = accept("{|");
            if (!asym) expect("{");
            Binder x = bind();
            expect(asym ? "|}" : "}");
            MsgPtr k = msg();
            ProcPtr p = cont();
            return asym ? p_asymdec(m, x, k, p) : p_symdec(m, x, k, p);
        }
        if (kw == "check") {
            next();
            MsgPtr m = msg();
            keyword("is");
            MsgPtr n = msg();
            return p_check(m, n, cont());
        }
        if (kw == "begin" || kw == "end") {
            next();
            MsgPtr l = msg();
            ProcPtr p = cont();
            return kw == "begin" ? p_begin(l, p) : p_end(l, p);
        }
        if (kw == "cast" || kw == "trust") {
            next();
            MsgPtr m = msg();
            keyword("is");
            expect("(");
            Binder x = bind();
            expect(")");
            ProcPtr p = cont();
            return kw == "cast" ? p_cast(m, x, p) : p_trust(m, x, p);
        }
        if (kw == "witness") {
            next();
            MsgPtr m = msg();
            expect(":");
            TypePtr t = type();
            return p_witness(m, t, cont());
        }
        fail("expected a process");
    }

    // ---- messages ----

    std::vector<MsgPtr> msg_list(std::string_view close, bool& trailing_comma) {
        std::vector<MsgPtr> out;
        trailing_comma = false;
        if (is_sym(close)) return out;
        out.push_back(msg());
        while (accept(",")) {
            if (is_sym(close)) {
                trailing_comma = true;
                break;
            }
            out.push_back(msg());
        }
        return out;
    }

    MsgPtr msg() {
        if (accept("(")) {
            bool trailing = false;
            auto items = msg_list(")", trailing);
            expect(")");
            if (items.size() == 1 && !trailing) return items[0];
            return m_record(std::move(items));
        }
        if (accept("{|")) {
            MsgPtr plain = msg();
            expect("|}");
            return m_asymenc(plain, msg());
        }
        if (accept("{")) {
            MsgPtr plain = msg();
            expect("}");
            return m_symenc(plain, msg());
        }
        if (peek().kind != TK::Ident || is_spi_keyword_token(peek().text)) fail("expected a message");
        std::string id = next().text;
        if (std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isdigit(c) != 0; })) {
            if (id.size() > 9) fail("numeral too large");
            return m_numeral(std::stoul(id));
        }
        if ((id == "Encrypt" || id == "Decrypt") && is_sym("(")) {
            next();
            MsgPtr m = msg();
            expect(")");
            return m_keypart(id == "Encrypt" ? KeyAttr::Encrypt : KeyAttr::Decrypt, m);
        }
        if (is_sym("(") && peek().adjacent) {
            next();
            bool trailing = false;
            auto items = msg_list(")", trailing);
            expect(")");
            if (trailing) fail("unexpected ',' in tag arguments");
            if (items.size() == 1) return m_tagged(id, items[0]);
            return m_tagged(id, m_record(std::move(items)));
        }
        return m_name(source_name(id));
    }

    // ---- types ----

    NonceLevel level() {
        if (is_ident("Public")) {
            next();
            return NonceLevel::Public;
        }
        if (is_ident("Private")) {
            next();
            return NonceLevel::Private;
        }
        fail("expected Public or Private");
    }

    Effect effect() {
        Effect es;
        expect("[");
        if (!is_sym("]")) {
            do {
                if (is_ident("end")) {
                    next();
                    es.push_back(e_end(msg()));
                } else if (is_ident("check")) {
                    next();
                    NonceLevel l = level();
                    es.push_back(e_check(l, msg()));
                } else if (is_ident("trust")) {
                    next();
                    MsgPtr m = msg();
                    expect(":");
                    es.push_back(e_trust(m, type()));
                } else {
                    fail("expected an atomic effect");
                }
            } while (accept(","));
        }
        expect("]");
        return es;
    }

    TypePtr type() {
        if (accept("(")) {
            std::vector<std::pair<Name, TypePtr>> fields;
            if (!is_sym(")")) {
                do {
                    Name x = source_name(ident("a field name"));
                    expect(":");
                    fields.emplace_back(x, type());
                } while (accept(","));
            }
            expect(")");
            return t_record(std::move(fields));
        }
        if (peek().kind != TK::Ident) fail("expected a type");
        std::string k = next().text;
        if (k == "Un") return t_un();
        if (k == "Top") return t_top();
        if (k == "Union") {
            expect("(");
            std::vector<std::pair<Symbol, TypePtr>> cases;
            do {
                Symbol tag(ident("a tag"));
                expect("(");
                cases.emplace_back(tag, type());
                expect(")");
            } while (accept(","));
            expect(")");
            return t_union(std::move(cases));
        }
        if (k == "SharedKey" || k == "KeyPair") {
            expect("(");
            TypePtr t = type();
            expect(")");
            return k == "SharedKey" ? t_shared_key(t) : t_key_pair(t);
        }
        if (k == "Encrypt" || k == "Decrypt") {
            keyword("Key");
            expect("(");
            TypePtr t = type();
            expect(")");
            return t_key(k == "Encrypt" ? KeyAttr::Encrypt : KeyAttr::Decrypt, t);
        }
        if (k == "Public" || k == "Private") {
            NonceLevel l = k == "Public" ? NonceLevel::Public : NonceLevel::Private;
            if (is_ident("Challenge")) {
                next();
                return t_challenge(l, effect());
            }
            keyword("Response");
            return t_response(l, effect());
        }
        --pos_;
        fail("expected a type");
    }
};

} // namespace

SpiFile parse_spi_file(std::string_view text) { return Parser(text).file(); }
ProcPtr parse_process(std::string_view text) { return Parser(text).whole_process(); }
MsgPtr parse_message(std::string_view text) { return Parser(text).whole_message(); }
TypePtr parse_type(std::string_view text) { return Parser(text).whole_type(); }

} // namespace wsec::spi
