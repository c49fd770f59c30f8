#include "wsec/spi/printer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <mutex>

namespace wsec::spi {

bool is_spi_keyword(const std::string& s) {
    static const std::set<std::string> kw{"out",   "in",    "repeat",  "split", "match",   "case",  "if",
                                          "then",  "else",  "new",     "stop",  "decrypt", "check", "begin",
                                          "end",   "cast",  "witness", "trust", "is",      "public", "Encrypt",
                                          "Decrypt"};
    return kw.count(s) != 0 || (!s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
                                   return std::isdigit(c) != 0;
                               }));
}

std::optional<std::size_t> as_numeral(const MsgPtr& m) {
    static const Symbol num("Num"), null_tag("null");
    std::size_t n = 0;
    const Message* cur = m.get();
    while (cur->kind == MsgKind::Tagged && cur->tag == num) {
        cur = cur->kids[0].get();
        ++n;
    }
    if (n == 0 || cur->kind != MsgKind::Tagged || cur->tag != null_tag || cur->kids[0]->kind != MsgKind::Record ||
        !cur->kids[0]->kids.empty())
        return std::nullopt;
    return n - 1;
}

MsgPtr m_numeral(std::size_t n) {
    static std::mutex mu;
    static auto& cache = *new std::vector<MsgPtr>(); // never destroyed
    std::lock_guard<std::mutex> lock(mu);
    if (cache.empty()) cache.push_back(m_tagged("Num", m_tagged("null", m_record({}))));
    while (cache.size() <= n) cache.push_back(m_tagged("Num", cache.back()));
    return cache[n];
}

std::string Printer::name(const Name& n) {
    if (auto it = display_.find(n); it != display_.end()) return it->second;
    std::string base = n.id.str();
    std::string s = base;
    for (int k = 1; used_.count(s) || is_spi_keyword(s); ++k) s = base + "_" + std::to_string(k);
    used_.insert(s);
    display_.emplace(n, s);
    return s;
}

std::string Printer::message(const MsgPtr& m) {
    switch (m->kind) {
    case MsgKind::Name: return name(m->name);
    case MsgKind::Record: {
        std::string s = "(";
        for (std::size_t i = 0; i < m->kids.size(); ++i) s += (i ? ", " : "") + message(m->kids[i]);
        if (m->kids.size() == 1) s += ",";
        return s + ")";
    }
    case MsgKind::Tagged: {
        if (auto n = as_numeral(m)) return std::to_string(*n);
        const MsgPtr& b = m->kids[0];
        std::string s = m->tag.str() + "(";
        if (b->kind == MsgKind::Record && b->kids.size() != 1) {
            for (std::size_t i = 0; i < b->kids.size(); ++i) s += (i ? ", " : "") + message(b->kids[i]);
        } else {
            s += message(b);
        }
        return s + ")";
    }
    case MsgKind::SymEnc: return "{" + message(m->kids[0]) + "}" + message(m->kids[1]);
    case MsgKind::AsymEnc: return "{|" + message(m->kids[0]) + "|}" + message(m->kids[1]);
    case MsgKind::KeyPart:
        return std::string(m->attr == KeyAttr::Encrypt ? "Encrypt(" : "Decrypt(") + message(m->kids[0]) + ")";
    }
    return "?";
}

void Printer::atomic_effect(std::string& out, const AtomicEffect& e) {
    switch (e.kind) {
    case AtomicEffect::Kind::End: out += "end " + message(e.msg); break;
    case AtomicEffect::Kind::Check:
        out += std::string("check ") + (e.level == NonceLevel::Public ? "Public " : "Private ") + message(e.msg);
        break;
    case AtomicEffect::Kind::Trust: out += "trust " + message(e.msg) + " : " + type(e.type); break;
    }
}

std::string Printer::effect(const Effect& es) {
    std::string s = "[";
    for (std::size_t i = 0; i < es.size(); ++i) {
        if (i) s += ", ";
        atomic_effect(s, es[i]);
    }
    return s + "]";
}

std::string Printer::type(const TypePtr& t) {
    if (is_un(t)) return "Un";
    switch (t->kind) {
    case TypeKind::Top: return "Top";
    case TypeKind::Record: {
        std::string s = "(";
        for (std::size_t i = 0; i < t->fields.size(); ++i)
            s += (i ? ", " : "") + name(t->fields[i].first) + ":" + type(t->fields[i].second);
        return s + ")";
    }
    case TypeKind::Union: {
        std::string s = "Union(";
        for (std::size_t i = 0; i < t->cases.size(); ++i)
            s += (i ? ", " : "") + t->cases[i].first.str() + "(" + type(t->cases[i].second) + ")";
        return s + ")";
    }
    case TypeKind::SharedKey: return "SharedKey(" + type(t->inner) + ")";
    case TypeKind::KeyPair: return "KeyPair(" + type(t->inner) + ")";
    case TypeKind::Key:
        return std::string(t->attr == KeyAttr::Encrypt ? "Encrypt" : "Decrypt") + " Key(" + type(t->inner) + ")";
    case TypeKind::Challenge:
    case TypeKind::Response:
        return std::string(t->level == NonceLevel::Public ? "Public " : "Private ") +
               (t->kind == TypeKind::Challenge ? "Challenge" : "Response") + effect(t->effect);
    default: return "Un";
    }
}

std::string Printer::binder(const Binder& b) {
    if (is_un(b.type)) return name(b.name);
    return name(b.name) + ":" + type(b.type);
}

namespace {

std::string pad(int n) { return std::string(static_cast<std::size_t>(n), ' '); }

} // namespace

// A process in a continuation position: composition needs parentheses.
std::string Printer::seq(const ProcPtr& p, int indent) {
    if (p->kind != ProcKind::Par) return process(p, indent);
    return "(\n" + pad(indent + 2) + process(p, indent + 2) + "\n" + pad(indent) + ")";
}

std::string Printer::process(const ProcPtr& p, int indent) {
    auto cont = [&](const std::string& head) {
        const ProcPtr& k = p->kids[0];
        if (k->kind == ProcKind::Stop) return head;
        return head + ";\n" + pad(indent) + seq(k, indent);
    };
    auto chan = [&](const MsgPtr& c) { return c->is_name() ? message(c) : "(" + message(c) + ")"; };
    switch (p->kind) {
    case ProcKind::Stop: return "stop";
    case ProcKind::Out: return "out " + message(p->msgs[0]) + " " + message(p->msgs[1]);
    case ProcKind::In: return cont("in " + chan(p->msgs[0]) + "(" + binder(p->binders[0]) + ")");
    case ProcKind::RepIn: return cont("repeat in " + chan(p->msgs[0]) + "(" + binder(p->binders[0]) + ")");
    case ProcKind::Split: {
        std::string s = "split " + message(p->msgs[0]) + " is (";
        for (std::size_t i = 0; i < p->binders.size(); ++i) s += (i ? ", " : "") + binder(p->binders[i]);
        return cont(s + ")");
    }
    case ProcKind::Match:
        return cont("match " + message(p->msgs[0]) + " is (" + message(p->msgs[1]) + ", " + binder(p->binders[0]) +
                    ")");
    case ProcKind::Case: {
        std::string s = "case " + message(p->msgs[0]) + " {";
        for (std::size_t i = 0; i < p->kids.size(); ++i) {
            s += (i ? ",\n" : "\n") + pad(indent + 2) + p->tags[i].str() + "(" + binder(p->binders[i]) + ") =>\n" +
                 pad(indent + 4) + seq(p->kids[i], indent + 4);
        }
        return s + "\n" + pad(indent) + "}";
    }
    case ProcKind::IfEq:
        return "if " + message(p->msgs[0]) + " = " + message(p->msgs[1]) + " then\n" + pad(indent + 2) +
               seq(p->kids[0], indent + 2) + "\n" + pad(indent) + "else\n" + pad(indent + 2) +
               seq(p->kids[1], indent + 2);
    case ProcKind::New: return cont("new " + binder(p->binders[0]));
    case ProcKind::Par: {
        std::string s;
        const Process* cur = p.get();
        bool first = true;
        while (true) {
            const ProcPtr& left = cur->kids[0];
            s += (first ? "" : "\n" + pad(indent) + "| ") + seq(left, indent + (first ? 0 : 2));
            first = false;
            const ProcPtr& right = cur->kids[1];
            if (right->kind != ProcKind::Par) {
                s += "\n" + pad(indent) + "| " + seq(right, indent + 2);
                break;
            }
            cur = right.get();
        }
        return s;
    }
    case ProcKind::SymDec:
        return cont("decrypt " + message(p->msgs[0]) + " is {" + binder(p->binders[0]) + "}" + message(p->msgs[1]));
    case ProcKind::AsymDec:
        return cont("decrypt " + message(p->msgs[0]) + " is {|" + binder(p->binders[0]) + "|}" +
                    message(p->msgs[1]));
    case ProcKind::CheckNonce: return cont("check " + message(p->msgs[0]) + " is " + message(p->msgs[1]));
    case ProcKind::Begin: return cont("begin " + message(p->msgs[0]));
    case ProcKind::End: return cont("end " + message(p->msgs[0]));
    case ProcKind::Cast: return cont("cast " + message(p->msgs[0]) + " is (" + binder(p->binders[0]) + ")");
    case ProcKind::Witness: return cont("witness " + message(p->msgs[0]) + " : " + type(p->type));
    case ProcKind::Trust: return cont("trust " + message(p->msgs[0]) + " is (" + binder(p->binders[0]) + ")");
    }
    return "?";
}

std::string print_message(const MsgPtr& m) { return Printer().message(m); }
std::string print_type(const TypePtr& t) { return Printer().type(t); }
std::string print_process(const ProcPtr& p) { return Printer().process(p); }

} // namespace wsec::spi
