#pragma once

// Random spi processes and a locally nameless reference model for them.

#include "wsec/spi/ast.hpp"

#include <algorithm>
#include <random>
#include <string>
#include <vector>

namespace wsec::testing {

using namespace wsec::spi;

inline std::size_t spick(std::mt19937_64& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline Name pool_name(std::mt19937_64& rng) {
    static const char* ids[] = {"a", "b", "x", "y"};
    return source_name(ids[spick(rng, 4)]);
}

inline MsgPtr random_msg(std::mt19937_64& rng, int depth) {
    if (depth <= 0) return m_name(pool_name(rng));
    switch (spick(rng, 7)) {
    case 0:
    case 1: return m_name(pool_name(rng));
    case 2: {
        std::vector<MsgPtr> kids;
        std::size_t n = spick(rng, 3);
        for (std::size_t i = 0; i < n; ++i) kids.push_back(random_msg(rng, depth - 1));
        return m_record(std::move(kids));
    }
    case 3: return m_tagged(spick(rng, 2) ? "t" : "u", random_msg(rng, depth - 1));
    case 4: return m_symenc(random_msg(rng, depth - 1), random_msg(rng, depth - 1));
    case 5: return m_asymenc(random_msg(rng, depth - 1), random_msg(rng, depth - 1));
    default: return m_keypart(spick(rng, 2) ? KeyAttr::Encrypt : KeyAttr::Decrypt, random_msg(rng, depth - 1));
    }
}

inline TypePtr random_type(std::mt19937_64& rng, int depth) {
    if (depth <= 0 || spick(rng, 3) == 0) return nullptr;
    switch (spick(rng, 5)) {
    case 0: return t_record({{pool_name(rng), random_type(rng, depth - 1)}, {pool_name(rng), random_type(rng, depth - 1)}});
    case 1: return t_shared_key(t_un());
    case 2: return t_challenge(NonceLevel::Public, {e_end(random_msg(rng, 1))});
    case 3: return t_response(NonceLevel::Private, {e_check(NonceLevel::Private, m_name(pool_name(rng)))});
    default: return t_union({{Symbol("t"), t_un()}, {Symbol("u"), t_top()}});
    }
}

inline Binder random_binder(std::mt19937_64& rng, bool typed) {
    return {pool_name(rng), typed ? random_type(rng, 2) : nullptr};
}

inline ProcPtr random_proc(std::mt19937_64& rng, int depth, bool typed = true) {
    auto M = [&] { return random_msg(rng, 2); };
    auto B = [&] { return random_binder(rng, typed); };
    if (depth <= 0) return spick(rng, 3) ? p_out(M(), M()) : p_stop();
    auto P = [&] { return random_proc(rng, depth - 1, typed); };
    switch (spick(rng, 18)) {
    case 0: return p_out(M(), M());
    case 1: return p_in(M(), B(), P());
    case 2: return p_rep_in(M(), B(), P());
    case 3: {
        std::vector<Binder> xs;
        std::size_t n = spick(rng, 3);
        for (std::size_t i = 0; i < n; ++i) xs.push_back(B());
        return p_split(M(), xs, P());
    }
    case 4: return p_match(M(), M(), B(), P());
    case 5: return p_case(M(), {{Symbol("t"), B(), P()}, {Symbol("u"), B(), P()}});
    case 6: return p_if(M(), M(), P(), P());
    case 7: return p_new(B(), P());
    case 8: return p_par(P(), P());
    case 9: return p_stop();
    case 10: return p_symdec(M(), B(), M(), P());
    case 11: return p_asymdec(M(), B(), M(), P());
    case 12: return p_check(M(), M(), P());
    case 13: return p_begin(M(), P());
    case 14: return p_end(M(), P());
    case 15: return p_cast(M(), B(), P());
    case 16: return p_witness(M(), typed ? random_type(rng, 2) : t_un(), P());
    default: return p_trust(M(), B(), P());
    }
}

// ---- locally nameless model ----

struct SLN {
    std::string label;
    std::vector<SLN> kids;
    std::string str() const {
        std::string s = label;
        if (!kids.empty()) {
            s += "(";
            for (std::size_t i = 0; i < kids.size(); ++i) s += (i ? "," : "") + kids[i].str();
            s += ")";
        }
        return s;
    }
};

inline std::string ln_name(const Name& n, const std::vector<Name>& ctx) {
    for (std::size_t i = ctx.size(); i-- > 0;)
        if (ctx[i] == n) return "#" + std::to_string(ctx.size() - 1 - i);
    return "free:" + n.id.str() + "/" + std::to_string(n.stamp);
}

inline SLN sln_msg(const MsgPtr& m, const std::vector<Name>& ctx) {
    SLN out;
    switch (m->kind) {
    case MsgKind::Name: return {ln_name(m->name, ctx), {}};
    case MsgKind::Record: out.label = "rec"; break;
    case MsgKind::Tagged: out.label = "tag:" + m->tag.str(); break;
    case MsgKind::SymEnc: out.label = "senc"; break;
    case MsgKind::AsymEnc: out.label = "aenc"; break;
    case MsgKind::KeyPart: out.label = m->attr == KeyAttr::Encrypt ? "ek" : "dk"; break;
    }
    for (const auto& k : m->kids) out.kids.push_back(sln_msg(k, ctx));
    return out;
}

inline SLN sln_type(const TypePtr& t, std::vector<Name>& ctx) {
    if (is_un(t)) return {"Un", {}};
    SLN out{"ty" + std::to_string(static_cast<int>(t->kind)) + "/" + std::to_string(static_cast<int>(t->attr)) +
                "/" + std::to_string(static_cast<int>(t->level)),
            {}};
    for (const auto& [tag, ct] : t->cases) out.kids.push_back({"case:" + tag.str(), {sln_type(ct, ctx)}});
    if (t->inner) out.kids.push_back(sln_type(t->inner, ctx));
    // effects are multisets: sort their renderings
    std::vector<std::string> effs;
    for (const auto& e : t->effect) {
        SLN en{"eff" + std::to_string(static_cast<int>(e.kind)) + "/" + std::to_string(static_cast<int>(e.level)),
               {sln_msg(e.msg, ctx)}};
        if (e.type) en.kids.push_back(sln_type(e.type, ctx));
        effs.push_back(en.str());
    }
    std::sort(effs.begin(), effs.end());
    for (const auto& s : effs) out.kids.push_back({s, {}});
    std::size_t mark = ctx.size();
    for (const auto& [x, ft] : t->fields) {
        out.kids.push_back({"field", {sln_type(ft, ctx)}});
        ctx.push_back(x);
    }
    ctx.resize(mark);
    return out;
}

inline SLN sln_proc(const ProcPtr& p, std::vector<Name>& ctx) {
    SLN out{std::string(to_string(p->kind)), {}};
    for (const auto& m : p->msgs) out.kids.push_back(sln_msg(m, ctx));
    if (p->type) out.kids.push_back(sln_type(p->type, ctx));
    for (auto t : p->tags) out.kids.push_back({"tag:" + t.str(), {}});
    std::size_t mark = ctx.size();
    if (p->kind == ProcKind::Case) {
        for (std::size_t i = 0; i < p->kids.size(); ++i) {
            out.kids.push_back(sln_type(p->binders[i].type, ctx));
            ctx.push_back(p->binders[i].name);
            out.kids.push_back(sln_proc(p->kids[i], ctx));
            ctx.resize(mark);
        }
        return out;
    }
    for (const auto& b : p->binders) {
        if (p->kind == ProcKind::Split) {
            out.kids.push_back(sln_type(b.type, ctx));
        } else {
            std::vector<Name> outer(ctx.begin(), ctx.begin() + static_cast<std::ptrdiff_t>(mark));
            out.kids.push_back(sln_type(b.type, outer));
        }
        ctx.push_back(b.name);
    }
    for (const auto& k : p->kids) out.kids.push_back(sln_proc(k, ctx));
    ctx.resize(mark);
    return out;
}

inline SLN sln_of(const ProcPtr& p) {
    std::vector<Name> ctx;
    return sln_proc(p, ctx);
}

inline SLN sln_subst(const SLN& t, const std::string& free_label, const SLN& by) {
    if (t.label == free_label && t.kids.empty()) return by;
    SLN out{t.label, {}};
    for (const auto& k : t.kids) out.kids.push_back(sln_subst(k, free_label, by));
    return out;
}

} // namespace wsec::testing
