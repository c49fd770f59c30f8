#pragma once

// Spi-calculus messages, types, effects and processes.
//
// All trees are immutable and shared.  Every node caches a structural hash
// and a 64-bit "name filter" (one bit per name hash) so substitution can skip
// subtrees that cannot mention the substituted names.

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wsec::spi {

// Interned identifier, shared by names and tags.
class Symbol {
public:
    Symbol() = default;
    explicit Symbol(std::string_view s);

    const std::string& str() const;
    std::uint32_t index() const { return idx_; }
    bool empty() const { return idx_ == 0; }

    friend bool operator==(Symbol a, Symbol b) { return a.idx_ == b.idx_; }
    friend auto operator<=>(Symbol a, Symbol b) { return a.idx_ <=> b.idx_; }

private:
    std::uint32_t idx_ = 0;
};

// Stamp 0: names written in source or fixed by the environment.
// High bit: names produced by New while a configuration runs.
// Anything else: binder renamings made during substitution.
inline constexpr std::uint64_t kRuntimeStamp = 1ull << 63;

struct Name {
    Symbol id;
    std::uint64_t stamp = 0;

    bool runtime() const { return (stamp & kRuntimeStamp) != 0; }
    std::uint64_t hash() const;
    std::uint64_t filter_bit() const { return 1ull << (hash() & 63); }

    friend bool operator==(const Name&, const Name&) = default;
    friend auto operator<=>(const Name&, const Name&) = default;
};

Name source_name(std::string_view id);
// Same identifier, new process-wide unique stamp.
Name renamed(const Name& n);

enum class KeyAttr { Encrypt, Decrypt };
enum class NonceLevel { Public, Private };

// ---- messages ----

enum class MsgKind : std::uint8_t { Name, Record, Tagged, SymEnc, AsymEnc, KeyPart };

struct Message;
using MsgPtr = std::shared_ptr<const Message>;

struct Message {
    MsgKind kind;
    Name name;              // Name
    Symbol tag;             // Tagged
    KeyAttr attr{};         // KeyPart
    std::vector<MsgPtr> kids; // Record: fields; Tagged: {body}; Enc: {plain, key}; KeyPart: {pair}
    std::uint64_t hash = 0;
    std::uint64_t filter = 0;
    std::uint32_t size = 1;
    bool runtime = false; // mentions a run-time generated name

    bool is_name() const { return kind == MsgKind::Name; }
};

MsgPtr m_name(const Name& n);
MsgPtr m_name(std::string_view id);
MsgPtr m_record(std::vector<MsgPtr> fields);
MsgPtr m_pair(MsgPtr a, MsgPtr b);
MsgPtr m_tagged(Symbol tag, MsgPtr body);
MsgPtr m_tagged(std::string_view tag, MsgPtr body);
MsgPtr m_symenc(MsgPtr plain, MsgPtr key);
MsgPtr m_asymenc(MsgPtr plain, MsgPtr key);
MsgPtr m_keypart(KeyAttr a, MsgPtr pair);
// Right-nested pairs: (a, (b, (c, d))).  One element gives the element itself.
MsgPtr m_nest(const std::vector<MsgPtr>& parts);

bool msg_eq(const MsgPtr& a, const MsgPtr& b);
bool mentions(const MsgPtr& m, const Name& n);
void collect_names(const MsgPtr& m, std::set<Name>& out);

// ---- types and effects ----

enum class TypeKind : std::uint8_t { Un, Record, Union, Top, SharedKey, KeyPair, Key, Challenge, Response };

struct Type;
using TypePtr = std::shared_ptr<const Type>;

struct AtomicEffect {
    enum class Kind : std::uint8_t { End, Check, Trust };
    Kind kind;
    MsgPtr msg;                      // end label, checked nonce, or trusted message
    NonceLevel level = NonceLevel::Public; // Check
    TypePtr type;                    // Trust
};
using Effect = std::vector<AtomicEffect>;

struct Type {
    TypeKind kind;
    std::vector<std::pair<Name, TypePtr>> fields;  // Record; each binder scopes over later fields
    std::vector<std::pair<Symbol, TypePtr>> cases; // Union
    TypePtr inner;                                 // SharedKey, KeyPair, Key
    KeyAttr attr{};                                // Key
    NonceLevel level{};                            // Challenge, Response
    Effect effect;                                 // Challenge, Response
    std::uint64_t hash = 0;
    std::uint64_t filter = 0;
    bool runtime = false;
};

TypePtr t_un();
TypePtr t_top();
TypePtr t_record(std::vector<std::pair<Name, TypePtr>> fields);
TypePtr t_union(std::vector<std::pair<Symbol, TypePtr>> cases);
TypePtr t_shared_key(TypePtr t);
TypePtr t_key_pair(TypePtr t);
TypePtr t_key(KeyAttr a, TypePtr t);
TypePtr t_challenge(NonceLevel l, Effect es);
TypePtr t_response(NonceLevel l, Effect fs);

AtomicEffect e_end(MsgPtr label);
AtomicEffect e_check(NonceLevel l, MsgPtr nonce);
AtomicEffect e_trust(MsgPtr m, TypePtr t);

bool is_un(const TypePtr& t); // null counts as Un
bool is_public(const TypePtr& t);
bool is_tainted(const TypePtr& t);

// Alpha-equivalence on types; effects compare as multisets.
bool type_eq(const TypePtr& a, const TypePtr& b);
bool effect_eq(const Effect& a, const Effect& b);

// ---- processes ----

enum class ProcKind : std::uint8_t {
    Out, In, RepIn, Split, Match, Case, IfEq, New, Par, Stop,
    SymDec, AsymDec, CheckNonce, Begin, End, Cast, Witness, Trust
};

std::string_view to_string(ProcKind k);

struct Binder {
    Name name;
    TypePtr type; // null means Un
};

struct Process;
using ProcPtr = std::shared_ptr<const Process>;

// Field layout per kind (messages are never in the scope of binders):
//   Out        msgs {chan, payload}
//   In/RepIn   msgs {chan}          binders {x}        kids {P}
//   Split      msgs {M}             binders {x1..xn}   kids {P}   (binder types scope rightward)
//   Match      msgs {M, N}          binders {y}        kids {P}
//   Case       msgs {M}  tags {t_i} binders {x_i}      kids {P_i} (binder i scopes over kid i only)
//   IfEq       msgs {M, N}                             kids {P, Q}
//   New                             binders {x}        kids {P}
//   Par                                                kids {P, Q}
//   SymDec     msgs {M, K}          binders {x}        kids {P}
//   AsymDec    msgs {M, K}          binders {x}        kids {P}
//   CheckNonce msgs {M, N}                             kids {P}
//   Begin/End  msgs {L}                                kids {P}
//   Cast       msgs {M}             binders {x:T}      kids {P}
//   Witness    msgs {M}  type T                        kids {P}
//   Trust      msgs {M}             binders {x:T}      kids {P}
struct Process {
    ProcKind kind;
    std::vector<MsgPtr> msgs;
    std::vector<Binder> binders;
    std::vector<Symbol> tags;
    std::vector<ProcPtr> kids;
    TypePtr type;
    std::uint64_t hash = 0;
    std::uint64_t filter = 0;
    std::uint32_t size = 1;
    bool runtime = false;
};

struct CaseBranch {
    Symbol tag;
    Binder binder;
    ProcPtr body;
};

ProcPtr p_out(MsgPtr chan, MsgPtr payload);
ProcPtr p_in(MsgPtr chan, Binder x, ProcPtr p);
ProcPtr p_rep_in(MsgPtr chan, Binder x, ProcPtr p);
ProcPtr p_split(MsgPtr m, std::vector<Binder> xs, ProcPtr p);
ProcPtr p_match(MsgPtr m, MsgPtr n, Binder y, ProcPtr p);
ProcPtr p_case(MsgPtr m, std::vector<CaseBranch> branches);
ProcPtr p_if(MsgPtr m, MsgPtr n, ProcPtr then_p, ProcPtr else_p);
ProcPtr p_new(Binder x, ProcPtr p);
ProcPtr p_par(ProcPtr p, ProcPtr q);
ProcPtr p_par(const std::vector<ProcPtr>& ps); // right-nested; empty gives stop
ProcPtr p_stop();
ProcPtr p_symdec(MsgPtr m, Binder x, MsgPtr key, ProcPtr p);
ProcPtr p_asymdec(MsgPtr m, Binder x, MsgPtr key, ProcPtr p);
ProcPtr p_check(MsgPtr m, MsgPtr n, ProcPtr p);
ProcPtr p_begin(MsgPtr label, ProcPtr p);
ProcPtr p_end(MsgPtr label, ProcPtr p);
ProcPtr p_cast(MsgPtr m, Binder x, ProcPtr p);
ProcPtr p_witness(MsgPtr m, TypePtr t, ProcPtr p);
ProcPtr p_trust(MsgPtr m, Binder x, ProcPtr p);

// Generic rebuild with the same kind; recomputes caches.
ProcPtr p_rebuild(const Process& like, std::vector<MsgPtr> msgs, std::vector<Binder> binders,
                  std::vector<ProcPtr> kids, TypePtr type);

Binder un(const Name& n);
Binder un(std::string_view id);

// ---- substitution and binders ----

using Subst = std::vector<std::pair<Name, MsgPtr>>;

MsgPtr subst(const MsgPtr& m, const Subst& s);
TypePtr subst(const TypePtr& t, const Subst& s);
ProcPtr subst(const ProcPtr& p, const Subst& s);
ProcPtr subst(const ProcPtr& p, const Name& x, const MsgPtr& m);

std::set<Name> free_names(const ProcPtr& p);
std::set<Name> free_names(const TypePtr& t);

bool alpha_eq(const ProcPtr& a, const ProcPtr& b);

// Assertion-free and only Un annotations.
bool is_opponent(const ProcPtr& p);

std::size_t count_kind(const ProcPtr& p, ProcKind k);

} // namespace wsec::spi

template <>
struct std::hash<wsec::spi::Name> {
    std::size_t operator()(const wsec::spi::Name& n) const noexcept { return n.hash(); }
};
