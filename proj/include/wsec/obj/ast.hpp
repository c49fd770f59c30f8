#pragma once

// Object calculus: types, values, method bodies and the execution environment.

#include "wsec/security_level.hpp"

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace wsec::obj {

struct SourcePos {
    int line = 0;
    int col = 0;
};

class ObjType {
public:
    enum class Kind { Id, Class };

    ObjType() = default;
    static ObjType id() { return ObjType(Kind::Id, {}); }
    static ObjType of_class(std::string c) { return ObjType(Kind::Class, std::move(c)); }

    Kind kind() const { return kind_; }
    bool is_id() const { return kind_ == Kind::Id; }
    bool is_class() const { return kind_ == Kind::Class; }
    const std::string& class_name() const { return cls_; }
    std::string str() const { return is_id() ? "Id" : cls_; }

    friend bool operator==(const ObjType&, const ObjType&) = default;
    friend auto operator<=>(const ObjType&, const ObjType&) = default;

private:
    ObjType(Kind k, std::string c) : kind_(k), cls_(std::move(c)) {}
    Kind kind_ = Kind::Id;
    std::string cls_;
};

// ---- values ----

struct Value;
using ValuePtr = std::shared_ptr<const Value>;

struct VarV {
    std::string name;
};
struct NullV {};
struct NewV {
    std::string cls;
    std::vector<ValuePtr> args;
};
struct PrinV {
    std::string name;
};

struct Value {
    std::variant<VarV, NullV, NewV, PrinV> node;
    std::size_t hash = 0;
    bool has_vars = false; // some Var occurs inside
    std::size_t depth = 1;

    bool is_var() const { return std::holds_alternative<VarV>(node); }
    bool is_null() const { return std::holds_alternative<NullV>(node); }
    bool is_new() const { return std::holds_alternative<NewV>(node); }
    bool is_prin() const { return std::holds_alternative<PrinV>(node); }
};

ValuePtr mk_var(std::string name);
ValuePtr mk_null();
ValuePtr mk_new(std::string cls, std::vector<ValuePtr> args);
ValuePtr mk_prin(std::string name);

// Num encoding: zero is new Num(null), n+1 is new Num(n).
ValuePtr mk_num(std::size_t n);
// Returns n when v is exactly the encoding of n.
std::optional<std::size_t> as_num(const ValuePtr& v);

// Syntactic identity (values have no binders).
bool value_eq(const ValuePtr& a, const ValuePtr& b);

// ---- bodies ----

struct Body;
using BodyPtr = std::shared_ptr<const Body>;

struct ValB {
    ValuePtr value;
};
struct LetB {
    std::string var;
    BodyPtr bound;
    BodyPtr body;
};
struct IfB {
    ValuePtr lhs;
    ValuePtr rhs;
    BodyPtr then_b;
    BodyPtr else_b;
};
struct FieldB {
    ValuePtr target;
    std::string field;
};
struct InvokeB {
    ValuePtr target;
    std::string method;
    std::vector<ValuePtr> args;
};
struct CallB {
    std::string service;
    std::string method;
    std::vector<ValuePtr> args;
};
struct RunningB {
    std::string principal;
    BodyPtr body;
};

struct Body {
    std::variant<ValB, LetB, IfB, FieldB, InvokeB, CallB, RunningB> node;
    SourcePos pos;

    template <class T> const T* as() const { return std::get_if<T>(&node); }
    bool is_value() const { return std::holds_alternative<ValB>(node); }
};

BodyPtr mk_val(ValuePtr v, SourcePos pos = {});
BodyPtr mk_let(std::string x, BodyPtr bound, BodyPtr body, SourcePos pos = {});
BodyPtr mk_if(ValuePtr u, ValuePtr v, BodyPtr a, BodyPtr b, SourcePos pos = {});
BodyPtr mk_field(ValuePtr target, std::string f, SourcePos pos = {});
BodyPtr mk_invoke(ValuePtr target, std::string m, std::vector<ValuePtr> args, SourcePos pos = {});
BodyPtr mk_call(std::string w, std::string m, std::vector<ValuePtr> args, SourcePos pos = {});
BodyPtr mk_running(std::string p, BodyPtr a, SourcePos pos = {});

std::set<std::string> free_vars(const ValuePtr& v);
std::set<std::string> free_vars(const BodyPtr& a);
bool contains_running(const BodyPtr& a);
bool contains_call(const BodyPtr& a);
std::size_t body_size(const BodyPtr& a);

// Capture-avoiding substitution of a value for a variable.
ValuePtr substitute(const ValuePtr& v, const std::string& x, const ValuePtr& by);
BodyPtr substitute(const BodyPtr& a, const std::string& x, const ValuePtr& by);
// Simultaneous substitution.
BodyPtr substitute(const BodyPtr& a, const std::map<std::string, ValuePtr>& sigma);

// Equality up to renaming of Let-bound variables.
bool alpha_eq(const BodyPtr& a, const BodyPtr& b);

// ---- execution environment ----

struct MethodSig {
    ObjType result;
    std::vector<std::pair<std::string, ObjType>> params;
};

struct MethodDef {
    MethodSig sig;
    BodyPtr body;
    SecurityLevel level = SecurityLevel::None;
    SourcePos pos;
};

struct ClassDef {
    std::string name;
    std::vector<std::pair<std::string, ObjType>> fields;
    std::map<std::string, MethodDef> methods;
    SourcePos pos;

    std::optional<std::size_t> field_index(const std::string& f) const;
    const MethodDef* method(const std::string& m) const;
};

struct ServiceDef {
    std::string name;
    std::string url;
    std::string owner;
    std::string cls;
};

struct ExecutionEnvironment {
    std::set<std::string> principals;
    std::map<std::string, ClassDef> classes;
    std::map<std::string, ServiceDef> services;

    const ClassDef* find_class(const std::string& c) const;
    const ServiceDef* find_service(const std::string& w) const;
    bool is_principal(const std::string& p) const { return principals.count(p) != 0; }
};

// The class of natural numbers used by numeric literals.
ClassDef num_class();

struct Program {
    ExecutionEnvironment env;
    std::vector<std::pair<std::string, BodyPtr>> bodies;

    // The body named `name`; "main" falls back to the first declared body.
    BodyPtr body(const std::string& name = "main") const;
};

} // namespace wsec::obj
