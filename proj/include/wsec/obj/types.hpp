#pragma once

#include "wsec/obj/ast.hpp"

#include <json.hpp>

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace wsec::obj {

class TypeError : public std::runtime_error {
public:
    TypeError(std::string rule, const std::string& msg, SourcePos pos = {});
    std::string rule; // e.g. "Body Field"
    SourcePos pos;
};

// The set of types a term can be given. `null` inhabits every class, so
// the set may be "all classes" (the bottom marker).
class TypeSet {
public:
    static TypeSet empty() { return {}; }
    static TypeSet of(const ObjType& t);
    static TypeSet any_class();

    bool is_empty() const { return !any_class_ && !id_ && classes_.empty(); }
    bool is_any_class() const { return any_class_; }
    bool contains(const ObjType& t) const;
    // A single type, or nullopt when ambiguous/empty.
    std::optional<ObjType> unique() const;
    // Concrete members, expanding the bottom marker against env.
    std::vector<ObjType> members(const ExecutionEnvironment& env) const;

    TypeSet intersect(const TypeSet& o) const;
    TypeSet unite(const TypeSet& o) const;
    std::string str() const;

    friend bool operator==(const TypeSet&, const TypeSet&) = default;

private:
    bool any_class_ = false;
    bool id_ = false;
    std::set<std::string> classes_;
};

using TypeEnv = std::vector<std::pair<std::string, ObjType>>;

// (Env x): names pairwise distinct and class types resolvable.
void check_type_env(const TypeEnv& E, const ExecutionEnvironment& env);

TypeSet type_of_value(const TypeEnv& E, const ValuePtr& v, const ExecutionEnvironment& env);
TypeSet type_of_body(const TypeEnv& E, const BodyPtr& a, const ExecutionEnvironment& env);
// Checking mode: does E |- a : A hold?
bool check_body(const TypeEnv& E, const BodyPtr& a, const ObjType& A, const ExecutionEnvironment& env);

// Witnesses chosen along one derivation of E |- a : A.
struct Annotations {
    std::map<const Body*, std::string> receiver_class; // Field/Invoke nodes
    std::map<const Body*, ObjType> let_type;           // Let nodes: type of the bound variable
    std::map<const Body*, ObjType> node_type;          // every visited node
};

Annotations annotate(const TypeEnv& E, const BodyPtr& a, const ObjType& A, const ExecutionEnvironment& env);

struct EnvIssue {
    int assumption = 0; // 1, 2 or 3; 0 for well-formedness
    std::string cls;
    std::string method;
    std::string rule;
    std::string message;
};

struct EnvReport {
    std::vector<EnvIssue> issues;
    bool ok() const { return issues.empty(); }
    std::string str() const;
    nlohmann::json to_json() const;
};

EnvReport validate_environment(const ExecutionEnvironment& env);

} // namespace wsec::obj
