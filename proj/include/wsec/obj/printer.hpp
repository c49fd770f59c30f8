#pragma once

#include "wsec/obj/ast.hpp"

#include <json.hpp>

#include <string>

namespace wsec::obj {

std::string print_type(const ObjType& t);
std::string print_value(const ValuePtr& v);
std::string print_body(const BodyPtr& a);
std::string print_environment(const ExecutionEnvironment& env);
// Concrete syntax accepted by parse_program.
std::string print_program(const Program& p);

// Canonical tree. Every node is an object with a "kind" key:
//   values: var{name} null new{class,args} prin{name} num{value}
//   bodies: val{value} let{var,bound,body} if{lhs,rhs,then,else}
//           field{target,field} invoke{target,method,args}
//           call{service,method,args} running{principal,body}
// `num` abbreviates an exact Num encoding.
nlohmann::json to_json(const ValuePtr& v);
nlohmann::json to_json(const BodyPtr& a);
nlohmann::json to_json(const ExecutionEnvironment& env);

} // namespace wsec::obj
