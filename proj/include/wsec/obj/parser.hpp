#pragma once

#include "wsec/obj/ast.hpp"

#include <stdexcept>
#include <string>
#include <string_view>

namespace wsec::obj {

class ParseError : public std::runtime_error {
public:
    ParseError(SourcePos pos, const std::string& msg);
    SourcePos pos;
};

// Grammar of .obc sources:
//
//   program   ::= decl*
//   decl      ::= 'principals' ID (',' ID)* ';'?
//               | 'class' ID member* 'end'
//               | 'service' ID STRING? 'owner' ID 'class' ID ';'?
//               | 'body' ID '=' body ';'?
//   member    ::= ('@' LEVEL)? type ID ( '(' params? ')' '=' body )? ';'?
//   type      ::= 'Id' | ID
//   body      ::= 'let' ID '=' body 'in' body
//               | 'if' postfix '=' postfix 'then' body 'else' body
//               | postfix
//   postfix   ::= primary ('.' ID ('(' args? ')')?)*
//   primary   ::= 'null' | 'new' ID '(' args? ')' | NUMBER | ID ':' ID '(' args? ')'
//               | ID | '(' body ')'
//
// Non-value operands are let-bound to fresh variables. NUMBER n denotes the
// Num encoding of n. Comments run from '//' or '#' to end of line.
Program parse_program(std::string_view text);

// Parses a single body against the principals of an existing environment.
BodyPtr parse_body(std::string_view text, const ExecutionEnvironment& env);

} // namespace wsec::obj
