#pragma once

#include "wsec/spi/ast.hpp"

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wsec::spi {

class SpiParseError : public std::runtime_error {
public:
    SpiParseError(int line, int col, const std::string& msg);
    int line, col;
};

// Grammar of .spi files:
//
//   file     ::= ('public' ID (',' ID)* ';')* proc
//   proc     ::= seq ('|' seq)*
//   seq      ::= 'stop' | '(' proc ')'
//              | 'out' msg msg (';' seq)?          -- "; P" runs P alongside the output
//              | 'repeat'? 'in' chan '(' bind ')' (';' seq)?
//              | 'split' msg 'is' '(' (bind (',' bind)*)? ')' (';' seq)?
//              | 'match' msg 'is' '(' msg ',' bind ')' (';' seq)?
//              | 'case' msg '{' (ID '(' bind ')' '=>' seq (',' ...)*)? '}'
//              | 'if' msg '=' msg 'then' seq 'else' seq
//              | 'new' bind (';' seq)?
//              | 'decrypt' msg 'is' '{' bind '}' msg (';' seq)?
//              | 'decrypt' msg 'is' '{|' bind '|}' msg (';' seq)?
//              | 'check' msg 'is' msg (';' seq)?
//              | ('begin' | 'end') msg (';' seq)?
//              | 'cast' msg 'is' '(' bind ')' (';' seq)?
//              | 'witness' msg ':' type (';' seq)?
//              | 'trust' msg 'is' '(' bind ')' (';' seq)?
//   bind     ::= ID (':' type)?
//   msg      ::= ID | ID'(' (msg (',' msg)*)? ')'     -- tag: no space before '('
//              | '(' ')' | '(' msg ',' ')' | '(' msg ')' | '(' msg (',' msg)+ ')'
//              | '{' msg '}' msg | '{|' msg '|}' msg
//              | ('Encrypt' | 'Decrypt') '(' msg ')'
//   type     ::= 'Un' | 'Top' | '(' (ID ':' type (',' ...)*)? ')'
//              | 'Union' '(' ID '(' type ')' (',' ...)* ')'
//              | ('SharedKey' | 'KeyPair') '(' type ')'
//              | ('Encrypt' | 'Decrypt') 'Key' '(' type ')'
//              | ('Public' | 'Private') ('Challenge' | 'Response') '[' (eff (',' eff)*)? ']'
//   eff      ::= 'end' msg | 'check' ('Public' | 'Private') msg | 'trust' msg ':' type
//
// A tag with exactly one argument tags that argument; any other number of
// arguments tags the record of them.  A missing "; P" means stop.
// Comments run from '//' or '#' to end of line.
struct SpiFile {
    ProcPtr process;
    std::vector<Name> publics; // declared public names; empty means all free names
    bool publics_declared = false;
};

SpiFile parse_spi_file(std::string_view text);
ProcPtr parse_process(std::string_view text);
MsgPtr parse_message(std::string_view text);
TypePtr parse_type(std::string_view text);

} // namespace wsec::spi
