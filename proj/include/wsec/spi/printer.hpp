#pragma once

#include "wsec/spi/ast.hpp"

#include <map>
#include <set>
#include <optional>
#include <string>

namespace wsec::spi {

// Pretty-printer producing text the .spi parser accepts.  One instance keeps
// a stable display string per distinct name, so a name generated at run time
// never prints the same as a source name with the same identifier.
class Printer {
public:
    std::string name(const Name& n);
    std::string message(const MsgPtr& m);
    std::string type(const TypePtr& t);
    std::string effect(const Effect& es);
    std::string process(const ProcPtr& p, int indent = 0);

private:
    std::map<Name, std::string> display_;
    std::set<std::string> used_;

    std::string binder(const Binder& b);
    std::string seq(const ProcPtr& p, int indent);
    void atomic_effect(std::string& out, const AtomicEffect& e);
};

std::string print_message(const MsgPtr& m);
std::string print_type(const TypePtr& t);
std::string print_process(const ProcPtr& p);

bool is_spi_keyword(const std::string& s);

// Numerals n stand for Num(...Num(null())...) with n + 1 Num tags, the
// encoding of natural numbers carried over from the object calculus.
std::optional<std::size_t> as_numeral(const MsgPtr& m);
MsgPtr m_numeral(std::size_t n);

} // namespace wsec::spi
