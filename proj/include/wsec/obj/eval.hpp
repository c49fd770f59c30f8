#pragma once

#include "wsec/obj/ast.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <variant>

namespace wsec::obj {

struct Stepped {
    BodyPtr next;
};
struct IsValue {
    ValuePtr value;
};
struct NullBlocked {};
struct Stuck {
    std::string reason;
};

using StepOutcome = std::variant<Stepped, IsValue, NullBlocked, Stuck>;

// One transition of the body running as `principal`.
StepOutcome step(const BodyPtr& a, const std::string& principal, const ExecutionEnvironment& env);

enum class EvalStatus { Value, NullBlocked, Stuck, FuelExhausted };

std::string_view to_string(EvalStatus s);

struct EvalResult {
    EvalStatus status = EvalStatus::FuelExhausted;
    ValuePtr value;          // set for Value
    BodyPtr last;            // final body
    std::uint64_t steps = 0;
    std::string stuck_reason;
    std::deque<BodyPtr> trace; // most recent intermediate bodies, oldest first
};

struct EvalOptions {
    std::size_t trace_capacity = 0;
    // Called with every body reached, including the start.
    std::function<void(const BodyPtr&)> on_body;
};

EvalResult eval(const BodyPtr& a, const std::string& principal, const ExecutionEnvironment& env, std::uint64_t fuel,
                const EvalOptions& opts = {});

} // namespace wsec::obj
