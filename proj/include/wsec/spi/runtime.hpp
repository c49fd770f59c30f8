#pragma once

#include "wsec/spi/ast.hpp"
#include "wsec/spi/printer.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace wsec::spi {

struct Event {
    enum class Kind : std::uint8_t { Begin, End };
    Kind kind;
    MsgPtr label;
};
using EventTrace = std::vector<Event>;

// Typing obligations that the dynamic semantics discharges without checking.
struct AuditEntry {
    enum class Kind : std::uint8_t { Cast, Witness, Trust, Check };
    Kind kind;
    MsgPtr msg;
    TypePtr type;
};

struct AuditIssue {
    enum class Kind : std::uint8_t { DoubleCheck, CheckWithoutCast };
    Kind kind;
    MsgPtr nonce;
    std::size_t checks = 0;
    std::size_t casts = 0;
    std::string str() const;
};

// One message delivered from an output to an input.
struct WireEntry {
    MsgPtr chan;
    MsgPtr payload;
};

struct Configuration {
    std::vector<ProcPtr> procs; // never Par or Stop
    std::uint64_t next_fresh = 0;
    EventTrace trace;
    std::vector<AuditEntry> audit;
    std::vector<WireEntry> wire;
    std::uint64_t steps = 0;
    bool record_wire = false;
    bool record_audit = false;

    static Configuration of(const ProcPtr& p);
    void add(const ProcPtr& p);
    ProcPtr as_process() const;
    // Hash invariant under renaming of bound and run-time generated names and
    // under reordering of processes; includes the trace.
    std::uint64_t key() const;
};

// All configurations reachable in exactly one transition.
std::vector<Configuration> reduce_step(const Configuration& c);

// Runs every deterministic local step (name generation, splitting, matching,
// case, conditional, decryption, nonce checks, casts) to completion and drops
// processes that deadlock.  Communications, begins and ends are left.
void settle(Configuration& c);

// Successors through one communication, begin or end, each settled.
std::vector<Configuration> scheduled_steps(const Configuration& c);

// ---- safety ----

struct SafetyVerdict {
    bool safe = true;
    std::size_t index = 0;       // trace index of the offending end
    MsgPtr label;
    std::size_t prior_begins = 0; // begins with this label before the offending end
    std::string str() const;
};

SafetyVerdict check_safety(const EventTrace& t);

std::vector<AuditIssue> audit_issues(const std::vector<AuditEntry>& audit);

// ---- runs ----

struct RunResult {
    EventTrace trace;
    Configuration final;
    bool fuel_exhausted = false;
    std::uint64_t steps = 0;
};

// Uniformly random scheduler over the enabled transitions; settles local steps
// eagerly unless `eager` is false.
RunResult run(Configuration c, std::uint64_t seed, std::uint64_t fuel, bool eager = true);

struct ExploreOptions {
    std::size_t max_states = 200000;
    std::size_t max_depth = static_cast<std::size_t>(-1);
    bool stop_on_violation = false;
    bool keep_terminals = false;
};

struct ExploreResult {
    std::vector<EventTrace> traces;        // traces of terminal configurations, deduplicated
    std::vector<Configuration> terminals;  // when keep_terminals
    bool exhaustive = true;                // false when the depth or state budget cut the search
    std::size_t states = 0;
    std::optional<SafetyVerdict> violation;
    EventTrace violating_trace;
};

ExploreResult explore_all(const Configuration& c, const ExploreOptions& opts = {});

// ---- output ----

std::string format_trace(const EventTrace& t, Printer& pr);
std::string format_trace(const EventTrace& t);
nlohmann::json trace_json(const EventTrace& t, Printer& pr);
bool trace_eq(const EventTrace& a, const EventTrace& b);

} // namespace wsec::spi
