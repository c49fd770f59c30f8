#pragma once

// Dolev-Yao opponents and the robust-safety campaign harness.

#include "wsec/spi/ast.hpp"
#include "wsec/spi/runtime.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

namespace wsec::adversary {

// ---- knowledge ----

struct KnowledgeLimits {
    std::size_t max_depth = 6;     // deepest message built by synthesis
    std::size_t max_size = 10000;  // most messages kept by analysis
};

// What the attacker holds, closed under projection, untagging, key-part
// extraction and decryption with derivable keys.  Pairing, tagging and
// encryption are checked on demand by derivable().
class KnowledgeBase {
public:
    explicit KnowledgeBase(KnowledgeLimits limits = {});

    void learn(const spi::MsgPtr& m);
    bool knows(const spi::MsgPtr& m) const;
    bool derivable(const spi::MsgPtr& m) const;
    const std::vector<spi::MsgPtr>& items() const { return items_; }
    bool truncated() const { return truncated_; }
    const KnowledgeLimits& limits() const { return limits_; }

private:
    struct Hash {
        std::size_t operator()(const spi::MsgPtr& m) const { return m->hash; }
    };
    struct Eq {
        bool operator()(const spi::MsgPtr& a, const spi::MsgPtr& b) const { return spi::msg_eq(a, b); }
    };

    bool add(const spi::MsgPtr& m);
    void saturate();
    bool derivable_at(const spi::MsgPtr& m, std::size_t depth) const;

    KnowledgeLimits limits_;
    std::unordered_set<spi::MsgPtr, Hash, Eq> set_;
    std::vector<spi::MsgPtr> items_;
    bool truncated_ = false;
};

// ---- attack plans ----

// The names and tags an opponent may start from.
struct Surface {
    std::vector<spi::Name> channels;   // public names used as channels
    std::vector<spi::Name> principals; // public names that identify principals
    std::vector<spi::Symbol> tags;     // tags the opponent may build and inspect
};

Surface surface_of(const spi::ProcPtr& system, const std::vector<spi::Name>& publics,
                   const std::vector<spi::Name>& principals);

struct AttackPlan;

struct AttackAction {
    enum class Kind { Listen, Send, Fork, Split, Decrypt, Fresh };
    Kind kind;
    spi::MsgPtr chan;                 // Listen, Send
    spi::MsgPtr msg;                  // Send payload; Split/Decrypt subject
    spi::MsgPtr key;                  // Decrypt
    std::vector<spi::Name> binds;     // Listen {x}; Split {x1..xn}; Decrypt {x}; Fresh {n}
    bool replicated = false;          // Listen
    std::shared_ptr<AttackPlan> branch; // Fork
};

struct AttackPlan {
    std::vector<AttackAction> actions;
    spi::ProcPtr compile() const;
};

// ---- opponents ----

struct NamedOpponent {
    std::string name;
    spi::ProcPtr process;
};

// replay, drop, reflect, reroute, impersonate, nonce-reuse, request-replay,
// response-replay; each acts on every channel of the surface.
std::vector<NamedOpponent> canned_opponents(const Surface& s);
std::optional<NamedOpponent> canned_opponent(const std::string& name, const Surface& s);
std::vector<std::string> canned_names();

// An opponent process of at most `budget` actions, using only the surface and
// what it learns.
spi::ProcPtr random_opponent(std::uint64_t seed, std::size_t budget, const Surface& s);

// ---- campaigns ----

struct Counterexample {
    std::string opponent;
    std::uint64_t seed = 0;
    spi::ProcPtr opponent_process; // after shrinking
    spi::EventTrace trace;         // full trace of the replayed run
    spi::EventTrace prefix;        // shortest violating prefix
    spi::SafetyVerdict verdict;
};

struct CampaignOptions {
    std::uint64_t fuel = 10000;
    unsigned jobs = 1;
    bool shrink = true;
    std::size_t max_counterexamples = 8;
    bool stop_at_first = false;
};

struct CampaignReport {
    std::size_t cells = 0;
    std::size_t violations = 0;
    std::size_t exhausted = 0; // runs that hit the fuel bound
    std::vector<Counterexample> counterexamples;

    bool clean() const { return violations == 0; }
    std::string str() const;
    nlohmann::json to_json() const;
};

CampaignReport robust_safety_campaign(const spi::Configuration& sys, const std::vector<NamedOpponent>& opponents,
                                      const std::vector<std::uint64_t>& seeds, const CampaignOptions& opts = {});

// Random opponents: cell i composes random_opponent(seeds[i], budget) and runs it with seed seeds[i].
CampaignReport random_campaign(const spi::Configuration& sys, const Surface& s, const std::vector<std::uint64_t>& seeds,
                               std::size_t budget, const CampaignOptions& opts = {});

// Replays (sys | opponent) with `seed`.
spi::RunResult replay(const spi::Configuration& sys, const spi::ProcPtr& opponent, std::uint64_t seed,
                      std::uint64_t fuel);

} // namespace wsec::adversary
