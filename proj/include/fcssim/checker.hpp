#pragma once

// Bounded exhaustive exploration of the protocol engine on tiny
// configurations.  Each core nondeterministically issues accesses drawn from
// a per-core alphabet; deliveries interleave freely across endpoint pairs,
// while each (source, destination) channel stays FIFO — the same contract
// the timed mesh provides, whose deterministic routes never reorder
// same-pair messages.  Every reachable state is canonicalized, deduplicated,
// and checked against the safety invariants:
//
//   * at most one cache holds a word Owned, at any moment;
//   * Shared and Owned copies of a word never coexist once the system is
//     quiescent (no messages in flight, no transients, nothing pending);
//   * a Nack is only ever sent by a core, and only for request types that
//     may legally be refused;
//   * every value handed to a reader equals the most recent value written to
//     that word in the witnessed linearization (writes linearize where they
//     apply: at the directory, at an owning cache, or at install time).
//     Self-invalidating Valid copies are exempt, since reading them stale is
//     the documented contract of that state.
//
// The reachable-state count doubles as a complexity proxy: enabling the
// forwarded or owner-predicted request types must only grow the space by a
// bounded factor.  Fault injection (see coh::FaultInjection) turns the
// checker into a mutation harness: each seeded bug must produce an invariant
// violation or a deadlock, with a minimized counterexample.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fcssim/coherence.hpp"
#include "fcssim/types.hpp"

namespace fcssim::chk {

// One entry of a core's issue alphabet.  `block` indexes the address list
// (blocks are laid out consecutively); `word` selects the word within the
// line (ignored for ReqS, which always reads the full line).
struct ScriptOp {
  AccessKind kind{AccessKind::Load};
  RequestType type{RequestType::ReqV};
  int block{0};
  unsigned word{0};
};

std::string to_string(const ScriptOp& op);

struct CheckConfig {
  std::string name{"baseline"};
  int n_cores{2};
  int n_blocks{2};
  unsigned words_per_line{1};  // 1 or 2
  int issues_per_core{2};
  std::vector<std::vector<ScriptOp>> alphabet;  // one list per core
  int retry_cap{1};
  std::size_t max_in_flight{16};
  std::uint64_t state_budget{10'000'000};
  coh::FaultInjection fault;
  bool depth_first{false};       // frontier order; the state count must not care
  bool check_valid_hits{false};  // value-check even lagging (Valid/Shared) reads
};

// One transition label.  Issue events carry the core, the alphabet index and
// (for owner-predicted types) the chosen target; deliver events carry the
// canonical encoding of the consumed message so a replay can find it again.
struct Event {
  enum class Kind : std::uint8_t { Issue, Deliver };
  Kind kind{Kind::Issue};
  int core{-1};
  int op{-1};
  int target{coh::kLlcNode};
  std::string msg;   // Deliver: canonical message key
  std::string text;  // human-readable rendering
};

std::string to_string(const Event& e);

struct Violation {
  std::string what;
  std::vector<Event> events;  // minimal counterexample
};

struct ExploreResult {
  bool ok{false};      // exploration ran to completion within budget
  std::string error;   // set when !ok (state budget or in-flight cap)
  std::uint64_t states{0};
  std::uint64_t transitions{0};
  std::uint64_t max_frontier{0};
  std::uint64_t deadlocks{0};
  std::vector<Event> deadlock_example;  // first deadlock found, if any
  std::vector<Violation> violations;    // first violation found, minimized
};

// Enumerate every reachable state of `cfg`.  Stops at the first invariant
// violation (returned minimized); deadlocks are counted without stopping.
ExploreResult explore(const CheckConfig& cfg);

// Re-run `events` from the initial state of `cfg`.  Returns the violation
// description, or "" if the sequence replays cleanly (or cannot be applied).
std::string replay_violation(const CheckConfig& cfg,
                             const std::vector<Event>& events);

// Greedy event deletion: repeatedly drop events whose removal keeps the
// sequence violating, until no single deletion survives.  The result always
// re-validates under replay_violation.
std::vector<Event> minimize_counterexample(const CheckConfig& cfg,
                                           const std::vector<Event>& events);

// Ratio table over reachable-state counts; the first entry is the baseline.
struct CountRow {
  std::string name;
  std::uint64_t states{0};
  double ratio{1.0};
};

std::vector<CountRow> compare_state_counts(
    const std::vector<std::pair<std::string, std::uint64_t>>& counts);

// The three standard treatments explored by the acceptance gate: the same
// two-core scripts with the write-through family only (baseline), with
// forwarded write-throughs added (+fwd), and with owner-predicted types
// added on top (+pred).  Alphabets nest, so each treatment reaches a
// superset of the states of the previous one.
std::vector<CheckConfig> standard_check_configs();

// Reporting helpers shared with the command-line driver.
std::string result_text(const CheckConfig& cfg, const ExploreResult& r);
std::string result_csv_header();
std::string result_csv_row(const CheckConfig& cfg, const ExploreResult& r);

}  // namespace fcssim::chk
