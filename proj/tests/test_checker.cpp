#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "fcssim/checker.hpp"

using namespace fcssim;
using namespace fcssim::chk;

namespace {

bool mentions(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

CheckConfig racing_owners() {
  CheckConfig cfg;
  cfg.name = "race-ReqO";
  cfg.n_cores = 2;
  cfg.n_blocks = 1;
  cfg.issues_per_core = 1;
  cfg.alphabet = {{{AccessKind::Store, RequestType::ReqO, 0, 0}},
                  {{AccessKind::Store, RequestType::ReqO, 0, 0}}};
  return cfg;
}

bool same_events(const std::vector<Event>& a, const std::vector<Event>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].kind != b[i].kind || a[i].core != b[i].core ||
        a[i].op != b[i].op || a[i].target != b[i].target ||
        a[i].msg != b[i].msg)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("single-core load scripts have hand-countable state spaces") {
  // One core loading one word once.  The reachable states are exactly:
  //   1. initial (nothing issued)
  //   2. load issued, its request on the wire
  //   3. request consumed at the directory, the data grant on the wire
  //   4. grant installed, the copy Valid, the core idle again
  // Three transitions connect them (issue, deliver request, deliver grant).
  CheckConfig cfg;
  cfg.name = "one-load";
  cfg.n_cores = 1;
  cfg.n_blocks = 1;
  cfg.issues_per_core = 1;
  cfg.alphabet = {{{AccessKind::Load, RequestType::ReqV, 0, 0}}};

  ExploreResult one = explore(cfg);
  CHECK(one.ok);
  CHECK(one.states == 4);
  CHECK(one.transitions == 3);
  CHECK(one.deadlocks == 0);
  CHECK(one.violations.empty());

  // A second load of the same word hits the Valid copy locally, so it adds
  // exactly one state (the bumped issue counter) and one transition.
  cfg.issues_per_core = 2;
  ExploreResult two = explore(cfg);
  CHECK(two.ok);
  CHECK(two.states == 5);
  CHECK(two.transitions == 4);
  CHECK(two.violations.empty());

  CheckConfig dfs = cfg;
  dfs.depth_first = true;
  ExploreResult two_dfs = explore(dfs);
  CHECK(two_dfs.states == two.states);
  CHECK(two_dfs.transitions == two.transitions);
}

TEST_CASE("racing ownership stores keep a single owner") {
  CheckConfig cfg = racing_owners();
  ExploreResult r = explore(cfg);
  CHECK(r.ok);
  CHECK(r.violations.empty());
  CHECK(r.deadlocks == 0);
  // The race is real: both orders of arrival plus the revoke round-trip give
  // far more states than either store alone would.
  CHECK(r.states > 10);
}

TEST_CASE("granting ownership without revoking the previous owner is caught") {
  CheckConfig cfg = racing_owners();
  cfg.fault.skip_owner_revoke = true;
  ExploreResult r = explore(cfg);
  CHECK(r.ok);
  REQUIRE(r.violations.size() == 1);
  const Violation& v = r.violations.front();
  CHECK(mentions(v.what, "Owned"));
  CHECK(v.events.size() >= 4);
  CHECK(v.events.size() <= 12);

  // The minimized trace must replay to a violation under the faulty protocol,
  // and must not replay to one under the healthy protocol (the revoke breaks
  // the interleaving the trace relies on).
  CHECK_FALSE(replay_violation(cfg, v.events).empty());
  CHECK(replay_violation(racing_owners(), v.events).empty());
}

TEST_CASE("leaving stale sharers behind an ownership grant is caught") {
  CheckConfig cfg;
  cfg.name = "store-vs-shared-load";
  cfg.n_cores = 2;
  cfg.n_blocks = 1;
  cfg.issues_per_core = 1;
  cfg.alphabet = {{{AccessKind::Store, RequestType::ReqO, 0, 0}},
                  {{AccessKind::Load, RequestType::ReqS, 0, 0}}};

  ExploreResult clean = explore(cfg);
  CHECK(clean.ok);
  CHECK(clean.violations.empty());
  CHECK(clean.deadlocks == 0);

  cfg.fault.skip_sharer_invalidate = true;
  ExploreResult r = explore(cfg);
  CHECK(r.ok);
  REQUIRE(r.violations.size() == 1);
  CHECK(mentions(r.violations.front().what, "Shared"));
  CHECK(r.violations.front().events.size() <= 12);
  CHECK_FALSE(replay_violation(cfg, r.violations.front().events).empty());
}

TEST_CASE("dropping the retry after a refusal starves the requester") {
  // An owner-predicted store that reaches the old owner after its ownership
  // lapsed gets a Nack; the protocol recovers by re-issuing toward the
  // directory.  Killing that retry leaves the requester waiting forever.
  CheckConfig cfg;
  cfg.name = "predicted-store-race";
  cfg.n_cores = 2;
  cfg.n_blocks = 1;
  cfg.issues_per_core = 1;
  cfg.alphabet = {{{AccessKind::Store, RequestType::ReqO, 0, 0}},
                  {{AccessKind::Store, RequestType::ReqWTo, 0, 0}}};

  ExploreResult clean = explore(cfg);
  CHECK(clean.ok);
  CHECK(clean.violations.empty());
  CHECK(clean.deadlocks == 0);

  CheckConfig faulty = cfg;
  faulty.fault.drop_nack_retry = true;
  ExploreResult r = explore(faulty);
  CHECK(r.ok);
  CHECK(r.violations.empty());
  CHECK(r.deadlocks >= 1);
  CHECK_FALSE(r.deadlock_example.empty());
  CHECK(r.deadlock_example.size() <= 12);
}

TEST_CASE("counterexamples are minimal and revalidate after shrinking") {
  CheckConfig cfg = racing_owners();
  cfg.fault.skip_owner_revoke = true;
  ExploreResult r = explore(cfg);
  REQUIRE(r.violations.size() == 1);
  const std::vector<Event>& minimal = r.violations.front().events;

  // Already-minimal input comes back unchanged.
  CHECK(same_events(minimize_counterexample(cfg, minimal), minimal));

  // A sequence that is not a counterexample also comes back unchanged.
  CHECK(same_events(minimize_counterexample(racing_owners(), minimal),
                    minimal));

  // Interleave an irrelevant load by a third core into the trace: the replay
  // still violates, and minimization strips the load back out.
  CheckConfig padded_cfg = cfg;
  padded_cfg.name = "race-ReqO-plus-bystander";
  padded_cfg.n_cores = 3;
  padded_cfg.n_blocks = 2;
  padded_cfg.alphabet.push_back({{AccessKind::Load, RequestType::ReqV, 1, 0}});

  Event bystander;
  bystander.kind = Event::Kind::Issue;
  bystander.core = 2;
  bystander.op = 0;
  bystander.target = coh::kLlcNode;
  bystander.text = "core 2: load blk1.w0 as ReqV";

  std::vector<Event> padded;
  padded.push_back(bystander);
  padded.insert(padded.end(), minimal.begin(), minimal.end());
  REQUIRE_FALSE(replay_violation(padded_cfg, padded).empty());

  std::vector<Event> shrunk = minimize_counterexample(padded_cfg, padded);
  CHECK(shrunk.size() == minimal.size());
  for (const Event& e : shrunk) CHECK(e.core != 2);
  CHECK_FALSE(replay_violation(padded_cfg, shrunk).empty());
}

TEST_CASE("state counts grow only slightly as the vocabulary grows") {
  std::vector<CheckConfig> configs = standard_check_configs();
  REQUIRE(configs.size() == 3);
  CHECK(configs[0].name == "baseline");
  CHECK(configs[1].name == "+fwd");
  CHECK(configs[2].name == "+pred");
  // The treatments nest: each extension only adds ops to one core's alphabet.
  CHECK(configs[0].alphabet[1].size() < configs[1].alphabet[1].size());
  CHECK(configs[1].alphabet[1].size() < configs[2].alphabet[1].size());

  std::vector<std::pair<std::string, std::uint64_t>> counts;
  for (const CheckConfig& cfg : configs) {
    ExploreResult r = explore(cfg);
    CHECK(r.ok);
    CHECK(r.violations.empty());
    CHECK(r.deadlocks == 0);
    CHECK(r.states > 1000);  // the base alphabet alone is a real workload
    counts.emplace_back(cfg.name, r.states);
  }

  // Each added request type grows the reachable set (it is a new
  // nondeterministic choice), but only by a thin margin over the base.
  CHECK(counts[1].second > counts[0].second);
  CHECK(counts[2].second > counts[1].second);

  std::vector<CountRow> rows = compare_state_counts(counts);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].ratio == doctest::Approx(1.0));
  CHECK(rows[1].ratio > 1.0);
  CHECK(rows[2].ratio > rows[1].ratio);
  CHECK(rows[2].ratio <= 1.25);
}

TEST_CASE("exploration order does not change the reachable set") {
  std::vector<CheckConfig> cases;
  cases.push_back(racing_owners());
  {
    CheckConfig cfg;
    cfg.name = "wt-vs-owner";
    cfg.n_cores = 2;
    cfg.n_blocks = 1;
    cfg.issues_per_core = 1;
    cfg.alphabet = {{{AccessKind::Rmw, RequestType::ReqOData, 0, 0}},
                    {{AccessKind::Store, RequestType::ReqWT, 0, 0}}};
    cases.push_back(cfg);
  }
  cases.push_back(standard_check_configs().front());

  for (CheckConfig& cfg : cases) {
    CheckConfig dfs = cfg;
    dfs.depth_first = true;
    ExploreResult a = explore(cfg);
    ExploreResult b = explore(dfs);
    CHECK(a.ok);
    CHECK(b.ok);
    CHECK(a.states == b.states);
    CHECK(a.transitions == b.transitions);
    CHECK(a.violations.empty());
    CHECK(b.violations.empty());
  }
}

TEST_CASE("per-word ownership within one line stays coherent") {
  CheckConfig cfg;
  cfg.name = "split-line-owners";
  cfg.n_cores = 2;
  cfg.n_blocks = 1;
  cfg.words_per_line = 2;
  cfg.issues_per_core = 1;
  cfg.alphabet = {{{AccessKind::Rmw, RequestType::ReqOData, 0, 0}},
                  {{AccessKind::Rmw, RequestType::ReqOData, 0, 1}}};
  ExploreResult r = explore(cfg);
  CHECK(r.ok);
  CHECK(r.violations.empty());
  CHECK(r.deadlocks == 0);

  CheckConfig dfs = cfg;
  dfs.depth_first = true;
  CHECK(explore(dfs).states == r.states);
}

TEST_CASE("value checks cover plain loads when scripts are conflict free") {
  // With no racing writer, even Valid-hit loads must observe the latest
  // write; check_valid_hits turns that eager check on.
  CheckConfig cfg;
  cfg.name = "write-then-read";
  cfg.n_cores = 1;
  cfg.n_blocks = 1;
  cfg.issues_per_core = 2;
  cfg.check_valid_hits = true;
  cfg.alphabet = {{{AccessKind::Store, RequestType::ReqWT, 0, 0},
                   {AccessKind::Load, RequestType::ReqV, 0, 0}}};
  ExploreResult r = explore(cfg);
  CHECK(r.ok);
  CHECK(r.violations.empty());
  CHECK(r.deadlocks == 0);
}

TEST_CASE("tight budgets fail cleanly and report the frontier") {
  CheckConfig cfg = standard_check_configs().front();
  cfg.state_budget = 50;
  ExploreResult r = explore(cfg);
  CHECK_FALSE(r.ok);
  CHECK(mentions(r.error, "budget"));
  CHECK(mentions(r.error, "frontier"));

  CheckConfig tiny = racing_owners();
  tiny.max_in_flight = 1;
  ExploreResult c = explore(tiny);
  CHECK_FALSE(c.ok);
  CHECK(mentions(c.error, "in-flight"));
}

TEST_CASE("ill-formed scripts are rejected before exploration") {
  CheckConfig cfg = racing_owners();
  cfg.alphabet.pop_back();
  ExploreResult r = explore(cfg);
  CHECK_FALSE(r.ok);
  CHECK(mentions(r.error, "alphabet"));

  cfg = racing_owners();
  cfg.alphabet[0][0] = {AccessKind::Load, RequestType::ReqWT, 0, 0};
  r = explore(cfg);
  CHECK_FALSE(r.ok);
  CHECK(mentions(r.error, "illegal type"));

  cfg = racing_owners();
  cfg.n_cores = 1;
  cfg.alphabet = {{{AccessKind::Store, RequestType::ReqWTo, 0, 0}}};
  r = explore(cfg);
  CHECK_FALSE(r.ok);
  CHECK(mentions(r.error, "two cores"));

  cfg = racing_owners();
  cfg.alphabet[1][0].block = 5;
  r = explore(cfg);
  CHECK_FALSE(r.ok);
  CHECK(mentions(r.error, "block out of range"));
}

TEST_CASE("reports render one row per configuration") {
  CHECK(result_csv_header() ==
        "config,states,transitions,max_frontier,deadlocks,violations");

  CheckConfig cfg = racing_owners();
  ExploreResult r = explore(cfg);
  std::string row = result_csv_row(cfg, r);
  CHECK(mentions(row, "race-ReqO,"));
  CHECK(mentions(row, std::to_string(r.states)));
  CHECK(std::count(row.begin(), row.end(), ',') == 5);

  std::string text = result_text(cfg, r);
  CHECK(mentions(text, "race-ReqO"));
  CHECK(mentions(text, "states"));
  CHECK(mentions(text, "0 violations"));

  CheckConfig faulty = cfg;
  faulty.fault.skip_owner_revoke = true;
  std::string bad = result_text(faulty, explore(faulty));
  CHECK(mentions(bad, "violation:"));
  CHECK(mentions(bad, "deliver"));
}
