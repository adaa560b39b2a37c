#pragma once

// Protocol engine: message vocabulary and transition rules for the last-level
// cache directory and the private L1 caches.  The timed network simulator and
// the bounded model checker both drive these transitions; neither layer owns
// timing, so everything here is a pure state change plus emitted messages.
//
// State model (per word unless noted):
//   L1:  Invalid, Valid (self-invalidated at acquires), Shared (directory-
//        protected), Owned (exclusive, dirty-capable, survives acquires).
//   LLC: at-home (data lives here) or owned remotely by one core; sharer
//        sets are tracked per line.  A line enters a transient while the LLC
//        recalls owners or invalidates sharers on behalf of a request;
//        further requests to that line queue FIFO behind the transient.
//
// Ownership transfers ride on direct acknowledgements: the grant tells the
// requestor how many invalidation/revoke acks to expect, and those acks flow
// straight from the victim caches to the requestor.  Write-through requests
// complete at the LLC (or, when forwarded or predicted, at the owning L1).
// Only forwardable request types may be refused with a Nack; refused
// requests retry through the LLC and eventually fall back to an unrefusable
// form.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "fcssim/types.hpp"

namespace fcssim::coh {

inline constexpr int kLlcNode = -1;

enum class MsgKind : std::uint8_t {
  Request,     // coherence request; `forwarded` marks an LLC relay to an owner
  Grant,       // data / ownership response (from LLC or an owning L1)
  Ack,         // write-through completion for the words in `mask`
  Nack,        // refusal from an L1; legal only for forwardable requests
  Inv,         // invalidate unowned copies of a line
  Revoke,      // recall ownership of the words in `mask`
  InvAck,      // sharer invalidation done
  RevokeAck,   // ownership recall done, carries the recalled data
  RecallResp,  // ownership recall done, data returned to the LLC
};

const char* to_string(MsgKind k);

struct Msg {
  MsgKind kind{MsgKind::Request};
  RequestType type{RequestType::ReqV};  // issued type (requests) or echo
  RequestType born{RequestType::ReqV};  // selection stamp, kept across retries
  Addr block{0};
  WordMask mask{0};
  std::vector<std::uint32_t> values;  // payload/data, one per set mask bit
  int src{kLlcNode};
  int dst{kLlcNode};
  int requestor{kLlcNode};   // originating core for indirected messages
  int ack_to{kLlcNode};      // where Inv/Revoke acknowledgements go
  std::uint8_t retry{0};
  bool forwarded{false};     // relayed by the LLC
  bool keep_copy{false};     // Revoke: victim may keep a Valid copy
  int acks_expected{-1};     // Grant of ownership: direct acks to await
  std::uint64_t req_id{0};   // requestor-local id echoed in every response
};

using Sink = std::function<void(Msg&&)>;

// --------------------------------------------------------------------------
// LLC side
// --------------------------------------------------------------------------

struct LlcTransient {
  bool active{false};
  Msg origin;                // request being completed
  WordMask await_recall{0};  // words still owned remotely
  int await_invacks{0};      // sharer acks still outstanding
};

struct LlcLine {
  WordMask remote{0};        // words owned by some L1
  std::vector<int> owner;    // per-word owning core (kLlcNode when at home)
  std::vector<std::uint32_t> data;
  std::set<int> sharers;     // cores holding the line Shared
  LlcTransient trans;
  std::deque<Msg> waiting;   // requests queued behind the transient
};

struct FaultInjection {
  bool skip_owner_revoke{false};
  bool skip_sharer_invalidate{false};
  bool drop_nack_retry{false};
};

struct LlcStats {
  // Requests processed at the directory, keyed by the selection stamp.
  std::array<std::uint64_t, kNumRequestTypes> lookups_by_born{};
  std::uint64_t rmws_applied{0};
};

class Llc {
 public:
  Llc(const Geometry& geo, int retry_cap, FaultInjection fault = {})
      : geo_(geo), retry_cap_(retry_cap), fault_(fault) {}

  // Feed one message addressed to the LLC; emits outgoing messages.
  void handle(Msg&& m, const Sink& out);

  const Geometry& geometry() const { return geo_; }
  LlcLine& line(Addr block);
  const std::map<Addr, LlcLine>& lines() const { return lines_; }
  std::map<Addr, LlcLine>& lines() { return lines_; }
  const LlcStats& stats() const { return stats_; }
  // Word value as the directory sees it (owned words are the owner's).
  std::uint32_t home_value(Addr word_addr) const;

 private:
  void process(Msg&& m, const Sink& out);
  void finish_transient(LlcLine& ln, const Sink& out);
  void apply_ready(LlcLine& ln, Msg&& req, const Sink& out);
  void drain(LlcLine& ln, const Sink& out);

  Geometry geo_;
  int retry_cap_;
  FaultInjection fault_;
  std::map<Addr, LlcLine> lines_;
  LlcStats stats_;
};

// --------------------------------------------------------------------------
// L1 side
// --------------------------------------------------------------------------

struct L1Line {
  WordMask valid{0}, shared{0}, owned{0};  // mutually exclusive bit sets
  std::vector<std::uint32_t> data;
};

// One outstanding request (miss-status register).
struct PendingReq {
  std::uint64_t id{0};
  RequestType born{RequestType::ReqV};
  RequestType issued{RequestType::ReqV};
  AccessKind kind{AccessKind::Load};
  Addr block{0};
  WordMask mask{0};        // words this request must cover
  WordMask store_mask{0};  // words the access itself writes (stores/RMWs)
  WordMask data_got{0};    // words whose data/ack has arrived
  std::vector<std::uint32_t> store_values;  // aligned with store_mask bits
  std::vector<std::uint32_t> gathered;      // response data, mask-aligned
  std::uint32_t rmw_addend{0};
  bool grant_seen{false};
  bool installed{false};   // cache state updated (ownership may still count acks)
  int acks_expected{-1};
  int acks_got{0};
  std::uint8_t retry{0};
  bool nacked_once{false};  // any refusal along the way (prediction miss)
  bool dead{false};         // dropped by fault injection
  std::uint32_t load_value{0};  // RMW read result
  std::uint64_t tag{0};         // caller cookie (e.g. trace position)
};

// Result of feeding one message to an L1.
struct L1Delivery {
  std::vector<std::uint64_t> completed;  // pending ids finished by this step
};

class L1 {
 public:
  // defer_requests: an owner holding back incoming demands that touch words
  // its own in-flight ownership request has not yet covered.  Revokes always
  // defer (they cannot be refused); forwarded and predicted requests defer
  // when this is set and are refused with a Nack otherwise.
  L1(const Geometry& geo, int core, int retry_cap, FaultInjection fault = {},
     bool defer_requests = true)
      : geo_(geo),
        core_(core),
        retry_cap_(retry_cap),
        fault_(fault),
        defer_requests_(defer_requests) {}

  int core() const { return core_; }
  L1Line& line(Addr block);
  const L1Line* find_line(Addr block) const;
  std::map<Addr, L1Line>& lines() { return lines_; }
  const std::map<Addr, L1Line>& lines() const { return lines_; }

  // Local access fast paths -------------------------------------------------
  // True if every masked word is readable (Valid, Shared, or Owned).
  bool load_hit(Addr block, WordMask mask) const;
  // Read masked words into out (caller ensures load_hit).
  void read(Addr block, WordMask mask, std::vector<std::uint32_t>& out) const;
  // True if every masked word is Owned (store/RMW in-place is legal).
  bool owns(Addr block, WordMask mask) const;
  // Write masked words in place (caller ensures owns()).
  void write(Addr block, WordMask mask, const std::vector<std::uint32_t>& v);
  // Fetch-add on an owned word; returns the prior value.
  std::uint32_t rmw(Addr block, WordMask mask, std::uint32_t addend);
  // Self-invalidation at an acquire: Valid words become Invalid.
  void acquire_invalidate();

  // Miss path ---------------------------------------------------------------
  // Register an outstanding request and build its initial message.
  Msg start(PendingReq req);
  std::vector<PendingReq>& pending() { return pending_; }
  const std::vector<PendingReq>& pending() const { return pending_; }
  const PendingReq* find_pending(std::uint64_t id) const;
  // Messages parked behind an in-flight ownership fill (revokes and, when
  // deferral is enabled, demands); drained after every delivery.
  const std::deque<Msg>& deferred() const { return deferred_; }

  // Feed one message addressed to this core.  Completions and retry
  // messages come back in the delivery record; protocol replies (acks,
  // serves, nacks) go straight to the sink.
  L1Delivery handle(Msg&& m, const Sink& out);

  std::uint64_t nacks_seen() const { return nacks_seen_; }
  std::uint64_t rmws_applied() const { return rmws_applied_; }

 private:
  // Words of `block` that an in-flight ownership request still needs data
  // for; incoming demands that touch them are deferred.
  WordMask vulnerable_mask(Addr block) const;
  void serve_or_refuse(Msg&& m, const Sink& out);
  void apply_revoke(Msg&& m, const Sink& out);
  void on_response(Msg&& m, L1Delivery& d, const Sink& out);
  void check_progress(PendingReq& p, L1Delivery& d);
  void install(PendingReq& p);
  void drain_deferred(const Sink& out);

  Geometry geo_;
  int core_;
  int retry_cap_;
  FaultInjection fault_;
  bool defer_requests_;
  std::map<Addr, L1Line> lines_;
  std::vector<PendingReq> pending_;
  std::deque<Msg> deferred_;
  std::uint64_t nacks_seen_{0};
  std::uint64_t rmws_applied_{0};
};

// Issued form of a refused request on its next attempt.  Below the retry cap
// the request goes back through the LLC in its forwardable root form; at the
// cap it degrades to a form that cannot be refused.
RequestType retry_issue_type(RequestType born, int attempt, int retry_cap);

}  // namespace fcssim::coh
