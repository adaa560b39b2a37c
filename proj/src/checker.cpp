#include "fcssim/checker.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <deque>
#include <sstream>
#include <unordered_set>

namespace fcssim::chk {
namespace {

using coh::kLlcNode;
using coh::L1;
using coh::L1Delivery;
using coh::L1Line;
using coh::Llc;
using coh::Msg;
using coh::MsgKind;
using coh::PendingReq;

Geometry make_geo(const CheckConfig& cfg) {
  Geometry g;
  g.word_size = 4;
  g.block_size = 4 * cfg.words_per_line;
  return g;
}

Addr block_addr(const CheckConfig& cfg, int blk) {
  return static_cast<Addr>(blk) * (4u * cfg.words_per_line);
}

// Distinct per-writer store tags keep lost updates observable.
std::uint32_t store_tag(int core) { return static_cast<std::uint32_t>(core) + 1; }

constexpr std::uint32_t kRmwAddend = 1;

// Checker-side record of a core's one outstanding access.
struct OpMeta {
  int op{-1};
  std::uint32_t value{0};  // store tag, or the RMW addend
  bool applied{false};     // install-time write accounting already done
};

struct CoreRt {
  int issued{0};
  bool busy{false};
  std::uint64_t pending_id{0};
  OpMeta meta;
};

struct State {
  Llc llc;
  std::vector<L1> l1s;
  std::vector<CoreRt> cores;
  std::vector<Msg> flight;
  std::vector<std::uint32_t> current;  // abstract per-word value history tip
  std::vector<Event> path;
};

// ---------------------------------------------------------------------------
// Canonical encodings
// ---------------------------------------------------------------------------

void enc_msg(std::ostringstream& o, const Msg& m) {
  o << to_string(m.kind) << '/' << to_string(m.type) << '/' << to_string(m.born)
    << "/b" << m.block << "/m" << m.mask << "/v";
  for (const auto v : m.values) o << v << ',';
  o << "/s" << m.src << "/d" << m.dst << "/q" << m.requestor << "/a" << m.ack_to
    << "/r" << static_cast<int>(m.retry) << "/f" << m.forwarded << "/k"
    << m.keep_copy << "/x" << m.acks_expected << "/i" << m.req_id;
}

std::string msg_key(const Msg& m) {
  std::ostringstream o;
  enc_msg(o, m);
  return o.str();
}

std::string msg_brief(const Msg& m) {
  std::ostringstream o;
  o << to_string(m.kind) << '[' << to_string(m.type) << " b" << m.block << " m"
    << m.mask;
  o << ' ';
  if (m.src == kLlcNode)
    o << "LLC";
  else
    o << 'c' << m.src;
  o << "->";
  if (m.dst == kLlcNode)
    o << "LLC";
  else
    o << 'c' << m.dst;
  o << " #" << m.req_id << ']';
  return o.str();
}

void enc_pending(std::ostringstream& o, const PendingReq& p) {
  o << p.id << ',' << to_string(p.born) << ',' << to_string(p.issued) << ','
    << static_cast<int>(p.kind) << ",b" << p.block << ",m" << p.mask << ",sm"
    << p.store_mask << ",dg" << p.data_got << ",sv";
  for (const auto v : p.store_values) o << v << ',';
  o << "g";
  for (const auto v : p.gathered) o << v << ',';
  o << ",ad" << p.rmw_addend << ',' << p.grant_seen << p.installed << ",ax"
    << p.acks_expected << ',' << p.acks_got << ",r" << static_cast<int>(p.retry)
    << p.nacked_once << p.dead << ",lv" << p.load_value;
}

// The network contract matches the mesh the timed model rides on: messages
// between one (source, destination) pair stay in order, while distinct
// channels interleave freely.  A message is deliverable iff it is the oldest
// in flight on its channel.
bool channel_head(const std::vector<Msg>& flight, std::size_t i) {
  for (std::size_t j = 0; j < i; ++j)
    if (flight[j].src == flight[i].src && flight[j].dst == flight[i].dst)
      return false;
  return true;
}

std::string state_key(const State& s) {
  std::ostringstream o;
  for (const auto& [blk, ln] : s.llc.lines()) {
    o << "L" << blk << ":" << ln.remote << ":o";
    for (const int ow : ln.owner) o << ow << ',';
    o << ":d";
    for (const auto v : ln.data) o << v << ',';
    o << ":s";
    for (const int sh : ln.sharers) o << sh << ',';
    o << ":t" << ln.trans.active << ',' << ln.trans.await_recall << ','
      << ln.trans.await_invacks;
    if (ln.trans.active) {
      o << ',';
      enc_msg(o, ln.trans.origin);
    }
    o << ":w";
    for (const auto& wm : ln.waiting) {
      enc_msg(o, wm);
      o << ';';
    }
    o << '|';
  }
  for (const auto& l1 : s.l1s) {
    o << "C" << l1.core() << '{';
    for (const auto& [blk, ln] : l1.lines()) {
      o << 'b' << blk << ':' << ln.valid << ',' << ln.shared << ',' << ln.owned
        << ":d";
      for (const auto v : ln.data) o << v << ',';
      o << ';';
    }
    o << "p:";
    for (const auto& p : l1.pending()) {
      enc_pending(o, p);
      o << ';';
    }
    o << "q:";
    for (const auto& dm : l1.deferred()) {
      enc_msg(o, dm);
      o << ';';
    }
    o << '}';
  }
  o << "R:";
  for (const auto& rt : s.cores)
    o << rt.issued << ',' << rt.busy << ',' << rt.meta.op << ','
      << rt.meta.value << ',' << rt.meta.applied << ';';
  // In-flight messages canonicalize per channel: order within one channel is
  // meaningful (FIFO), order across channels is not.
  o << "F:";
  std::map<std::pair<int, int>, std::string> channels;
  for (const auto& m : s.flight) {
    std::string& ch = channels[{m.src, m.dst}];
    ch += msg_key(m);
    ch += ';';
  }
  for (const auto& [ep, ch] : channels)
    o << '(' << ep.first << '>' << ep.second << ')' << ch;
  o << "V:";
  for (const auto v : s.current) o << v << ',';
  return o.str();
}

// ---------------------------------------------------------------------------
// Transition application
// ---------------------------------------------------------------------------

struct Stepper {
  const CheckConfig& cfg;
  Geometry geo;
  std::string viol;     // first invariant violation hit while applying
  bool overflow{false};  // in-flight cap exceeded

  explicit Stepper(const CheckConfig& c) : cfg(c), geo(make_geo(c)) {}

  std::size_t widx(Addr block, unsigned w) const {
    return static_cast<std::size_t>(block / geo.block_size) *
               cfg.words_per_line +
           w;
  }

  void note(std::string v) {
    if (viol.empty()) viol = std::move(v);
  }

  void push_flight(State& s, Msg&& m) {
    if (s.flight.size() >= cfg.max_in_flight) {
      overflow = true;
      return;
    }
    s.flight.push_back(std::move(m));
  }

  WordMask op_mask(const ScriptOp& op) const {
    return op.type == RequestType::ReqS ? geo.full_mask()
                                        : (WordMask{1} << op.word);
  }

  // Local fast-path read.  Owned words are always governing, so they must
  // match the abstract history at any moment.  Shared and Valid copies may
  // legally lag: Valid self-invalidates instead of tracking writers, and a
  // Shared copy can be read in the window between an ownership write
  // installing and the invalidation ack arriving.  Conflict-free scripts can
  // opt into the strict check for those states too.
  void check_local_read(State& s, int c, Addr blk, WordMask mask) {
    const L1Line* ln = s.l1s[static_cast<std::size_t>(c)].find_line(blk);
    std::vector<std::uint32_t> vals;
    s.l1s[static_cast<std::size_t>(c)].read(blk, mask, vals);
    std::size_t i = 0;
    for (WordMask bits = mask; bits != 0; bits &= bits - 1) {
      const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
      const std::uint32_t v = vals[i++];
      const bool strong = ln != nullptr && mask_has(ln->owned, w);
      if ((strong || cfg.check_valid_hits) && v != s.current[widx(blk, w)]) {
        std::ostringstream o;
        o << "core " << c << " read " << v << " from block " << blk << " word "
          << w << " but the latest write left " << s.current[widx(blk, w)];
        note(o.str());
      }
    }
  }

  void do_issue(State& s, int c, int op_idx, int target) {
    const ScriptOp& op =
        cfg.alphabet[static_cast<std::size_t>(c)][static_cast<std::size_t>(op_idx)];
    CoreRt& rt = s.cores[static_cast<std::size_t>(c)];
    L1& l1 = s.l1s[static_cast<std::size_t>(c)];
    const Addr blk = block_addr(cfg, op.block);
    const WordMask mask = op_mask(op);
    ++rt.issued;

    if (op.kind == AccessKind::Load && l1.load_hit(blk, mask)) {
      check_local_read(s, c, blk, mask);
      return;
    }
    if (op.kind != AccessKind::Load && l1.owns(blk, mask)) {
      const std::size_t wi = widx(blk, op.word);
      if (op.kind == AccessKind::Store) {
        l1.write(blk, mask, {store_tag(c)});
        s.current[wi] = store_tag(c);
      } else {
        const std::uint32_t old = l1.rmw(blk, mask, kRmwAddend);
        if (old != s.current[wi]) {
          std::ostringstream o;
          o << "core " << c << " rmw on block " << blk << " word " << op.word
            << " read " << old << " in place of " << s.current[wi];
          note(o.str());
        }
        s.current[wi] += kRmwAddend;
      }
      return;
    }

    PendingReq r;
    r.id = static_cast<std::uint64_t>(c + 1) * 100 +
           static_cast<std::uint64_t>(rt.issued);
    r.kind = op.kind;
    r.born = op.type;
    r.issued = op.type;
    r.block = blk;
    r.mask = mask;
    if (op.kind != AccessKind::Load) r.store_mask = mask;
    if (op.kind == AccessKind::Store) r.store_values = {store_tag(c)};
    if (op.kind == AccessKind::Rmw) r.rmw_addend = kRmwAddend;
    rt.busy = true;
    rt.pending_id = r.id;
    rt.meta = OpMeta{op_idx,
                     op.kind == AccessKind::Store ? store_tag(c) : kRmwAddend,
                     false};
    Msg m = l1.start(std::move(r));
    if (is_predicted_type(op.type)) m.dst = target;
    push_flight(s, std::move(m));
  }

  // The value a request is writing, looked up through the requestor's
  // outstanding-access record; 0 when the response is stale.
  std::uint32_t requestor_value(const State& s, int requestor,
                                std::uint64_t req_id) const {
    if (requestor < 0 || requestor >= cfg.n_cores) return 0;
    const CoreRt& rt = s.cores[static_cast<std::size_t>(requestor)];
    return rt.busy && rt.pending_id == req_id ? rt.meta.value : 0;
  }

  void check_served_values(State& s, const Msg& m, const char* what) {
    std::size_t i = 0;
    for (WordMask bits = m.mask; bits != 0; bits &= bits - 1) {
      const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
      const std::uint32_t v = m.values[i++];
      const std::size_t wi = widx(m.block, w);
      if (v != s.current[wi]) {
        std::ostringstream o;
        o << what << " carried " << v << " for block " << m.block << " word "
          << w << " but the latest write left " << s.current[wi];
        note(o.str());
      }
    }
  }

  // Inspect one emitted message at its serialization point: refusal
  // legality, served-data freshness, and the linearization bookkeeping for
  // writes that apply at the emitting node.
  void on_emission(State& s, const Msg& m) {
    switch (m.kind) {
      case MsgKind::Nack:
        if (m.src == kLlcNode)
          note("the directory refused a request; only caches may Nack");
        else if (!is_forwardable_type(m.type))
          note(std::string("Nack for ") + std::string(to_string(m.type)) +
               ", a type that must always be served");
        break;
      case MsgKind::Ack:
        // A plain write-through just applied at the emitting node.
        if (is_wt_type(m.type) && !is_data_variant(m.type)) {
          const std::uint32_t v = requestor_value(s, m.requestor, m.req_id);
          for (WordMask bits = m.mask; bits != 0; bits &= bits - 1) {
            const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
            s.current[widx(m.block, w)] = v;
          }
        }
        break;
      case MsgKind::Grant: {
        if (m.mask == 0 || m.values.empty()) break;  // pure ack-count grant
        if (is_wt_type(m.type) && is_data_variant(m.type)) {
          // Write-through RMW: applied at the emitting node, old value rides
          // the grant.
          check_served_values(s, m, "rmw grant");
          const std::uint32_t add = requestor_value(s, m.requestor, m.req_id);
          for (WordMask bits = m.mask; bits != 0; bits &= bits - 1) {
            const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
            s.current[widx(m.block, w)] += add;
          }
        } else {
          // Read serve (ReqV/ReqVo/ReqS) or an ownership data fetch from
          // home: the carried words must be the freshest written values.
          check_served_values(s, m, "grant");
        }
        break;
      }
      case MsgKind::RevokeAck:
      case MsgKind::RecallResp:
        // Recalled ownership data leaves the sole owner; anything stale here
        // means a write was lost.
        check_served_values(s, m, "recalled data");
        break;
      default:
        break;  // Request / Inv / Revoke / InvAck carry nothing to check
    }
  }

  // Install/completion accounting for the delivered core's own access.
  void account_core(State& s, int c, const L1Delivery& d) {
    CoreRt& rt = s.cores[static_cast<std::size_t>(c)];
    if (!rt.busy) return;
    const bool completed =
        std::find(d.completed.begin(), d.completed.end(), rt.pending_id) !=
        d.completed.end();
    const PendingReq* p =
        s.l1s[static_cast<std::size_t>(c)].find_pending(rt.pending_id);
    const ScriptOp& op = cfg.alphabet[static_cast<std::size_t>(c)]
                                     [static_cast<std::size_t>(rt.meta.op)];
    const bool installed_now = completed || (p != nullptr && p->installed);
    if (!rt.meta.applied && installed_now && is_ownership_type(op.type) &&
        op.kind != AccessKind::Load) {
      // The write landed in the cache at install time; registration keeps
      // every other writer out until then, so the installed word must read
      // as latest-write (+ addend for an RMW).
      rt.meta.applied = true;
      const Addr blk = block_addr(cfg, op.block);
      const std::size_t wi = widx(blk, op.word);
      const L1Line* ln = s.l1s[static_cast<std::size_t>(c)].find_line(blk);
      const std::uint32_t expect = op.kind == AccessKind::Store
                                       ? rt.meta.value
                                       : s.current[wi] + kRmwAddend;
      if (ln == nullptr || ln->data[op.word] != expect) {
        std::ostringstream o;
        o << "core " << c << " installed "
          << (ln == nullptr ? 0u : ln->data[op.word]) << " into block " << blk
          << " word " << op.word << " where the write history expects "
          << expect;
        note(o.str());
      }
      s.current[wi] = expect;
    }
    if (completed) rt.busy = false;
  }

  void do_deliver(State& s, std::size_t fi) {
    Msg m = std::move(s.flight[fi]);
    s.flight.erase(s.flight.begin() + static_cast<std::ptrdiff_t>(fi));
    std::vector<Msg> emitted;
    const coh::Sink sink = [&emitted](Msg&& em) {
      emitted.push_back(std::move(em));
    };
    if (m.dst == kLlcNode) {
      s.llc.handle(std::move(m), sink);
    } else {
      const int c = m.dst;
      const L1Delivery d =
          s.l1s[static_cast<std::size_t>(c)].handle(std::move(m), sink);
      account_core(s, c, d);
    }
    for (const auto& em : emitted) on_emission(s, em);
    for (auto& em : emitted) push_flight(s, std::move(em));
  }

  void apply(State& s, const Event& e) {
    if (e.kind == Event::Kind::Issue) {
      do_issue(s, e.core, e.op, e.target);
      return;
    }
    for (std::size_t i = 0; i < s.flight.size(); ++i) {
      if (channel_head(s.flight, i) && msg_key(s.flight[i]) == e.msg) {
        do_deliver(s, i);
        return;
      }
    }
    note("replayed delivery of a message that is not deliverable");
  }
};

// ---------------------------------------------------------------------------
// Invariant checks on a settled state
// ---------------------------------------------------------------------------

bool quiescent(const State& s) {
  if (!s.flight.empty()) return false;
  for (const auto& [blk, ln] : s.llc.lines())
    if (ln.trans.active || !ln.waiting.empty()) return false;
  for (const auto& l1 : s.l1s) {
    if (!l1.deferred().empty()) return false;
    for (const auto& p : l1.pending())
      if (!p.dead) return false;
  }
  return true;
}

std::string check_state(const CheckConfig& cfg, const State& s) {
  const Geometry geo = make_geo(cfg);
  std::ostringstream o;

  // A word may be Owned by at most one cache, at every moment.
  for (int b = 0; b < cfg.n_blocks; ++b) {
    const Addr blk = block_addr(cfg, b);
    for (unsigned w = 0; w < cfg.words_per_line; ++w) {
      int owners = 0;
      for (const auto& l1 : s.l1s) {
        const L1Line* ln = l1.find_line(blk);
        if (ln != nullptr && mask_has(ln->owned, w)) ++owners;
      }
      if (owners > 1) {
        o << owners << " caches hold block " << blk << " word " << w
          << " Owned at once";
        return o.str();
      }
    }
  }

  // Within one cache the three word states are mutually exclusive.
  for (const auto& l1 : s.l1s)
    for (const auto& [blk, ln] : l1.lines())
      if ((ln.valid & ln.shared) != 0 || (ln.valid & ln.owned) != 0 ||
          (ln.shared & ln.owned) != 0) {
        o << "core " << l1.core() << " holds block " << blk
          << " words in two states at once";
        return o.str();
      }

  // Directory registration shape: the remote mask and the per-word owner
  // array must agree.
  for (const auto& [blk, ln] : s.llc.lines())
    for (unsigned w = 0; w < geo.words_per_block(); ++w)
      if (mask_has(ln.remote, w) != (ln.owner[w] != kLlcNode)) {
        o << "directory registration for block " << blk << " word " << w
          << " is inconsistent";
        return o.str();
      }

  if (!quiescent(s)) return "";

  // Quiescent checks: with no messages in flight, no transients and nothing
  // pending, bookkeeping at the directory and the caches must agree exactly.
  for (int b = 0; b < cfg.n_blocks; ++b) {
    const Addr blk = block_addr(cfg, b);
    const auto lit = s.llc.lines().find(blk);
    for (unsigned w = 0; w < cfg.words_per_line; ++w) {
      const int reg = lit == s.llc.lines().end() ? kLlcNode
                                                 : lit->second.owner[w];
      int held_by = kLlcNode;
      bool shared_somewhere = false;
      for (const auto& l1 : s.l1s) {
        const L1Line* ln = l1.find_line(blk);
        if (ln == nullptr) continue;
        if (mask_has(ln->owned, w)) held_by = l1.core();
        if (mask_has(ln->shared, w)) shared_somewhere = true;
      }
      if (reg != held_by) {
        o << "directory registers block " << blk << " word " << w
          << " to core " << reg << " but core " << held_by << " holds it";
        return o.str();
      }
      if (shared_somewhere && held_by != kLlcNode) {
        o << "block " << blk << " word " << w
          << " is Shared and Owned at the same time";
        return o.str();
      }
      // Value invariant at rest: whoever would serve the word next must
      // hold the latest written value.
      const std::uint32_t want =
          s.current[static_cast<std::size_t>(b) * cfg.words_per_line + w];
      std::uint32_t have = 0;
      if (held_by != kLlcNode) {
        have = 0;
        const L1Line* ln =
            s.l1s[static_cast<std::size_t>(held_by)].find_line(blk);
        if (ln != nullptr) have = ln->data[w];
      } else if (lit != s.llc.lines().end()) {
        have = lit->second.data[w];
      }
      if (have != want) {
        o << "at rest, block " << blk << " word " << w << " reads " << have
          << " at its serving point but the write history expects " << want;
        return o.str();
      }
      // Shared copies are invalidate-protected, so they may never go stale.
      for (const auto& l1 : s.l1s) {
        const L1Line* ln = l1.find_line(blk);
        if (ln != nullptr && mask_has(ln->shared, w) && ln->data[w] != want) {
          o << "core " << l1.core() << " holds a stale Shared copy of block "
            << blk << " word " << w;
          return o.str();
        }
      }
    }
    // Sharer lists: a cache holding Shared words of a line must be on it.
    for (const auto& l1 : s.l1s) {
      const L1Line* ln = l1.find_line(blk);
      if (ln == nullptr || ln->shared == 0) continue;
      if (lit == s.llc.lines().end() ||
          lit->second.sharers.count(l1.core()) == 0) {
        o << "core " << l1.core() << " holds block " << blk
          << " Shared but is not on the sharer list";
        return o.str();
      }
    }
  }
  return "";
}

// ---------------------------------------------------------------------------
// Exploration
// ---------------------------------------------------------------------------

State make_initial(const CheckConfig& cfg) {
  const Geometry geo = make_geo(cfg);
  State s{Llc(geo, cfg.retry_cap, cfg.fault), {}, {}, {}, {}, {}};
  for (int c = 0; c < cfg.n_cores; ++c)
    s.l1s.emplace_back(geo, c, cfg.retry_cap, cfg.fault,
                       /*defer_requests=*/false);
  s.cores.assign(static_cast<std::size_t>(cfg.n_cores), CoreRt{});
  s.current.assign(
      static_cast<std::size_t>(cfg.n_blocks) * cfg.words_per_line, 0);
  return s;
}

std::string issue_text(const CheckConfig& cfg, int c, int op_idx, int target) {
  std::ostringstream o;
  o << "core " << c << ": "
    << to_string(cfg.alphabet[static_cast<std::size_t>(c)]
                             [static_cast<std::size_t>(op_idx)]);
  if (target != kLlcNode) o << " -> core " << target;
  return o.str();
}

// All transitions enabled in `s`, in a fixed deterministic order.
std::vector<Event> enabled_events(const CheckConfig& cfg, const State& s) {
  std::vector<Event> out;
  for (int c = 0; c < cfg.n_cores; ++c) {
    const CoreRt& rt = s.cores[static_cast<std::size_t>(c)];
    if (rt.busy || rt.issued >= cfg.issues_per_core) continue;
    const auto& ops = cfg.alphabet[static_cast<std::size_t>(c)];
    for (int oi = 0; oi < static_cast<int>(ops.size()); ++oi) {
      if (is_predicted_type(ops[static_cast<std::size_t>(oi)].type)) {
        for (int t = 0; t < cfg.n_cores; ++t) {
          if (t == c) continue;
          out.push_back(Event{Event::Kind::Issue, c, oi, t, "",
                              issue_text(cfg, c, oi, t)});
        }
      } else {
        out.push_back(Event{Event::Kind::Issue, c, oi, kLlcNode, "",
                            issue_text(cfg, c, oi, kLlcNode)});
      }
    }
  }
  for (std::size_t i = 0; i < s.flight.size(); ++i) {
    if (!channel_head(s.flight, i)) continue;
    out.push_back(Event{Event::Kind::Deliver, -1, -1, kLlcNode,
                        msg_key(s.flight[i]),
                        "deliver " + msg_brief(s.flight[i])});
  }
  return out;
}

std::string validate(const CheckConfig& cfg) {
  if (cfg.n_cores < 1 || cfg.n_cores > 3) return "n_cores must be 1..3";
  if (cfg.n_blocks < 1 || cfg.n_blocks > 2) return "n_blocks must be 1 or 2";
  if (cfg.words_per_line != 1 && cfg.words_per_line != 2)
    return "words_per_line must be 1 or 2";
  if (static_cast<int>(cfg.alphabet.size()) != cfg.n_cores)
    return "alphabet must list one op set per core";
  if (cfg.issues_per_core < 0 || cfg.issues_per_core > 90)
    return "issues_per_core out of range";
  for (int c = 0; c < cfg.n_cores; ++c)
    for (const auto& op : cfg.alphabet[static_cast<std::size_t>(c)]) {
      if (op.block < 0 || op.block >= cfg.n_blocks)
        return "script op block out of range";
      if (op.word >= cfg.words_per_line) return "script op word out of range";
      const bool legal = (op.kind == AccessKind::Load && is_load_type(op.type)) ||
                         (op.kind == AccessKind::Store && is_store_type(op.type)) ||
                         (op.kind == AccessKind::Rmw && is_rmw_type(op.type));
      if (!legal) return "script op pairs an access with an illegal type";
      if (cfg.n_cores < 2 && is_predicted_type(op.type))
        return "owner-predicted ops need at least two cores";
    }
  return "";
}

}  // namespace

std::string to_string(const ScriptOp& op) {
  std::ostringstream o;
  o << to_string(op.kind) << " blk" << op.block << ".w" << op.word << " as "
    << to_string(op.type);
  return o.str();
}

std::string to_string(const Event& e) { return e.text; }

ExploreResult explore(const CheckConfig& cfg) {
  ExploreResult res;
  if (std::string err = validate(cfg); !err.empty()) {
    res.error = err;
    return res;
  }

  State init = make_initial(cfg);
  std::unordered_set<std::string> visited;
  std::deque<State> frontier;
  visited.insert(state_key(init));
  frontier.push_back(std::move(init));
  res.states = 1;
  res.max_frontier = 1;

  while (!frontier.empty()) {
    State s = std::move(cfg.depth_first ? frontier.back() : frontier.front());
    if (cfg.depth_first)
      frontier.pop_back();
    else
      frontier.pop_front();

    const std::vector<Event> events = enabled_events(cfg, s);
    if (events.empty()) {
      // Terminal: fine if every script ran to completion, deadlock if an
      // access can never finish.
      bool stuck = false;
      for (const auto& rt : s.cores)
        if (rt.busy) stuck = true;
      if (stuck) {
        ++res.deadlocks;
        if (res.deadlock_example.empty()) res.deadlock_example = s.path;
      }
      continue;
    }

    for (const auto& e : events) {
      State ns = s;
      Stepper st(cfg);
      st.apply(ns, e);
      ns.path.push_back(e);
      ++res.transitions;
      if (st.overflow) {
        res.error = "in-flight message cap exceeded (" +
                    std::to_string(cfg.max_in_flight) + ")";
        return res;
      }
      std::string v = st.viol.empty() ? check_state(cfg, ns) : st.viol;
      if (!v.empty()) {
        Violation out{std::move(v), minimize_counterexample(cfg, ns.path)};
        res.violations.push_back(std::move(out));
        res.ok = true;
        return res;
      }
      if (visited.size() > cfg.state_budget) {
        res.error = "state budget exceeded; frontier holds " +
                    std::to_string(frontier.size()) + " states";
        return res;
      }
      if (visited.insert(state_key(ns)).second) {
        ++res.states;
        frontier.push_back(std::move(ns));
        res.max_frontier = std::max(res.max_frontier,
                                    static_cast<std::uint64_t>(frontier.size()));
      }
    }
  }
  res.ok = true;
  return res;
}

std::string replay_violation(const CheckConfig& cfg,
                             const std::vector<Event>& events) {
  if (!validate(cfg).empty()) return "";
  State s = make_initial(cfg);
  for (const auto& e : events) {
    if (e.kind == Event::Kind::Issue) {
      if (e.core < 0 || e.core >= cfg.n_cores) return "";
      const CoreRt& rt = s.cores[static_cast<std::size_t>(e.core)];
      if (rt.busy || rt.issued >= cfg.issues_per_core) return "";
      if (e.op < 0 ||
          e.op >= static_cast<int>(
                      cfg.alphabet[static_cast<std::size_t>(e.core)].size()))
        return "";
    } else {
      bool found = false;
      for (std::size_t i = 0; i < s.flight.size(); ++i)
        if (channel_head(s.flight, i) && msg_key(s.flight[i]) == e.msg) {
          found = true;
          break;
        }
      if (!found) return "";
    }
    Stepper st(cfg);
    st.apply(s, e);
    if (st.overflow) return "";
    if (!st.viol.empty()) return st.viol;
    if (std::string v = check_state(cfg, s); !v.empty()) return v;
  }
  return "";
}

std::vector<Event> minimize_counterexample(const CheckConfig& cfg,
                                           const std::vector<Event>& events) {
  std::vector<Event> cur = events;
  if (replay_violation(cfg, cur).empty()) return cur;  // not a counterexample
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < cur.size();) {
      std::vector<Event> cand = cur;
      cand.erase(cand.begin() + static_cast<std::ptrdiff_t>(i));
      if (!replay_violation(cfg, cand).empty()) {
        cur = std::move(cand);
        changed = true;
      } else {
        ++i;
      }
    }
  }
  return cur;
}

std::vector<CountRow> compare_state_counts(
    const std::vector<std::pair<std::string, std::uint64_t>>& counts) {
  std::vector<CountRow> rows;
  rows.reserve(counts.size());
  for (const auto& [name, states] : counts) {
    CountRow r{name, states, 1.0};
    if (!counts.empty() && counts.front().second != 0)
      r.ratio = static_cast<double>(states) /
                static_cast<double>(counts.front().second);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<CheckConfig> standard_check_configs() {
  using RT = RequestType;
  // Core 0 races ownership traffic against core 1, which draws from a broad
  // base alphabet covering every default request class over both blocks.  The
  // "+fwd" and "+pred" treatments are supersets of the baseline alphabet, so
  // each extension can only add reachable states; keeping the base alphabet
  // rich keeps that addition proportionally small, which is the property the
  // state-count comparison quantifies.
  const std::vector<ScriptOp> core0 = {
      {AccessKind::Rmw, RT::ReqOData, 0, 0},
      {AccessKind::Store, RT::ReqO, 0, 0},
      {AccessKind::Load, RT::ReqV, 1, 0},
  };
  const std::vector<ScriptOp> core1_base = {
      {AccessKind::Store, RT::ReqWT, 0, 0},
      {AccessKind::Load, RT::ReqS, 0, 0},
      {AccessKind::Rmw, RT::ReqWTData, 0, 0},
      {AccessKind::Load, RT::ReqV, 0, 0},
      {AccessKind::Store, RT::ReqO, 0, 0},
      {AccessKind::Rmw, RT::ReqOData, 0, 0},
      {AccessKind::Load, RT::ReqOData, 0, 0},
      {AccessKind::Load, RT::ReqV, 1, 0},
      {AccessKind::Store, RT::ReqWT, 1, 0},
      {AccessKind::Rmw, RT::ReqWTData, 1, 0},
      {AccessKind::Load, RT::ReqS, 1, 0},
      {AccessKind::Store, RT::ReqO, 1, 0},
  };
  auto make = [&](std::string name, std::vector<ScriptOp> extra) {
    CheckConfig cfg;
    cfg.name = std::move(name);
    cfg.n_cores = 2;
    cfg.n_blocks = 2;
    cfg.words_per_line = 1;
    cfg.issues_per_core = 2;
    std::vector<ScriptOp> core1 = core1_base;
    core1.insert(core1.end(), extra.begin(), extra.end());
    cfg.alphabet = {core0, core1};
    return cfg;
  };
  std::vector<CheckConfig> out;
  out.push_back(make("baseline", {}));
  out.push_back(make("+fwd", {{AccessKind::Store, RT::ReqWTfwd, 0, 0}}));
  out.push_back(make("+pred", {{AccessKind::Store, RT::ReqWTfwd, 0, 0},
                               {AccessKind::Store, RT::ReqWTo, 0, 0}}));
  return out;
}

std::string result_text(const CheckConfig& cfg, const ExploreResult& r) {
  std::ostringstream o;
  o << "config " << cfg.name << ": ";
  if (!r.ok) {
    o << "error: " << r.error << '\n';
    return o.str();
  }
  o << r.states << " states, " << r.transitions << " transitions, max frontier "
    << r.max_frontier << ", " << r.deadlocks << " deadlock state"
    << (r.deadlocks == 1 ? "" : "s") << ", " << r.violations.size()
    << " violation" << (r.violations.size() == 1 ? "" : "s") << '\n';
  for (const auto& v : r.violations) {
    o << "  violation: " << v.what << '\n';
    for (const auto& e : v.events) o << "    " << to_string(e) << '\n';
  }
  if (r.deadlocks != 0) {
    o << "  deadlock after:\n";
    for (const auto& e : r.deadlock_example)
      o << "    " << to_string(e) << '\n';
  }
  return o.str();
}

std::string result_csv_header() {
  return "config,states,transitions,max_frontier,deadlocks,violations";
}

std::string result_csv_row(const CheckConfig& cfg, const ExploreResult& r) {
  std::ostringstream o;
  o << cfg.name << ',' << r.states << ',' << r.transitions << ','
    << r.max_frontier << ',' << r.deadlocks << ',' << r.violations.size();
  return o.str();
}

}  // namespace fcssim::chk
