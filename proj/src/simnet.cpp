#include "fcssim/simnet.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <deque>
#include <queue>
#include <sstream>

namespace fcssim::sim {

namespace {

using coh::kLlcNode;
using coh::Msg;
using coh::MsgKind;

std::uint32_t value_at(WordMask mask, const std::vector<std::uint32_t>& v,
                       unsigned w) {
  const WordMask below = mask & ((WordMask{1} << w) - 1);
  return v[static_cast<std::size_t>(std::popcount(below))];
}

// Store-class priority when two buffered stores to one word merge: the
// stronger delivery class wins (a plain write-through must reach the LLC; an
// ownership store must own; forwarded/predicted write-throughs are weakest).
int store_class_rank(RequestType t) {
  switch (t) {
    case RequestType::ReqWT:
    case RequestType::ReqWTData:
      return 4;
    case RequestType::ReqO:
    case RequestType::ReqOData:
      return 3;
    case RequestType::ReqWTfwd:
    case RequestType::ReqWTfwdData:
      return 2;
    default:
      return 1;  // predicted write-throughs
  }
}

struct WbEntry {
  Addr block{0};
  unsigned word{0};
  std::uint32_t value{0};
  RequestType final_type{RequestType::ReqWT};
  WordMask fetch{0};  // request footprint the selection asked for
  std::uint32_t inst{0};
};

// One write-buffer drain step: either a per-block merged ownership store or
// a single-word write-through.
struct DrainItem {
  bool ownership{false};
  Addr block{0};
  WordMask store{0};
  WordMask fetch{0};
  bool any_odata{false};
  std::map<unsigned, std::uint32_t> values;  // word index -> value
  RequestType final_type{RequestType::ReqWT};
  std::uint32_t inst{0};
};

struct ReqCtx {
  int core{0};
  enum class Purpose { Load, Rmw, Flush } purpose{Purpose::Load};
  std::size_t trace_idx{0};
  std::uint32_t inst{0};
  std::uint64_t issue_epoch{0};
  bool predicted_born{false};
  bool first_direct{false};  // first issue went straight to a predicted owner
  bool nacked{false};
};

enum class Wait { None, Barrier, Flush, Window, Drain, Op };

struct CoreState {
  int id{0};
  DeviceClass dev{DeviceClass::Cpu};
  Flavor flavor{Flavor::Mesi};
  int window{1};
  std::vector<std::size_t> accs;
  std::size_t ip{0};
  int phase{0};  // 0 acquire gate, 1 release flush, 2 operate, 3 op issued
  Wait wait{Wait::None};
  std::uint64_t cur{0};
  std::vector<std::size_t> waiters;  // missed loads awaiting readability
  std::vector<WbEntry> wb;
  std::deque<DrainItem> drainq;
  std::set<std::uint64_t> awaited;  // in-flight drain request
  std::uint64_t epoch{0};           // acquires completed
  std::map<std::uint32_t, int> pred;  // static inst -> last serving core
  std::vector<std::uint64_t> rel_seqs;
  std::size_t rels_done{0};
};

struct IssuePlan {
  RequestType born{RequestType::ReqV};
  RequestType issued{RequestType::ReqV};
  WordMask mask{0};
  int dst{kLlcNode};
  bool direct{false};
};

class Engine {
 public:
  Engine(const trace::AccessTrace& t, const sel::SelectionMap* map,
         const SimConfig& cfg, const SimParams& p, bool capture)
      : tr_(&t),
        map_(map),
        cfg_(&cfg),
        p_(p),
        capture_(capture),
        geo_(t.hdr.geo),
        llc_(geo_, p.retry_cap) {}

  SimResult run();

 private:
  struct Ev {
    std::uint64_t t{0};
    std::uint64_t seq{0};
    enum Kind { Deliver, Wake, LlcStep } kind{Wake};
    int core{0};
    std::size_t mi{0};
  };
  struct EvAfter {
    bool operator()(const Ev& a, const Ev& b) const {
      return a.t != b.t ? a.t > b.t : a.seq > b.seq;
    }
  };

  std::string capability_error() const;
  int node_of(int endpoint) const;
  int hops(int a, int b) const;
  void push(Ev ev);
  void schedule_wake(int core, std::uint64_t t);
  void send(Msg&& m, std::uint64_t t);
  coh::Sink sink(std::uint64_t t) {
    return [this, t](Msg&& m) { send(std::move(m), t); };
  }

  bool can_pass_acquire(std::uint64_t seq) const;
  void finish_access(CoreState& cs, std::size_t idx, std::uint64_t t);
  std::uint64_t issue(CoreState& cs, coh::PendingReq req, const IssuePlan& pl,
                      ReqCtx::Purpose purpose, std::size_t trace_idx,
                      std::uint32_t inst, std::uint64_t t);

  IssuePlan plan_load(const CoreState& cs, std::size_t idx,
                      const trace::MemoryAccess& a) const;
  IssuePlan plan_rmw(CoreState& cs, std::size_t idx,
                     const trace::MemoryAccess& a) const;
  void plan_store(const CoreState& cs, std::size_t idx,
                  const trace::MemoryAccess& a, RequestType& final_type,
                  WordMask& fetch) const;
  void predict_target(CoreState& cs, std::uint32_t inst, RequestType root_fwd,
                      IssuePlan& pl) const;

  WordMask wb_mask_of(const CoreState& cs, Addr block) const;
  WordMask inflight_mask(const CoreState& cs, Addr block) const;
  void service_waiters(CoreState& cs, std::uint64_t t);
  void wb_insert(CoreState& cs, std::size_t idx, const trace::MemoryAccess& a);
  void start_drain(CoreState& cs, std::uint64_t t);
  void next_drain_item(CoreState& cs, std::uint64_t t);

  bool step_load(CoreState& cs, std::size_t idx, const trace::MemoryAccess& a,
                 std::uint64_t& cur);
  bool step_store(CoreState& cs, std::size_t idx, const trace::MemoryAccess& a,
                  std::uint64_t& cur);
  bool step_rmw(CoreState& cs, std::size_t idx, const trace::MemoryAccess& a,
                std::uint64_t& cur);
  void run_core(int c, std::uint64_t now);
  void deliver_core(Msg&& m, std::uint64_t t);
  void on_complete(int c, std::uint64_t id, std::uint64_t t);
  std::map<Addr, std::uint32_t> build_image() const;
  std::string diagnose() const;

  const trace::AccessTrace* tr_;
  const sel::SelectionMap* map_;
  const SimConfig* cfg_;
  SimParams p_;
  bool capture_;
  Geometry geo_;

  coh::Llc llc_;
  std::vector<coh::L1> l1s_;
  std::vector<CoreState> cores_;
  std::map<std::uint64_t, ReqCtx> ctx_;
  std::uint64_t next_req_{0};

  std::priority_queue<Ev, std::vector<Ev>, EvAfter> q_;
  std::uint64_t ev_seq_{0};
  std::vector<Msg> parked_;
  std::deque<Msg> llc_q_;
  bool llc_busy_{false};

  SimMetrics met_;
  std::vector<std::string> log_;
  std::vector<char> completed_;
  std::size_t n_completed_{0};
  std::uint64_t end_{0};
};

std::string Engine::capability_error() const {
  if (!cfg_->uses_selection()) return {};
  if (map_ == nullptr)
    return "configuration " + cfg_->name + " requires a selection map";
  if (map_->per_access.size() != tr_->accesses.size())
    return "selection map covers " + std::to_string(map_->per_access.size()) +
           " accesses but the trace has " +
           std::to_string(tr_->accesses.size());
  const auto& mp = map_->profile;
  const auto& cp = cfg_->profile;
  if (mp.supports_wt_forwarding && !cp.supports_wt_forwarding)
    return "capability mismatch: map was selected with write-through "
           "forwarding but " + cfg_->name + " does not support it";
  if (mp.supports_owner_prediction && !cp.supports_owner_prediction)
    return "capability mismatch: map was selected with owner prediction but " +
           cfg_->name + " does not support it";
  if (mp.word_granularity_cpu && !cp.word_granularity_cpu)
    return "capability mismatch: word-granularity map on a line-granularity "
           "cpu profile";
  if (mp.word_granularity_gpu && !cp.word_granularity_gpu)
    return "capability mismatch: word-granularity map on a line-granularity "
           "gpu profile";
  for (const auto& sa : map_->per_access) {
    const RequestType f = sa.final_type;
    if ((f == RequestType::ReqWTfwd || f == RequestType::ReqWTfwdData) &&
        !cp.supports_wt_forwarding)
      return "capability mismatch: map contains forwarded write-throughs";
    if (is_predicted_type(f) && !cp.supports_owner_prediction)
      return "capability mismatch: map contains predicted request types";
  }
  return {};
}

int Engine::node_of(int endpoint) const {
  if (endpoint == kLlcNode) return p_.llc_node;
  return endpoint % (p_.mesh_w * p_.mesh_h);
}

int Engine::hops(int a, int b) const {
  const int na = node_of(a), nb = node_of(b);
  const int ax = na % p_.mesh_w, ay = na / p_.mesh_w;
  const int bx = nb % p_.mesh_w, by = nb / p_.mesh_w;
  return std::abs(ax - bx) + std::abs(ay - by);
}

void Engine::push(Ev ev) {
  ev.seq = ++ev_seq_;
  q_.push(ev);
}

void Engine::schedule_wake(int core, std::uint64_t t) {
  Ev ev;
  ev.t = t;
  ev.kind = Ev::Wake;
  ev.core = core;
  push(ev);
}

void Engine::send(Msg&& m, std::uint64_t t) {
  ++met_.msgs;
  met_.msgs_by_born[static_cast<std::size_t>(m.born)] += 1;
  met_.bytes += static_cast<std::uint64_t>(p_.msg_header_bytes) +
                static_cast<std::uint64_t>(p_.word_bytes) * m.values.size();
  const int h = hops(m.src, m.dst);
  met_.hops += static_cast<std::uint64_t>(h);
  if (m.kind == MsgKind::Request)
    met_.max_retry = std::max<std::uint64_t>(met_.max_retry, m.retry);
  if (capture_) {
    std::ostringstream os;
    os << "t=" << t << ' ' << coh::to_string(m.kind) << ' '
       << to_string(m.type) << " born=" << to_string(m.born) << " blk=0x"
       << std::hex << m.block << " mask=0x" << m.mask << std::dec << " src="
       << m.src << " dst=" << m.dst << " retry=" << int(m.retry)
       << " id=" << m.req_id;
    log_.push_back(os.str());
  }
  Ev ev;
  ev.t = t + static_cast<std::uint64_t>(h) *
                 static_cast<std::uint64_t>(p_.hop_cycles);
  ev.kind = Ev::Deliver;
  ev.mi = parked_.size();
  parked_.push_back(std::move(m));
  push(ev);
}

bool Engine::can_pass_acquire(std::uint64_t seq) const {
  for (const auto& o : cores_)
    if (o.rels_done < o.rel_seqs.size() && o.rel_seqs[o.rels_done] < seq)
      return false;
  return true;
}

void Engine::finish_access(CoreState& cs, std::size_t idx, std::uint64_t t) {
  assert(!completed_[idx]);
  completed_[idx] = 1;
  ++n_completed_;
  const auto& a = tr_->accesses[idx];
  if (a.has_release()) {
    ++cs.rels_done;
    for (const auto& o : cores_)
      if (o.wait == Wait::Barrier) schedule_wake(o.id, t);
  }
  if (a.has_acquire()) {
    if (cs.flavor != Flavor::Mesi) l1s_[static_cast<std::size_t>(cs.id)]
        .acquire_invalidate();
    ++cs.epoch;
  }
}

std::uint64_t Engine::issue(CoreState& cs, coh::PendingReq req,
                            const IssuePlan& pl, ReqCtx::Purpose purpose,
                            std::size_t trace_idx, std::uint32_t inst,
                            std::uint64_t t) {
  req.id = ++next_req_;
  req.born = pl.born;
  req.issued = pl.issued;
  ReqCtx ctx;
  ctx.core = cs.id;
  ctx.purpose = purpose;
  ctx.trace_idx = trace_idx;
  ctx.inst = inst;
  ctx.issue_epoch = cs.epoch;
  ctx.predicted_born = is_predicted_type(pl.born);
  ctx.first_direct = pl.direct;
  const std::uint64_t id = req.id;
  Msg m = l1s_[static_cast<std::size_t>(cs.id)].start(std::move(req));
  m.dst = pl.dst;
  ctx_.emplace(id, ctx);
  send(std::move(m), t);
  return id;
}

void Engine::predict_target(CoreState& cs, std::uint32_t inst,
                            RequestType root_fwd, IssuePlan& pl) const {
  const auto it = cs.pred.find(inst);
  if (it != cs.pred.end() && it->second != cs.id) {
    pl.dst = it->second;
    pl.direct = true;
  } else {
    pl.issued = root_fwd;  // no usable prediction: go through the LLC
  }
}

IssuePlan Engine::plan_load(const CoreState& cs, std::size_t idx,
                            const trace::MemoryAccess& a) const {
  const auto& l1 = l1s_[static_cast<std::size_t>(cs.id)];
  const coh::L1Line* ln = l1.find_line(a.addr);
  const WordMask readable = ln ? (ln->valid | ln->shared | ln->owned) : 0;
  const WordMask owned = ln ? ln->owned : 0;
  IssuePlan pl;
  switch (cs.flavor) {
    case Flavor::Mesi:
      pl.born = pl.issued = RequestType::ReqS;
      pl.mask = geo_.full_mask();
      break;
    case Flavor::DeNovo:
      pl.born = pl.issued = RequestType::ReqV;
      pl.mask = a.mask;
      break;
    case Flavor::GpuCoh:
      pl.born = pl.issued = RequestType::ReqV;
      pl.mask = geo_.full_mask();
      break;
    case Flavor::Flex: {
      const auto& sa = map_->per_access[idx];
      pl.born = pl.issued = sa.final_type;
      pl.mask = sa.mask;
      if (pl.born == RequestType::ReqVo)
        const_cast<Engine*>(this)->predict_target(
            const_cast<CoreState&>(cs), a.static_inst, RequestType::ReqV, pl);
      break;
    }
  }
  // Ownership-class fetches keep readable-but-unowned words in the mask
  // (they still need the ownership upgrade); everything else drops words the
  // cache can already read.  Words already being fetched by an outstanding
  // request are never re-requested — the load instead waits for that fill.
  if (is_ownership_type(pl.born))
    pl.mask &= ~owned;
  else
    pl.mask &= ~readable;
  pl.mask &= ~inflight_mask(cs, a.addr);
  return pl;
}

IssuePlan Engine::plan_rmw(CoreState& cs, std::size_t idx,
                           const trace::MemoryAccess& a) const {
  const auto& l1 = l1s_[static_cast<std::size_t>(cs.id)];
  const coh::L1Line* ln = l1.find_line(a.addr);
  const WordMask owned = ln ? ln->owned : 0;
  IssuePlan pl;
  switch (cs.flavor) {
    case Flavor::Mesi:
      pl.born = pl.issued = RequestType::ReqOData;
      pl.mask = geo_.full_mask() & ~owned;
      break;
    case Flavor::DeNovo:
      pl.born = pl.issued = RequestType::ReqOData;
      pl.mask = a.mask;
      break;
    case Flavor::GpuCoh:
      pl.born = pl.issued = RequestType::ReqWTData;
      pl.mask = a.mask;
      break;
    case Flavor::Flex: {
      const auto& sa = map_->per_access[idx];
      pl.born = pl.issued = sa.final_type;
      if (is_ownership_type(pl.born)) {
        pl.mask = sa.mask & ~owned;
      } else {
        pl.mask = a.mask;  // write-through atomics stay word-exact
        if (pl.born == RequestType::ReqWToData)
          predict_target(cs, a.static_inst, RequestType::ReqWTfwdData, pl);
      }
      break;
    }
  }
  return pl;
}

void Engine::plan_store(const CoreState& cs, std::size_t idx,
                        const trace::MemoryAccess& a, RequestType& final_type,
                        WordMask& fetch) const {
  switch (cs.flavor) {
    case Flavor::Mesi:
      final_type = RequestType::ReqOData;
      fetch = geo_.full_mask();
      break;
    case Flavor::DeNovo:
      final_type = RequestType::ReqO;
      fetch = a.mask;
      break;
    case Flavor::GpuCoh:
      final_type = RequestType::ReqWT;
      fetch = a.mask;
      break;
    case Flavor::Flex: {
      const auto& sa = map_->per_access[idx];
      final_type = sa.final_type;
      fetch = sa.mask;
      break;
    }
  }
}

WordMask Engine::wb_mask_of(const CoreState& cs, Addr block) const {
  WordMask m = 0;
  for (const auto& e : cs.wb)
    if (e.block == block) m |= WordMask{1} << e.word;
  return m;
}

WordMask Engine::inflight_mask(const CoreState& cs, Addr block) const {
  WordMask m = 0;
  for (const auto& p : l1s_[static_cast<std::size_t>(cs.id)].pending())
    if (p.block == block && !p.dead) m |= p.mask;
  return m;
}

// Re-examine every unfinished load: finish those whose words became readable,
// and re-fetch words whose covering request disappeared without delivering
// them (a racing revoke can strip freshly installed words).
void Engine::service_waiters(CoreState& cs, std::uint64_t t) {
  auto& l1 = l1s_[static_cast<std::size_t>(cs.id)];
  for (auto it = cs.waiters.begin(); it != cs.waiters.end();) {
    const auto& a = tr_->accesses[*it];
    if (l1.load_hit(a.addr, a.mask)) {
      finish_access(cs, *it, t);
      it = cs.waiters.erase(it);
      continue;
    }
    const coh::L1Line* ln = l1.find_line(a.addr);
    const WordMask readable = ln ? (ln->valid | ln->shared | ln->owned) : 0;
    if ((a.mask & ~readable & ~inflight_mask(cs, a.addr)) != 0) {
      const IssuePlan pl = plan_load(cs, *it, a);
      assert((a.mask & ~readable & ~inflight_mask(cs, a.addr) & ~pl.mask) ==
             0);
      coh::PendingReq r;
      r.kind = AccessKind::Load;
      r.block = a.addr;
      r.mask = pl.mask;
      issue(cs, std::move(r), pl, ReqCtx::Purpose::Load, *it, a.static_inst,
            t);
    }
    ++it;
  }
}

void Engine::wb_insert(CoreState& cs, std::size_t idx,
                       const trace::MemoryAccess& a) {
  RequestType final_type{};
  WordMask fetch = 0;
  plan_store(cs, idx, a, final_type, fetch);
  for (WordMask bits = a.mask; bits != 0; bits &= bits - 1) {
    const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
    const std::uint32_t v = value_at(a.mask, a.values, w);
    WbEntry* hit = nullptr;
    for (auto& e : cs.wb)
      if (e.block == a.addr && e.word == w) {
        hit = &e;
        break;
      }
    if (hit != nullptr) {
      hit->value = v;
      if (store_class_rank(final_type) > store_class_rank(hit->final_type))
        hit->final_type = final_type;
      hit->fetch |= fetch;
      hit->inst = a.static_inst;
    } else {
      WbEntry e;
      e.block = a.addr;
      e.word = w;
      e.value = v;
      e.final_type = final_type;
      e.fetch = fetch;
      e.inst = a.static_inst;
      cs.wb.push_back(e);
    }
  }
}

void Engine::start_drain(CoreState& cs, std::uint64_t t) {
  assert(cs.drainq.empty() && cs.awaited.empty());
  for (const auto& e : cs.wb) {
    if (is_ownership_type(e.final_type)) {
      DrainItem* grp = nullptr;
      for (auto& it : cs.drainq)
        if (it.ownership && it.block == e.block) {
          grp = &it;
          break;
        }
      if (grp == nullptr) {
        DrainItem it;
        it.ownership = true;
        it.block = e.block;
        cs.drainq.push_back(it);
        grp = &cs.drainq.back();
      }
      grp->store |= WordMask{1} << e.word;
      grp->fetch |= e.fetch;
      grp->any_odata |= e.final_type == RequestType::ReqOData;
      grp->values[e.word] = e.value;
      grp->inst = e.inst;
    } else {
      DrainItem it;
      it.block = e.block;
      it.store = WordMask{1} << e.word;
      it.values[e.word] = e.value;
      it.final_type = e.final_type;
      it.fetch = e.fetch;
      it.inst = e.inst;
      cs.drainq.push_back(it);
    }
  }
  cs.wb.clear();
  next_drain_item(cs, t);
}

// Issue the next buffered store, applying in place whatever became locally
// owned in the meantime.  The buffer drains in program order with a single
// request in flight, so each drained store can consult prediction state
// updated by the one before it.  An item touching words an outstanding fill
// is still fetching waits for that fill (retried on the next completion)
// rather than racing it with a second request for the same words.
void Engine::next_drain_item(CoreState& cs, std::uint64_t t) {
  auto& l1 = l1s_[static_cast<std::size_t>(cs.id)];
  while (!cs.drainq.empty()) {
    if (((cs.drainq.front().store | cs.drainq.front().fetch) &
         inflight_mask(cs, cs.drainq.front().block)) != 0)
      return;
    DrainItem it = std::move(cs.drainq.front());
    cs.drainq.pop_front();
    const coh::L1Line* ln = l1.find_line(it.block);
    const WordMask have = ln ? ln->owned : 0;
    if (it.ownership) {
      const WordMask now = it.store & have;
      if (now != 0) {
        std::vector<std::uint32_t> vals;
        for (WordMask bits = now; bits != 0; bits &= bits - 1)
          vals.push_back(
              it.values[static_cast<unsigned>(std::countr_zero(bits))]);
        l1.write(it.block, now, vals);
      }
      const WordMask req_store = it.store & ~have;
      if (req_store == 0) continue;
      const WordMask req_fetch = (it.fetch | it.store) & ~have;
      IssuePlan pl;
      pl.born = pl.issued =
          (req_fetch == req_store && !it.any_odata) ? RequestType::ReqO
                                                    : RequestType::ReqOData;
      pl.mask = req_fetch;
      coh::PendingReq r;
      r.kind = AccessKind::Store;
      r.block = it.block;
      r.mask = req_fetch;
      r.store_mask = req_store;
      for (WordMask bits = req_store; bits != 0; bits &= bits - 1)
        r.store_values.push_back(
            it.values[static_cast<unsigned>(std::countr_zero(bits))]);
      cs.awaited.insert(
          issue(cs, std::move(r), pl, ReqCtx::Purpose::Flush, 0, it.inst, t));
      return;
    }
    const unsigned w = static_cast<unsigned>(std::countr_zero(it.store));
    const std::uint32_t v = it.values[w];
    if ((have & it.store) != 0) {
      l1.write(it.block, it.store, {v});
      continue;
    }
    IssuePlan pl;
    pl.born = pl.issued = it.final_type;
    pl.mask = it.store;
    if (pl.born == RequestType::ReqWTo)
      predict_target(cs, it.inst, RequestType::ReqWTfwd, pl);
    coh::PendingReq r;
    r.kind = AccessKind::Store;
    r.block = it.block;
    r.mask = it.store;
    r.store_mask = it.store;
    r.store_values = {v};
    cs.awaited.insert(
        issue(cs, std::move(r), pl, ReqCtx::Purpose::Flush, 0, it.inst, t));
    return;
  }
}

bool Engine::step_load(CoreState& cs, std::size_t idx,
                       const trace::MemoryAccess& a, std::uint64_t& cur) {
  const WordMask buffered = wb_mask_of(cs, a.addr) & a.mask;
  if (buffered == a.mask) {  // youngest local values win over any cache copy
    ++met_.wb_forwards;
    cur += static_cast<std::uint64_t>(p_.l1_hit_cycles);
    finish_access(cs, idx, cur);
    return true;
  }
  if (buffered != 0) {
    start_drain(cs, cur);
    if (!cs.awaited.empty() || !cs.drainq.empty()) {
      cs.wait = Wait::Flush;
      return false;
    }
  }
  auto& l1 = l1s_[static_cast<std::size_t>(cs.id)];
  if (l1.load_hit(a.addr, a.mask)) {
    ++met_.l1_hits;
    cur += static_cast<std::uint64_t>(p_.l1_hit_cycles);
    finish_access(cs, idx, cur);
    return true;
  }
  if (cs.waiters.size() >= static_cast<std::size_t>(cs.window)) {
    cs.wait = Wait::Window;
    return false;
  }
  ++met_.l1_misses;
  const IssuePlan pl = plan_load(cs, idx, a);
  if (pl.mask != 0) {
    coh::PendingReq r;
    r.kind = AccessKind::Load;
    r.block = a.addr;
    r.mask = pl.mask;
    r.tag = idx;
    issue(cs, std::move(r), pl, ReqCtx::Purpose::Load, idx, a.static_inst,
          cur);
  }
  // Whether it sent a request or merged into an outstanding fill, the load
  // occupies a miss-window slot until its words become readable.
  cs.waiters.push_back(idx);
  cur += static_cast<std::uint64_t>(p_.l1_hit_cycles);
  return true;  // completes asynchronously within the miss window
}

bool Engine::step_store(CoreState& cs, std::size_t idx,
                        const trace::MemoryAccess& a, std::uint64_t& cur) {
  auto& l1 = l1s_[static_cast<std::size_t>(cs.id)];
  if (l1.owns(a.addr, a.mask)) {
    l1.write(a.addr, a.mask, a.values);
    ++met_.l1_hits;
  } else {
    wb_insert(cs, idx, a);
  }
  cur += static_cast<std::uint64_t>(p_.l1_hit_cycles);
  finish_access(cs, idx, cur);
  return true;
}

bool Engine::step_rmw(CoreState& cs, std::size_t idx,
                      const trace::MemoryAccess& a, std::uint64_t& cur) {
  auto& l1 = l1s_[static_cast<std::size_t>(cs.id)];
  // Atomics serialize behind every outstanding request so their ownership
  // fetch can never overlap an in-flight fill for the same words.
  if (!cs.waiters.empty() || !l1.pending().empty()) {
    cs.wait = Wait::Drain;
    return false;
  }
  if ((wb_mask_of(cs, a.addr) & a.mask) != 0) {
    start_drain(cs, cur);
    if (!cs.awaited.empty() || !cs.drainq.empty()) {
      cs.wait = Wait::Flush;
      return false;
    }
  }
  if (l1.owns(a.addr, a.mask)) {
    l1.rmw(a.addr, a.mask, a.values[0]);
    ++met_.l1_hits;
    cur += static_cast<std::uint64_t>(p_.l1_hit_cycles);
    finish_access(cs, idx, cur);
    return true;
  }
  ++met_.l1_misses;
  const IssuePlan pl = plan_rmw(cs, idx, a);
  coh::PendingReq r;
  r.kind = AccessKind::Rmw;
  r.block = a.addr;
  r.mask = pl.mask;
  r.store_mask = a.mask;
  r.rmw_addend = a.values[0];
  r.tag = idx;
  issue(cs, std::move(r), pl, ReqCtx::Purpose::Rmw, idx, a.static_inst, cur);
  cs.wait = Wait::Op;
  cs.phase = 3;
  return false;
}

void Engine::run_core(int c, std::uint64_t now) {
  CoreState& cs = cores_[static_cast<std::size_t>(c)];
  switch (cs.wait) {
    case Wait::None:
      break;
    case Wait::Barrier: {
      const auto& a = tr_->accesses[cs.accs[cs.ip]];
      if (can_pass_acquire(a.seq))
        cs.wait = Wait::None;
      else
        return;
      break;
    }
    case Wait::Flush:
      if (cs.awaited.empty() && cs.drainq.empty())
        cs.wait = Wait::None;
      else
        return;
      break;
    case Wait::Window:
      if (cs.waiters.size() < static_cast<std::size_t>(cs.window))
        cs.wait = Wait::None;
      else
        return;
      break;
    case Wait::Drain:
      if (cs.waiters.empty() &&
          l1s_[static_cast<std::size_t>(c)].pending().empty())
        cs.wait = Wait::None;
      else
        return;
      break;
    case Wait::Op:
      return;
  }
  std::uint64_t cur = std::max(cs.cur, now);
  while (cs.ip < cs.accs.size()) {
    const std::size_t idx = cs.accs[cs.ip];
    const auto& a = tr_->accesses[idx];
    if (cs.phase == 0) {
      if (a.has_acquire() && !can_pass_acquire(a.seq)) {
        cs.wait = Wait::Barrier;
        break;
      }
      cs.phase = 1;
    }
    if (cs.phase == 1) {
      if (a.has_release() && !cs.wb.empty()) {
        start_drain(cs, cur);
        if (!cs.awaited.empty() || !cs.drainq.empty()) {
          cs.wait = Wait::Flush;
          break;
        }
      }
      cs.phase = 2;
    }
    bool advanced = false;
    switch (a.kind) {
      case AccessKind::Load:
        advanced = step_load(cs, idx, a, cur);
        break;
      case AccessKind::Store:
        advanced = step_store(cs, idx, a, cur);
        break;
      case AccessKind::Rmw:
        advanced = step_rmw(cs, idx, a, cur);
        break;
    }
    if (!advanced) break;
    ++cs.ip;
    cs.phase = 0;
  }
  if (cs.ip == cs.accs.size() && cs.wait == Wait::None && !cs.wb.empty()) {
    start_drain(cs, cur);  // end-of-trace: push buffered stores to memory
    if (!cs.awaited.empty() || !cs.drainq.empty()) cs.wait = Wait::Flush;
  }
  cs.cur = cur;
  end_ = std::max(end_, cur);
}

void Engine::deliver_core(Msg&& m, std::uint64_t t) {
  const int c = m.dst;
  assert(c >= 0 && c < static_cast<int>(cores_.size()));
  const auto it = ctx_.find(m.req_id);
  if (it != ctx_.end() && it->second.core == c && m.kind != MsgKind::Request) {
    if (m.kind == MsgKind::Nack) it->second.nacked = true;
    // Last-owner predictor: any response served by a peer cache (rather than
    // the shared cache) reveals that word's owner, so record it against the
    // static instruction regardless of how this request was routed.
    if ((m.kind == MsgKind::Grant || m.kind == MsgKind::Ack) &&
        m.src != kLlcNode)
      cores_[static_cast<std::size_t>(c)].pred[it->second.inst] = m.src;
  }
  auto d = l1s_[static_cast<std::size_t>(c)].handle(std::move(m), sink(t));
  for (const std::uint64_t id : d.completed) on_complete(c, id, t);
  run_core(c, t);
}

void Engine::on_complete(int c, std::uint64_t id, std::uint64_t t) {
  const auto it = ctx_.find(id);
  assert(it != ctx_.end());
  const ReqCtx ctx = it->second;
  ctx_.erase(it);
  CoreState& cs = cores_[static_cast<std::size_t>(c)];
  if (ctx.predicted_born) {
    const bool hit = ctx.first_direct && !ctx.nacked;
    ++(hit ? met_.pred_hits : met_.pred_misses);
    const std::uint64_t key =
        (static_cast<std::uint64_t>(ctx.inst) << 32) | ctx.issue_epoch;
    ++met_.pred_by_inst_epoch[key][hit ? 0 : 1];
  }
  switch (ctx.purpose) {
    case ReqCtx::Purpose::Load:
      break;  // the waiter scan below retires whichever loads became ready
    case ReqCtx::Purpose::Rmw:
      assert(cs.wait == Wait::Op && cs.phase == 3);
      finish_access(cs, ctx.trace_idx, t);
      cs.wait = Wait::None;
      cs.phase = 0;
      ++cs.ip;
      break;
    case ReqCtx::Purpose::Flush:
      cs.awaited.erase(id);
      break;
  }
  service_waiters(cs, t);
  if (cs.awaited.empty() && !cs.drainq.empty()) next_drain_item(cs, t);
}

std::map<Addr, std::uint32_t> Engine::build_image() const {
  std::map<Addr, std::uint32_t> img;
  for (const auto& [blk, ln] : llc_.lines()) {
    for (unsigned w = 0; w < geo_.words_per_block(); ++w) {
      const int o = ln.owner[w];
      std::uint32_t v;
      if (o != kLlcNode) {
        const coh::L1Line* l =
            l1s_[static_cast<std::size_t>(o)].find_line(blk);
        assert(l != nullptr && ((l->owned >> w) & 1) != 0);
        v = l->data[w];
      } else {
        v = ln.data[w];
      }
      img[blk + Addr{w} * geo_.word_size] = v;
    }
  }
  return img;
}

std::string Engine::diagnose() const {
  std::ostringstream os;
  os << "simulation stalled: ";
  for (const auto& cs : cores_) {
    if (cs.ip == cs.accs.size() && cs.wait == Wait::None && cs.wb.empty())
      continue;
    os << "[core " << cs.id << " ip=" << cs.ip << '/' << cs.accs.size()
       << " wait=" << static_cast<int>(cs.wait) << " phase=" << cs.phase
       << " waiters=" << cs.waiters.size() << " wb=" << cs.wb.size()
       << " drainq=" << cs.drainq.size() << " awaited=" << cs.awaited.size()
       << "] ";
  }
  os << "completed " << n_completed_ << '/' << tr_->accesses.size();
  return os.str();
}

SimResult Engine::run() {
  SimResult res;
  if (auto err = capability_error(); !err.empty()) {
    res.error = std::move(err);
    return res;
  }
  for (const auto& a : tr_->accesses) {
    if (a.kind == AccessKind::Rmw && std::popcount(a.mask) != 1) {
      res.error = "multi-word atomic accesses are not supported";
      return res;
    }
  }

  const int n = tr_->hdr.n_cores();
  cores_.resize(static_cast<std::size_t>(n));
  l1s_.reserve(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    l1s_.emplace_back(geo_, c, p_.retry_cap);
    CoreState& cs = cores_[static_cast<std::size_t>(c)];
    cs.id = c;
    cs.dev = tr_->device_of(c);
    cs.flavor = cs.dev == DeviceClass::Cpu ? cfg_->cpu : cfg_->gpu;
    cs.window =
        cs.dev == DeviceClass::Cpu ? p_.cpu_load_window : p_.gpu_load_window;
  }
  completed_.assign(tr_->accesses.size(), 0);
  for (std::size_t i = 0; i < tr_->accesses.size(); ++i) {
    const auto& a = tr_->accesses[i];
    auto& cs = cores_[static_cast<std::size_t>(a.core)];
    cs.accs.push_back(i);
    if (a.has_release()) cs.rel_seqs.push_back(a.seq);
  }

  for (int c = 0; c < n; ++c) schedule_wake(c, 0);
  while (!q_.empty()) {
    const Ev ev = q_.top();
    q_.pop();
    end_ = std::max(end_, ev.t);
    switch (ev.kind) {
      case Ev::Wake:
        run_core(ev.core, ev.t);
        break;
      case Ev::Deliver: {
        Msg m = std::move(parked_[ev.mi]);
        if (m.dst == kLlcNode) {
          llc_q_.push_back(std::move(m));
          if (!llc_busy_) {
            llc_busy_ = true;
            Ev step;
            step.t = ev.t + static_cast<std::uint64_t>(p_.llc_service_cycles);
            step.kind = Ev::LlcStep;
            push(step);
          }
        } else {
          deliver_core(std::move(m), ev.t);
        }
        break;
      }
      case Ev::LlcStep: {
        Msg m = std::move(llc_q_.front());
        llc_q_.pop_front();
        if (m.kind == MsgKind::Request) {
          const auto it = ctx_.find(m.req_id);
          if (it != ctx_.end()) ++met_.llc_lookups_by_inst[it->second.inst];
        }
        llc_.handle(std::move(m), sink(ev.t));
        if (!llc_q_.empty()) {
          Ev step;
          step.t = ev.t + static_cast<std::uint64_t>(p_.llc_service_cycles);
          step.kind = Ev::LlcStep;
          push(step);
        } else {
          llc_busy_ = false;
        }
        break;
      }
    }
  }

  bool done = n_completed_ == tr_->accesses.size() && llc_q_.empty();
  for (const auto& cs : cores_)
    done = done && cs.ip == cs.accs.size() && cs.wait == Wait::None &&
           cs.waiters.empty() && cs.wb.empty() && cs.awaited.empty() &&
           cs.drainq.empty();
  met_.cycles = end_;
  met_.llc_lookups_by_born = llc_.stats().lookups_by_born;
  met_.rmws_applied = llc_.stats().rmws_applied;
  for (const auto& l1 : l1s_) {
    met_.nacks += l1.nacks_seen();
    met_.rmws_applied += l1.rmws_applied();
  }
  res.metrics = met_;
  res.msglog = std::move(log_);
  if (!done) {
    res.error = diagnose();
    return res;
  }
  res.image = build_image();
  res.ok = true;
  return res;
}

}  // namespace

const char* to_string(Flavor f) {
  switch (f) {
    case Flavor::Mesi: return "mesi";
    case Flavor::DeNovo: return "denovo";
    case Flavor::GpuCoh: return "gpucoh";
    case Flavor::Flex: return "flex";
  }
  return "?";
}

std::vector<SimConfig> standard_configs() {
  const auto prof = [](bool fwd, bool pred, bool wg_cpu, bool wg_gpu) {
    sel::HardwareProfile p;
    p.supports_wt_forwarding = fwd;
    p.supports_owner_prediction = pred;
    p.word_granularity_cpu = wg_cpu;
    p.word_granularity_gpu = wg_gpu;
    return p;
  };
  return {
      {"SMG", Flavor::Mesi, Flavor::GpuCoh, prof(false, false, false, true)},
      {"SMD", Flavor::Mesi, Flavor::DeNovo, prof(false, false, false, true)},
      {"SDG", Flavor::DeNovo, Flavor::GpuCoh, prof(false, false, true, true)},
      {"SDD", Flavor::DeNovo, Flavor::DeNovo, prof(false, false, true, true)},
      {"FCS", Flavor::Flex, Flavor::Flex, prof(false, false, true, true)},
      {"FCS+fwd", Flavor::Flex, Flavor::Flex, prof(true, false, true, true)},
      {"FCS+pred", Flavor::Flex, Flavor::Flex, prof(true, true, true, true)},
  };
}

const SimConfig* find_config(const std::vector<SimConfig>& v,
                             const std::string& name) {
  for (const auto& c : v)
    if (c.name == name) return &c;
  return nullptr;
}

SimResult simulate(const trace::AccessTrace& t, const sel::SelectionMap* map,
                   const SimConfig& cfg, const SimParams& params,
                   bool capture_msglog) {
  Engine eng(t, map, cfg, params, capture_msglog);
  return eng.run();
}

std::map<Addr, std::uint32_t> sc_reference_execute(
    const trace::AccessTrace& t) {
  std::map<Addr, std::uint32_t> img;
  for (const auto& a : t.accesses) {
    if (a.kind == AccessKind::Load) continue;
    for (WordMask bits = a.mask; bits != 0; bits &= bits - 1) {
      const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
      const Addr addr = a.addr + Addr{w} * t.hdr.geo.word_size;
      const std::uint32_t v = value_at(a.mask, a.values, w);
      if (a.kind == AccessKind::Store)
        img[addr] = v;
      else
        img[addr] += v;
    }
  }
  return img;
}

std::uint64_t count_rmw_accesses(const trace::AccessTrace& t) {
  std::uint64_t n = 0;
  for (const auto& a : t.accesses)
    if (a.kind == AccessKind::Rmw) ++n;
  return n;
}

std::string compare_images(const std::map<Addr, std::uint32_t>& expect,
                           const std::map<Addr, std::uint32_t>& got) {
  const auto value = [](const std::map<Addr, std::uint32_t>& m, Addr a) {
    const auto it = m.find(a);
    return it == m.end() ? std::uint32_t{0} : it->second;
  };
  for (const auto& [a, v] : expect) {
    if (value(got, a) != v) {
      std::ostringstream os;
      os << "word 0x" << std::hex << a << std::dec << ": expected " << v
         << ", got " << value(got, a);
      return os.str();
    }
  }
  for (const auto& [a, v] : got) {
    if (value(expect, a) != v) {
      std::ostringstream os;
      os << "word 0x" << std::hex << a << std::dec << ": expected "
         << value(expect, a) << ", got " << v;
      return os.str();
    }
  }
  return {};
}

}  // namespace fcssim::sim
