#include "fcssim/coherence.hpp"

#include <algorithm>
#include <bit>
#include <cassert>

namespace fcssim::coh {

namespace {

int bit_index(WordMask mask, unsigned w) {
  return std::popcount(mask & ((WordMask{1} << w) - 1));
}

std::uint32_t value_at(WordMask mask, const std::vector<std::uint32_t>& vals,
                       unsigned w) {
  return vals[static_cast<std::size_t>(bit_index(mask, w))];
}

// Data for the set bits of `mask`, read from a per-word line buffer.
std::vector<std::uint32_t> gather(WordMask mask,
                                  const std::vector<std::uint32_t>& words) {
  std::vector<std::uint32_t> out;
  out.reserve(static_cast<std::size_t>(std::popcount(mask)));
  for (WordMask bits = mask; bits != 0; bits &= bits - 1)
    out.push_back(words[static_cast<unsigned>(std::countr_zero(bits))]);
  return out;
}

// Restriction of a mask-aligned value vector to a sub-mask.
std::vector<std::uint32_t> subset(WordMask mask,
                                  const std::vector<std::uint32_t>& vals,
                                  WordMask sub) {
  std::vector<std::uint32_t> out;
  out.reserve(static_cast<std::size_t>(std::popcount(sub)));
  for (WordMask bits = sub; bits != 0; bits &= bits - 1)
    out.push_back(value_at(mask, vals, static_cast<unsigned>(std::countr_zero(bits))));
  return out;
}

bool read_serve_class(RequestType t) {
  return t == RequestType::ReqV || t == RequestType::ReqVo;
}

bool ownership_issue(RequestType t) {
  return t == RequestType::ReqO || t == RequestType::ReqOData;
}

// Owner cores for the set words, each with its sub-mask.
std::vector<std::pair<int, WordMask>> by_owner(const LlcLine& ln, WordMask m) {
  std::vector<std::pair<int, WordMask>> groups;
  for (WordMask bits = m; bits != 0; bits &= bits - 1) {
    const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
    const int o = ln.owner[w];
    auto it = std::find_if(groups.begin(), groups.end(),
                           [o](const auto& g) { return g.first == o; });
    if (it == groups.end())
      groups.push_back({o, WordMask{1} << w});
    else
      it->second |= WordMask{1} << w;
  }
  return groups;
}

}  // namespace

const char* to_string(MsgKind k) {
  switch (k) {
    case MsgKind::Request: return "Request";
    case MsgKind::Grant: return "Grant";
    case MsgKind::Ack: return "Ack";
    case MsgKind::Nack: return "Nack";
    case MsgKind::Inv: return "Inv";
    case MsgKind::Revoke: return "Revoke";
    case MsgKind::InvAck: return "InvAck";
    case MsgKind::RevokeAck: return "RevokeAck";
    case MsgKind::RecallResp: return "RecallResp";
  }
  return "?";
}

RequestType retry_issue_type(RequestType born, int attempt, int retry_cap) {
  if (attempt < retry_cap) {
    switch (born) {
      case RequestType::ReqVo: return RequestType::ReqV;
      case RequestType::ReqWTo: return RequestType::ReqWTfwd;
      case RequestType::ReqWToData: return RequestType::ReqWTfwdData;
      default: return born;
    }
  }
  switch (born) {
    case RequestType::ReqV:
    case RequestType::ReqVo:
      return RequestType::ReqV;  // served by recall at the directory
    case RequestType::ReqWTo:
    case RequestType::ReqWTfwd:
      return RequestType::ReqWT;
    case RequestType::ReqWToData:
    case RequestType::ReqWTfwdData:
      return RequestType::ReqWTData;
    default:
      return born;
  }
}

// --------------------------------------------------------------------------
// LLC
// --------------------------------------------------------------------------

LlcLine& Llc::line(Addr block) {
  auto [it, fresh] = lines_.try_emplace(block);
  if (fresh) {
    it->second.owner.assign(geo_.words_per_block(), kLlcNode);
    it->second.data.assign(geo_.words_per_block(), 0);
  }
  return it->second;
}

std::uint32_t Llc::home_value(Addr word_addr) const {
  const auto it = lines_.find(geo_.block_of(word_addr));
  if (it == lines_.end()) return 0;
  return it->second.data[geo_.word_index(word_addr)];
}

void Llc::handle(Msg&& m, const Sink& out) {
  if (m.kind == MsgKind::Request) {
    ++stats_.lookups_by_born[static_cast<std::size_t>(m.born)];
    LlcLine& ln = line(m.block);
    if (ln.trans.active) {
      ln.waiting.push_back(std::move(m));
      return;
    }
    process(std::move(m), out);
    return;
  }
  LlcLine& ln = line(m.block);
  assert(ln.trans.active);
  if (m.kind == MsgKind::RecallResp) {
    for (WordMask bits = m.mask; bits != 0; bits &= bits - 1) {
      const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
      ln.data[w] = value_at(m.mask, m.values, w);
      ln.owner[w] = kLlcNode;
    }
    ln.remote &= ~m.mask;
    ln.trans.await_recall &= ~m.mask;
  } else if (m.kind == MsgKind::InvAck) {
    --ln.trans.await_invacks;
  } else {
    assert(false && "unexpected message at the directory");
  }
  if (ln.trans.await_recall == 0 && ln.trans.await_invacks == 0)
    finish_transient(ln, out);
}

void Llc::process(Msg&& m, const Sink& out) {
  LlcLine& ln = line(m.block);
  assert(!is_predicted_type(m.type));
  const WordMask remote_req = m.mask & ln.remote;

  if (m.type == RequestType::ReqV) {
    if (m.retry >= static_cast<std::uint8_t>(retry_cap_) && remote_req != 0) {
      // Final attempt: recall the owned words home, then serve from here.
      ln.trans.active = true;
      ln.trans.await_recall = remote_req;
      ln.trans.await_invacks = 0;
      ln.trans.origin = m;
      for (const auto& [o, sub] : by_owner(ln, remote_req)) {
        Msg r;
        r.kind = MsgKind::Revoke;
        r.born = m.born;
        r.block = m.block;
        r.mask = sub;
        r.src = kLlcNode;
        r.dst = o;
        r.ack_to = kLlcNode;
        r.keep_copy = true;
        r.requestor = m.requestor;
        r.req_id = m.req_id;
        out(std::move(r));
      }
      return;
    }
    const WordMask home = m.mask & ~ln.remote;
    if (home != 0) {
      Msg g;
      g.kind = MsgKind::Grant;
      g.type = m.type;
      g.born = m.born;
      g.block = m.block;
      g.mask = home;
      g.values = gather(home, ln.data);
      g.src = kLlcNode;
      g.dst = m.requestor;
      g.requestor = m.requestor;
      g.req_id = m.req_id;
      out(std::move(g));
    }
    for (const auto& [o, sub] : by_owner(ln, remote_req)) {
      assert(o != m.requestor && "cores do not request words they own");
      Msg f = m;
      f.mask = sub;
      f.values.clear();
      f.src = kLlcNode;
      f.dst = o;
      f.forwarded = true;
      out(std::move(f));
    }
    return;
  }

  if (m.type == RequestType::ReqS) {
    if (remote_req != 0) {
      ln.trans.active = true;
      ln.trans.await_recall = remote_req;
      ln.trans.await_invacks = 0;
      ln.trans.origin = m;
      for (const auto& [o, sub] : by_owner(ln, remote_req)) {
        Msg r;
        r.kind = MsgKind::Revoke;
        r.born = m.born;
        r.block = m.block;
        r.mask = sub;
        r.src = kLlcNode;
        r.dst = o;
        r.ack_to = kLlcNode;
        r.keep_copy = true;
        r.requestor = m.requestor;
        r.req_id = m.req_id;
        out(std::move(r));
      }
      return;
    }
    apply_ready(ln, std::move(m), out);
    return;
  }

  if (ownership_issue(m.type)) {
    int acks = 0;
    for (const int s : ln.sharers) {
      if (s == m.requestor) continue;
      if (fault_.skip_sharer_invalidate) continue;
      Msg inv;
      inv.kind = MsgKind::Inv;
      inv.born = m.born;
      inv.block = m.block;
      inv.src = kLlcNode;
      inv.dst = s;
      inv.ack_to = m.requestor;
      inv.requestor = m.requestor;
      inv.req_id = m.req_id;
      out(std::move(inv));
      ++acks;
    }
    ln.sharers.clear();
    for (const auto& [o, sub] : by_owner(ln, remote_req)) {
      assert(o != m.requestor && "cores do not request words they own");
      if (fault_.skip_owner_revoke) continue;
      Msg r;
      r.kind = MsgKind::Revoke;
      r.born = m.born;
      r.block = m.block;
      r.mask = sub;
      r.src = kLlcNode;
      r.dst = o;
      r.ack_to = m.requestor;
      r.keep_copy = false;
      r.requestor = m.requestor;
      r.req_id = m.req_id;
      out(std::move(r));
      ++acks;
    }
    // The injected bug grants remotely owned words from the stale home copy.
    const WordMask home =
        fault_.skip_owner_revoke ? m.mask : m.mask & ~ln.remote;
    Msg g;
    g.kind = MsgKind::Grant;
    g.type = m.type;
    g.born = m.born;
    g.block = m.block;
    g.mask = home;
    if (m.type == RequestType::ReqOData) g.values = gather(home, ln.data);
    g.src = kLlcNode;
    g.dst = m.requestor;
    g.requestor = m.requestor;
    g.acks_expected = acks;
    g.req_id = m.req_id;
    out(std::move(g));
    for (WordMask bits = m.mask; bits != 0; bits &= bits - 1)
      ln.owner[static_cast<unsigned>(std::countr_zero(bits))] = m.requestor;
    ln.remote |= m.mask;
    return;
  }

  // Write-through family.  Forwarding variants relay the remotely owned part
  // untouched; everything else (and the at-home part) completes here, after
  // recalling owners and invalidating stale sharers as needed.
  assert(is_wt_type(m.type));
  WordMask recall = 0;
  Msg home_req = m;
  if (m.type == RequestType::ReqWTfwd || m.type == RequestType::ReqWTfwdData) {
    for (const auto& [o, sub] : by_owner(ln, remote_req)) {
      assert(o != m.requestor);
      Msg f = m;
      f.mask = sub;
      f.values = subset(m.mask, m.values, sub);
      f.src = kLlcNode;
      f.dst = o;
      f.forwarded = true;
      out(std::move(f));
    }
    home_req.mask = m.mask & ~ln.remote;
    if (home_req.mask == 0) return;
    home_req.values = subset(m.mask, m.values, home_req.mask);
  } else {
    recall = remote_req;
  }

  int invs = 0;
  for (auto it = ln.sharers.begin(); it != ln.sharers.end();) {
    const int s = *it;
    if (s == m.requestor) {
      ++it;
      continue;
    }
    it = ln.sharers.erase(it);
    if (fault_.skip_sharer_invalidate) continue;
    Msg inv;
    inv.kind = MsgKind::Inv;
    inv.born = m.born;
    inv.block = m.block;
    inv.src = kLlcNode;
    inv.dst = s;
    inv.ack_to = kLlcNode;
    inv.requestor = m.requestor;
    inv.req_id = m.req_id;
    out(std::move(inv));
    ++invs;
  }

  if (recall != 0 || invs != 0) {
    ln.trans.active = true;
    ln.trans.await_recall = recall;
    ln.trans.await_invacks = invs;
    ln.trans.origin = std::move(home_req);
    for (const auto& [o, sub] : by_owner(ln, recall)) {
      Msg r;
      r.kind = MsgKind::Revoke;
      r.born = m.born;
      r.block = m.block;
      r.mask = sub;
      r.src = kLlcNode;
      r.dst = o;
      r.ack_to = kLlcNode;
      r.keep_copy = false;
      r.requestor = m.requestor;
      r.req_id = m.req_id;
      out(std::move(r));
    }
    return;
  }
  apply_ready(ln, std::move(home_req), out);
}

void Llc::apply_ready(LlcLine& ln, Msg&& req, const Sink& out) {
  Msg resp;
  resp.type = req.type;
  resp.born = req.born;
  resp.block = req.block;
  resp.mask = req.mask;
  resp.src = kLlcNode;
  resp.dst = req.requestor;
  resp.requestor = req.requestor;
  resp.req_id = req.req_id;

  switch (req.type) {
    case RequestType::ReqV:  // post-recall serve; no sharer registration
      resp.kind = MsgKind::Grant;
      resp.values = gather(req.mask, ln.data);
      break;
    case RequestType::ReqS:
      ln.sharers.insert(req.requestor);
      resp.kind = MsgKind::Grant;
      resp.values = gather(req.mask, ln.data);
      break;
    case RequestType::ReqWT:
    case RequestType::ReqWTfwd:
      for (WordMask bits = req.mask; bits != 0; bits &= bits - 1) {
        const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
        ln.data[w] = value_at(req.mask, req.values, w);
      }
      resp.kind = MsgKind::Ack;
      break;
    case RequestType::ReqWTData:
    case RequestType::ReqWTfwdData: {
      std::vector<std::uint32_t> olds;
      for (WordMask bits = req.mask; bits != 0; bits &= bits - 1) {
        const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
        olds.push_back(ln.data[w]);
        ln.data[w] += value_at(req.mask, req.values, w);
        ++stats_.rmws_applied;
      }
      resp.kind = MsgKind::Grant;
      resp.values = std::move(olds);
      break;
    }
    default:
      assert(false && "ownership requests never wait in a transient");
      return;
  }
  out(std::move(resp));
}

void Llc::finish_transient(LlcLine& ln, const Sink& out) {
  Msg req = std::move(ln.trans.origin);
  ln.trans = LlcTransient{};
  apply_ready(ln, std::move(req), out);
  drain(ln, out);
}

void Llc::drain(LlcLine& ln, const Sink& out) {
  while (!ln.trans.active && !ln.waiting.empty()) {
    Msg next = std::move(ln.waiting.front());
    ln.waiting.pop_front();
    process(std::move(next), out);
  }
}

// --------------------------------------------------------------------------
// L1
// --------------------------------------------------------------------------

L1Line& L1::line(Addr block) {
  auto [it, fresh] = lines_.try_emplace(block);
  if (fresh) it->second.data.assign(geo_.words_per_block(), 0);
  return it->second;
}

const L1Line* L1::find_line(Addr block) const {
  const auto it = lines_.find(block);
  return it == lines_.end() ? nullptr : &it->second;
}

bool L1::load_hit(Addr block, WordMask mask) const {
  const L1Line* ln = find_line(block);
  if (ln == nullptr) return mask == 0;
  return (mask & ~(ln->valid | ln->shared | ln->owned)) == 0;
}

void L1::read(Addr block, WordMask mask, std::vector<std::uint32_t>& out) const {
  const L1Line* ln = find_line(block);
  assert(ln != nullptr);
  out = gather(mask, ln->data);
}

bool L1::owns(Addr block, WordMask mask) const {
  const L1Line* ln = find_line(block);
  return ln != nullptr && (mask & ~ln->owned) == 0;
}

void L1::write(Addr block, WordMask mask, const std::vector<std::uint32_t>& v) {
  L1Line& ln = line(block);
  for (WordMask bits = mask; bits != 0; bits &= bits - 1) {
    const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
    ln.data[w] = value_at(mask, v, w);
  }
}

std::uint32_t L1::rmw(Addr block, WordMask mask, std::uint32_t addend) {
  assert(std::popcount(mask) == 1);
  L1Line& ln = line(block);
  const unsigned w = static_cast<unsigned>(std::countr_zero(mask));
  const std::uint32_t old = ln.data[w];
  ln.data[w] = old + addend;
  ++rmws_applied_;
  return old;
}

void L1::acquire_invalidate() {
  for (auto& [blk, ln] : lines_) ln.valid = 0;
}

Msg L1::start(PendingReq req) {
  assert(req.mask != 0);
  if (req.issued == RequestType::ReqO) assert(req.mask == req.store_mask);
  req.gathered.assign(static_cast<std::size_t>(std::popcount(req.mask)), 0);
  Msg m;
  m.kind = MsgKind::Request;
  m.type = req.issued;
  m.born = req.born;
  m.block = req.block;
  m.mask = req.mask;
  if (is_wt_type(req.issued)) {
    if (req.kind == AccessKind::Rmw) {
      assert(std::popcount(req.mask) == 1);
      m.values = {req.rmw_addend};
    } else {
      assert(req.mask == req.store_mask);
      m.values = req.store_values;
    }
  }
  m.src = core_;
  m.dst = kLlcNode;
  m.requestor = core_;
  m.retry = req.retry;
  m.req_id = req.id;
  pending_.push_back(std::move(req));
  return m;
}

const PendingReq* L1::find_pending(std::uint64_t id) const {
  for (const auto& p : pending_)
    if (p.id == id) return &p;
  return nullptr;
}

WordMask L1::vulnerable_mask(Addr block) const {
  WordMask vm = 0;
  for (const auto& p : pending_)
    if (ownership_issue(p.issued) && p.block == block && !p.installed && !p.dead)
      vm |= p.mask;
  return vm;
}

L1Delivery L1::handle(Msg&& m, const Sink& out) {
  L1Delivery d;
  switch (m.kind) {
    case MsgKind::Request:
      serve_or_refuse(std::move(m), out);
      break;
    case MsgKind::Inv: {
      // Invalidations touch only unowned copies, so they always apply.
      L1Line& ln = line(m.block);
      ln.valid = 0;
      ln.shared = 0;
      Msg ack;
      ack.kind = MsgKind::InvAck;
      ack.born = m.born;
      ack.block = m.block;
      ack.src = core_;
      ack.dst = m.ack_to;
      ack.requestor = m.requestor;
      ack.req_id = m.req_id;
      out(std::move(ack));
      break;
    }
    case MsgKind::Revoke:
      if ((m.mask & vulnerable_mask(m.block)) != 0)
        deferred_.push_back(std::move(m));
      else
        apply_revoke(std::move(m), out);
      break;
    default:
      on_response(std::move(m), d, out);
      break;
  }
  drain_deferred(out);
  return d;
}

void L1::apply_revoke(Msg&& m, const Sink& out) {
  L1Line& ln = line(m.block);
  const WordMask take = m.mask & ln.owned;
  assert(take == m.mask && "revoked words must be held owned");
  Msg ack;
  ack.born = m.born;
  ack.block = m.block;
  ack.mask = take;
  ack.values = gather(take, ln.data);
  ack.src = core_;
  ack.requestor = m.requestor;
  ack.req_id = m.req_id;
  ln.owned &= ~take;
  if (m.keep_copy) {
    ln.valid |= take;
  } else {
    ln.valid &= ~take;
    ln.shared &= ~take;
  }
  if (m.ack_to == kLlcNode) {
    ack.kind = MsgKind::RecallResp;
    ack.dst = kLlcNode;
  } else {
    ack.kind = MsgKind::RevokeAck;
    ack.dst = m.ack_to;
  }
  out(std::move(ack));
}

void L1::serve_or_refuse(Msg&& m, const Sink& out) {
  L1Line* ln = nullptr;
  {
    const auto it = lines_.find(m.block);
    if (it != lines_.end()) ln = &it->second;
  }
  const WordMask owned = ln != nullptr ? ln->owned : 0;
  const bool can = (m.mask & ~owned) == 0;
  if (!can) {
    if (defer_requests_ && (m.mask & vulnerable_mask(m.block)) != 0) {
      deferred_.push_back(std::move(m));
      return;
    }
    Msg n;
    n.kind = MsgKind::Nack;
    n.type = m.type;
    n.born = m.born;
    n.block = m.block;
    n.mask = m.mask;
    n.src = core_;
    n.dst = m.requestor;
    n.requestor = m.requestor;
    n.req_id = m.req_id;
    out(std::move(n));
    return;
  }

  Msg resp;
  resp.type = m.type;
  resp.born = m.born;
  resp.block = m.block;
  resp.src = core_;
  resp.dst = m.requestor;
  resp.requestor = m.requestor;
  resp.req_id = m.req_id;
  if (read_serve_class(m.type)) {
    // A read served by the owner returns exactly the requested words.
    resp.kind = MsgKind::Grant;
    resp.mask = m.mask;
    resp.values = gather(m.mask, ln->data);
  } else if (is_data_variant(m.type)) {
    std::vector<std::uint32_t> olds;
    for (WordMask bits = m.mask; bits != 0; bits &= bits - 1) {
      const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
      olds.push_back(ln->data[w]);
      ln->data[w] += value_at(m.mask, m.values, w);
      ++rmws_applied_;
    }
    resp.kind = MsgKind::Grant;
    resp.mask = m.mask;
    resp.values = std::move(olds);
  } else {
    for (WordMask bits = m.mask; bits != 0; bits &= bits - 1) {
      const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
      ln->data[w] = value_at(m.mask, m.values, w);
    }
    resp.kind = MsgKind::Ack;
    resp.mask = m.mask;
  }
  out(std::move(resp));
}

void L1::on_response(Msg&& m, L1Delivery& d, const Sink& out) {
  std::size_t idx = pending_.size();
  for (std::size_t i = 0; i < pending_.size(); ++i)
    if (pending_[i].id == m.req_id) {
      idx = i;
      break;
    }
  if (idx == pending_.size()) return;  // stale response
  PendingReq& p = pending_[idx];

  switch (m.kind) {
    case MsgKind::Grant: {
      p.grant_seen = true;
      if (m.acks_expected >= 0) p.acks_expected = m.acks_expected;
      const WordMask take = m.mask & p.mask & ~p.data_got;
      if (!m.values.empty()) {
        for (WordMask bits = take; bits != 0; bits &= bits - 1) {
          const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
          p.gathered[static_cast<std::size_t>(bit_index(p.mask, w))] =
              value_at(m.mask, m.values, w);
        }
      }
      p.data_got |= take;
      if (p.kind == AccessKind::Rmw && is_wt_type(p.issued) &&
          !m.values.empty() && take != 0)
        p.load_value = value_at(m.mask, m.values,
                                static_cast<unsigned>(std::countr_zero(take)));
      // Bonus words beyond the request install as Valid immediately.
      const WordMask extra = m.mask & ~p.mask;
      if (extra != 0 && !m.values.empty()) {
        L1Line& ln = line(m.block);
        const WordMask add = extra & ~(ln.owned | ln.shared);
        for (WordMask bits = add; bits != 0; bits &= bits - 1) {
          const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
          ln.data[w] = value_at(m.mask, m.values, w);
        }
        ln.valid |= add;
      }
      break;
    }
    case MsgKind::Ack:
      p.data_got |= m.mask & p.mask;
      break;
    case MsgKind::RevokeAck: {
      const WordMask take = m.mask & p.mask & ~p.data_got;
      for (WordMask bits = take; bits != 0; bits &= bits - 1) {
        const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
        p.gathered[static_cast<std::size_t>(bit_index(p.mask, w))] =
            value_at(m.mask, m.values, w);
      }
      p.data_got |= take;
      ++p.acks_got;
      break;
    }
    case MsgKind::InvAck:
      ++p.acks_got;
      break;
    case MsgKind::Nack: {
      ++nacks_seen_;
      p.nacked_once = true;
      if (fault_.drop_nack_retry) {
        p.dead = true;
        break;
      }
      ++p.retry;
      p.issued = retry_issue_type(p.born, p.retry, retry_cap_);
      Msg r;
      r.kind = MsgKind::Request;
      r.type = p.issued;
      r.born = p.born;
      r.block = p.block;
      r.mask = p.mask & ~p.data_got;
      if (is_wt_type(p.issued)) {
        if (p.kind == AccessKind::Rmw)
          r.values = {p.rmw_addend};
        else
          r.values = subset(p.store_mask, p.store_values, r.mask);
      }
      r.src = core_;
      r.dst = kLlcNode;
      r.requestor = core_;
      r.retry = p.retry;
      r.req_id = p.id;
      out(std::move(r));
      break;
    }
    default:
      assert(false && "unexpected message at a core");
      break;
  }

  check_progress(p, d);
  // Erase completed entries (check_progress recorded their ids).
  pending_.erase(std::remove_if(pending_.begin(), pending_.end(),
                                [&d](const PendingReq& q) {
                                  return std::find(d.completed.begin(),
                                                   d.completed.end(),
                                                   q.id) != d.completed.end();
                                }),
                 pending_.end());
}

void L1::check_progress(PendingReq& p, L1Delivery& d) {
  if (p.dead) return;
  const bool data_done = (p.mask & ~p.data_got) == 0;
  if (data_done && !p.installed) install(p);
  const bool needs_acks = ownership_issue(p.issued);
  const bool acks_done =
      !needs_acks ||
      (p.grant_seen && p.acks_expected >= 0 && p.acks_got >= p.acks_expected);
  if (data_done && acks_done) d.completed.push_back(p.id);
}

void L1::install(PendingReq& p) {
  p.installed = true;
  L1Line& ln = line(p.block);
  switch (p.issued) {
    case RequestType::ReqV:
    case RequestType::ReqVo: {
      const WordMask add = p.mask & ~ln.owned;
      for (WordMask bits = add; bits != 0; bits &= bits - 1) {
        const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
        ln.data[w] = p.gathered[static_cast<std::size_t>(bit_index(p.mask, w))];
      }
      ln.valid |= add & ~ln.shared;
      break;
    }
    case RequestType::ReqS: {
      const WordMask add = p.mask & ~ln.owned;
      for (WordMask bits = add; bits != 0; bits &= bits - 1) {
        const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
        ln.data[w] = p.gathered[static_cast<std::size_t>(bit_index(p.mask, w))];
      }
      ln.shared |= add;
      ln.valid &= ~add;
      break;
    }
    case RequestType::ReqO:
    case RequestType::ReqOData: {
      ln.owned |= p.mask;
      ln.valid &= ~p.mask;
      ln.shared &= ~p.mask;
      for (WordMask bits = p.mask; bits != 0; bits &= bits - 1) {
        const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
        ln.data[w] = p.gathered[static_cast<std::size_t>(bit_index(p.mask, w))];
      }
      if (p.kind == AccessKind::Rmw) {
        assert(std::popcount(p.store_mask) == 1);
        const unsigned w = static_cast<unsigned>(std::countr_zero(p.store_mask));
        p.load_value = ln.data[w];
        ln.data[w] += p.rmw_addend;
        ++rmws_applied_;
      } else if (p.store_mask != 0) {
        for (WordMask bits = p.store_mask; bits != 0; bits &= bits - 1) {
          const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
          ln.data[w] =
              p.store_values[static_cast<std::size_t>(bit_index(p.store_mask, w))];
        }
      }
      break;
    }
    default: {
      // Write-through family: the write landed remotely; refresh any local
      // readable copy so it does not go stale.
      assert(is_wt_type(p.issued));
      const WordMask present = p.store_mask & (ln.valid | ln.shared);
      for (WordMask bits = present; bits != 0; bits &= bits - 1) {
        const unsigned w = static_cast<unsigned>(std::countr_zero(bits));
        if (p.kind == AccessKind::Rmw)
          ln.data[w] = p.load_value + p.rmw_addend;
        else
          ln.data[w] =
              p.store_values[static_cast<std::size_t>(bit_index(p.store_mask, w))];
      }
      break;
    }
  }
}

void L1::drain_deferred(const Sink& out) {
  if (deferred_.empty()) return;
  std::deque<Msg> q;
  q.swap(deferred_);
  for (auto& m : q) {
    if (m.kind == MsgKind::Revoke) {
      if ((m.mask & vulnerable_mask(m.block)) != 0)
        deferred_.push_back(std::move(m));
      else
        apply_revoke(std::move(m), out);
    } else {
      serve_or_refuse(std::move(m), out);
    }
  }
}

}  // namespace fcssim::coh
