#include "fcssim/selector.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace fcssim::sel {

namespace {

bool same_core(const trace::MemoryAccess& a, const trace::MemoryAccess& b) {
  return a.core == b.core;
}

// RMWs without release semantics behave like loads for criticality purposes.
bool load_like(const trace::MemoryAccess& a) {
  if (a.kind == AccessKind::Load) return true;
  return a.kind == AccessKind::Rmw &&
         (a.sync == SyncKind::None || a.sync == SyncKind::Acquire);
}

}  // namespace

Selector::Selector(const trace::AccessTrace& t, const HardwareProfile& hp,
                   const ScoringParams& sp)
    : t_(&t),
      hp_(hp),
      sp_(sp),
      equalized_(!hp.supports_wt_forwarding),
      nav_(t) {}

double Selector::criticality(std::size_t y) const {
  const auto& a = t_->accesses[y];
  if (equalized_) {
    // Without forwarded write-throughs, stores wait on ownership transfers and
    // dominate; weight them above loads.
    return load_like(a) ? 1.0 : 2.0;
  }
  if (load_like(a)) {
    return t_->hdr.device_of(a.core) == DeviceClass::Cpu ? sp_.crit_cpu_load
                                                         : sp_.crit_gpu_load;
  }
  return sp_.crit_other;
}

bool Selector::reuse_possible_bytes(std::size_t x, std::uint64_t bytes) const {
  const auto cap = sp_.capacity_for(nav_.device_of(x));
  return static_cast<double>(bytes) <
         sp_.reuse_fraction * static_cast<double>(cap);
}

bool Selector::ownership_beneficial(std::size_t x) const {
  const auto& ax = t_->accesses[x];
  double score = 0.0;
  int phase = sp_.ownership_window;
  std::vector<int> seen_cores{ax.core};
  ReuseScanner scan(nav_, x);
  std::size_t yprev = x;
  for (std::size_t y = nav_.next_conflict(x); y != NavIndex::kNone;
       y = nav_.next_conflict(y)) {
    const auto& ay = t_->accesses[y];
    const bool considered =
        !same_core(t_->accesses[yprev], ay) || nav_.sync_separated(yprev, y);
    if (considered) {
      if (--phase < 0) break;
      if (same_core(ax, ay) && !reuse_possible_bytes(x, scan.advance(y))) {
        break;  // the requester itself will have evicted the words
      }
      const bool known =
          std::find(seen_cores.begin(), seen_cores.end(), ay.core) !=
          seen_cores.end();
      const double val =
          (known ? sp_.weight_known_core : sp_.weight_new_core) *
          criticality(y);
      if (same_core(ax, ay)) {
        score += val;
      } else {
        score -= val;
        if (!known) seen_cores.push_back(ay.core);
      }
    }
    yprev = y;
  }
  return score > 0.0;
}

bool Selector::shared_state_beneficial(std::size_t x) const {
  const auto& ax = t_->accesses[x];
  if (t_->hdr.device_of(ax.core) == DeviceClass::Gpu) return false;
  std::size_t yprev = x;
  for (std::size_t y = nav_.next_block_conflict(x); y != NavIndex::kNone;
       y = nav_.next_block_conflict(y)) {
    const auto& ay = t_->accesses[y];
    const bool considered =
        !same_core(t_->accesses[yprev], ay) || nav_.sync_separated(yprev, y);
    if (!considered) continue;
    if (ay.kind == AccessKind::Load && same_core(ax, ay)) return true;
    if (ay.kind == AccessKind::Store && !same_core(ax, ay)) return false;
    yprev = y;
  }
  return false;
}

bool Selector::owner_prediction_beneficial(std::size_t x) const {
  if (!hp_.supports_owner_prediction) return false;
  const auto& ax = t_->accesses[x];
  const std::size_t pcx = nav_.prev_conflict(x);
  const auto& positions = nav_.core_inst_positions(ax.core, ax.static_inst);
  auto it = std::lower_bound(positions.begin(), positions.end(), x);
  int phase = sp_.predictor_window;
  int score = 0;
  while (it != positions.begin()) {
    --it;
    if (--phase < 0) break;
    const std::size_t pcy = nav_.prev_conflict(*it);
    const bool same_source = pcx != NavIndex::kNone &&
                             pcy != NavIndex::kNone &&
                             t_->accesses[pcx].core == t_->accesses[pcy].core;
    score += same_source ? 1 : -1;
  }
  return score > 0;
}

RequestType Selector::root_type(std::size_t x) const {
  switch (t_->accesses[x].kind) {
    case AccessKind::Load:
      if (ownership_beneficial(x)) return RequestType::ReqOData;
      if (shared_state_beneficial(x)) return RequestType::ReqS;
      if (owner_prediction_beneficial(x)) return RequestType::ReqVo;
      return RequestType::ReqV;
    case AccessKind::Store:
      if (ownership_beneficial(x)) return RequestType::ReqO;
      if (owner_prediction_beneficial(x)) return RequestType::ReqWTo;
      return RequestType::ReqWTfwd;
    case AccessKind::Rmw:
      if (ownership_beneficial(x)) return RequestType::ReqOData;
      if (owner_prediction_beneficial(x)) return RequestType::ReqWToData;
      return RequestType::ReqWTfwdData;
  }
  return RequestType::ReqV;
}

WordMask Selector::intra_sync_load_reuse(std::size_t x) const {
  const auto& ax = t_->accesses[x];
  WordMask mask = ax.mask;
  ReuseScanner scan(nav_, x);
  for (std::size_t y = nav_.next_block_conflict(x); y != NavIndex::kNone;
       y = nav_.next_block_conflict(y)) {
    if (!reuse_possible_bytes(x, scan.advance(y))) break;
    const auto& ay = t_->accesses[y];
    if (same_core(ax, ay) && ay.kind == AccessKind::Load &&
        !nav_.sync_separated(x, y)) {
      mask |= ay.mask;
    }
  }
  return mask;
}

WordMask Selector::inter_sync_store_reuse(std::size_t x) const {
  const auto& ax = t_->accesses[x];
  WordMask mask = ax.mask;
  ReuseScanner scan(nav_, x);
  for (std::size_t y = nav_.next_block_conflict(x); y != NavIndex::kNone;
       y = nav_.next_block_conflict(y)) {
    if (!reuse_possible_bytes(x, scan.advance(y))) break;
    const auto& ay = t_->accesses[y];
    if (same_core(ax, ay) && ay.kind != AccessKind::Load &&
        nav_.sync_separated(x, y)) {
      mask |= ay.mask;
    }
  }
  return mask;
}

int vote_priority(RequestType t) {
  switch (t) {
    case RequestType::ReqOData: return 10;
    case RequestType::ReqO: return 9;
    case RequestType::ReqS: return 8;
    case RequestType::ReqWTfwdData: return 7;
    case RequestType::ReqWTfwd: return 6;
    case RequestType::ReqWToData: return 5;
    case RequestType::ReqWTo: return 4;
    case RequestType::ReqVo: return 3;
    case RequestType::ReqWTData: return 2;
    case RequestType::ReqWT: return 1;
    case RequestType::ReqV: return 0;
  }
  return -1;
}

namespace {

RequestType vote_winner(const std::array<int, kNumRequestTypes>& counts) {
  RequestType best = RequestType::ReqV;
  int best_count = -1;
  for (int i = 0; i < kNumRequestTypes; ++i) {
    if (counts[static_cast<std::size_t>(i)] == 0) continue;
    const auto t = static_cast<RequestType>(i);
    const int c = counts[static_cast<std::size_t>(i)];
    if (c > best_count ||
        (c == best_count && vote_priority(t) > vote_priority(best))) {
      best = t;
      best_count = c;
    }
  }
  return best;
}

}  // namespace

SelectionMap Selector::run() const {
  const std::size_t n = t_->accesses.size();
  SelectionMap m;
  m.profile = hp_;
  m.equalized_criticality = equalized_;
  m.per_access.resize(n);

  // Root selection per access.
  std::vector<RequestType> root(n);
  for (std::size_t i = 0; i < n; ++i) root[i] = root_type(i);

  // Groups: maximal runs of adjacent accesses from one (core, instruction)
  // stream vote on a common root type; footprints within a block are pooled.
  std::size_t g = 0;
  while (g < n) {
    std::size_t e = g + 1;
    const auto& a0 = t_->accesses[g];
    while (e < n && t_->accesses[e].core == a0.core &&
           t_->accesses[e].static_inst == a0.static_inst) {
      ++e;
    }
    std::array<int, kNumRequestTypes> counts{};
    for (std::size_t i = g; i < e; ++i) {
      ++counts[static_cast<std::size_t>(root[i])];
    }
    const RequestType winner = vote_winner(counts);

    // Footprint per member under the winning type.
    const auto full = t_->hdr.geo.full_mask();
    for (std::size_t i = g; i < e; ++i) {
      auto& sa = m.per_access[i];
      sa.voted = winner;
      sa.final_type = winner;
      switch (winner) {
        case RequestType::ReqV:
        case RequestType::ReqVo:
          sa.mask = intra_sync_load_reuse(i);
          break;
        case RequestType::ReqS:
          sa.mask = full;
          break;
        case RequestType::ReqO:
        case RequestType::ReqOData:
          sa.mask = inter_sync_store_reuse(i);
          break;
        default:  // write-through family: exactly the written words
          sa.mask = t_->accesses[i].mask;
          break;
      }
    }

    // Pool footprints of group members that target the same block, and
    // upgrade dataless ownership when the pooled footprint exceeds the
    // pooled written words.
    std::unordered_map<Addr, WordMask> pooled, requested;
    for (std::size_t i = g; i < e; ++i) {
      pooled[t_->accesses[i].addr] |= m.per_access[i].mask;
      requested[t_->accesses[i].addr] |= t_->accesses[i].mask;
    }
    for (std::size_t i = g; i < e; ++i) {
      auto& sa = m.per_access[i];
      sa.mask = pooled[t_->accesses[i].addr];
      if (sa.final_type == RequestType::ReqO &&
          sa.mask != requested[t_->accesses[i].addr]) {
        sa.final_type = RequestType::ReqOData;
      }
    }
    g = e;
  }

  // Profile lowering.  Neighbor checks read the pre-lowering types.
  std::vector<RequestType> pre(n);
  for (std::size_t i = 0; i < n; ++i) pre[i] = m.per_access[i].final_type;
  const auto ownership_at = [&](std::size_t i) {
    return i != NavIndex::kNone && is_ownership_type(pre[i]);
  };
  for (std::size_t i = 0; i < n; ++i) {
    auto& sa = m.per_access[i];
    if (!hp_.supports_owner_prediction) {
      sa.final_type = strip_prediction(sa.final_type);
    }
    if (!hp_.supports_wt_forwarding) {
      switch (sa.final_type) {
        case RequestType::ReqWTfwd:
        case RequestType::ReqWTo:
          sa.final_type = RequestType::ReqWT;
          break;
        case RequestType::ReqWTfwdData:
        case RequestType::ReqWToData:
          // An RMW whose conflict neighbors both hold ownership is cheaper as
          // an ownership transfer than as a write-through round trip.
          sa.final_type = (ownership_at(nav_.prev_conflict(i)) &&
                           ownership_at(nav_.next_conflict(i)))
                              ? RequestType::ReqOData
                              : RequestType::ReqWTData;
          break;
        default:
          break;
      }
    }
    const bool word_gran = nav_.device_of(i) == DeviceClass::Cpu
                               ? hp_.word_granularity_cpu
                               : hp_.word_granularity_gpu;
    if (!word_gran) {
      if (sa.final_type == RequestType::ReqO) {
        sa.final_type = RequestType::ReqOData;
      }
      // Write-through footprints carry store data and cannot be fabricated
      // for unwritten words; everything else widens to the whole block.
      if (!is_wt_type(sa.final_type)) {
        sa.mask = t_->hdr.geo.full_mask();
      }
    }
  }

  // Modal final type per static instruction.
  std::map<std::uint32_t, std::array<int, kNumRequestTypes>> inst_counts;
  for (std::size_t i = 0; i < n; ++i) {
    ++inst_counts[t_->accesses[i].static_inst]
                 [static_cast<std::size_t>(m.per_access[i].final_type)];
  }
  for (const auto& [inst, counts] : inst_counts) {
    m.per_inst[inst] = vote_winner(counts);
  }
  return m;
}

SelectionMap select_all(const trace::AccessTrace& t, const HardwareProfile& hp,
                        const ScoringParams& sp) {
  return Selector(t, hp, sp).run();
}

// --- serialization ----------------------------------------------------------

void write_selection(std::ostream& os, const SelectionMap& m) {
  os << "fcsselect v1\n";
  os << "profile " << m.profile.supports_wt_forwarding << ' '
     << m.profile.supports_owner_prediction << ' '
     << m.profile.word_granularity_cpu << ' ' << m.profile.word_granularity_gpu
     << ' ' << m.equalized_criticality << '\n';
  os << "accesses " << m.per_access.size() << '\n';
  for (const auto& sa : m.per_access) {
    os << to_string(sa.voted) << ' ' << to_string(sa.final_type) << ' '
       << std::hex << sa.mask << std::dec << '\n';
  }
}

SelectionMap read_selection(std::istream& is) {
  const auto fail = [](const std::string& why) {
    throw std::runtime_error("selection parse error: " + why);
  };
  std::string line;
  if (!std::getline(is, line) || line != "fcsselect v1") {
    fail("missing 'fcsselect v1' header");
  }
  SelectionMap m;
  std::string tag;
  int fwd = 0, pred = 0, wgc = 0, wgg = 0, eq = 0;
  if (!std::getline(is, line)) fail("missing profile line");
  {
    std::istringstream ls(line);
    if (!(ls >> tag >> fwd >> pred >> wgc >> wgg >> eq) || tag != "profile") {
      fail("bad profile line");
    }
  }
  m.profile = {fwd != 0, pred != 0, wgc != 0, wgg != 0};
  m.equalized_criticality = eq != 0;
  std::size_t n = 0;
  if (!std::getline(is, line)) fail("missing accesses line");
  {
    std::istringstream ls(line);
    if (!(ls >> tag >> n) || tag != "accesses") fail("bad accesses line");
  }
  m.per_access.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(is, line)) fail("truncated access list");
    std::istringstream ls(line);
    std::string vt, ft, mh;
    if (!(ls >> vt >> ft >> mh)) fail("bad access line: " + line);
    const auto v = parse_request_type(vt);
    const auto f = parse_request_type(ft);
    if (!v || !f) fail("unknown request type in: " + line);
    WordMask mask = 0;
    const auto [p, ec] =
        std::from_chars(mh.data(), mh.data() + mh.size(), mask, 16);
    if (ec != std::errc{} || p != mh.data() + mh.size()) {
      fail("bad mask in: " + line);
    }
    m.per_access.push_back({*v, *f, mask});
  }
  return m;
}

void write_selection_file(const std::string& path, const SelectionMap& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  write_selection(os, m);
}

SelectionMap read_selection_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return read_selection(is);
}

}  // namespace fcssim::sel
