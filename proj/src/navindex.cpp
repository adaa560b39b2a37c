#include "fcssim/navindex.hpp"

#include <algorithm>
#include <cassert>

namespace fcssim::sel {

namespace {

// Key for the (core, static instruction) stream map.
std::uint64_t core_inst_key(int core, std::uint32_t inst) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(core)) << 32) |
         inst;
}

// True when a position q with lo < q < hi exists in the sorted vector.
bool any_between(const std::vector<std::size_t>& v, std::size_t lo,
                 std::size_t hi) {
  auto it = std::upper_bound(v.begin(), v.end(), lo);
  return it != v.end() && *it < hi;
}

}  // namespace

NavIndex::NavIndex(const trace::AccessTrace& t) : t_(&t) {
  const std::size_t n = t.accesses.size();
  const int cores = t.hdr.n_cores();
  next_conflict_.assign(n, kNone);
  prev_conflict_.assign(n, kNone);
  next_block_conflict_.assign(n, kNone);
  core_pos_.resize(static_cast<std::size_t>(cores));
  sync_any_.resize(static_cast<std::size_t>(cores));
  sync_acq_.resize(static_cast<std::size_t>(cores));
  sync_rel_.resize(static_cast<std::size_t>(cores));

  // Last position seen per word / per block, filled in trace order.
  std::unordered_map<Addr, std::size_t> last_word;
  std::unordered_map<Addr, std::size_t> last_block;
  const auto& geo = t.hdr.geo;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = t.accesses[i];
    const auto c = static_cast<std::size_t>(a.core);
    core_pos_[c].push_back(i);
    core_inst_pos_[core_inst_key(a.core, a.static_inst)].push_back(i);
    if (a.is_sync()) {
      sync_any_[c].push_back(i);
      if (a.has_acquire()) sync_acq_[c].push_back(i);
      if (a.has_release()) sync_rel_[c].push_back(i);
    }

    for (WordMask bits = a.mask; bits != 0; bits &= bits - 1) {
      const unsigned w = static_cast<unsigned>(__builtin_ctz(bits));
      const Addr wa = geo.word_addr(a.addr, w);
      auto it = last_word.find(wa);
      if (it != last_word.end()) {
        const std::size_t p = it->second;
        if (next_conflict_[p] == kNone || next_conflict_[p] > i) {
          next_conflict_[p] = i;
        }
        if (prev_conflict_[i] == kNone || prev_conflict_[i] < p) {
          prev_conflict_[i] = p;
        }
        it->second = i;
      } else {
        last_word.emplace(wa, i);
      }
    }

    auto bit = last_block.find(a.addr);
    if (bit != last_block.end()) {
      next_block_conflict_[bit->second] = i;
      bit->second = i;
    } else {
      last_block.emplace(a.addr, i);
    }
  }
}

bool NavIndex::sync_separated(std::size_t a, std::size_t b) const {
  assert(a < b);
  const auto& xa = t_->accesses[a];
  const auto& xb = t_->accesses[b];
  if (xa.core != xb.core) return false;
  const auto c = static_cast<std::size_t>(xa.core);
  if (xa.kind == AccessKind::Rmw || xb.kind == AccessKind::Rmw) {
    if (any_between(sync_any_[c], a, b)) return true;
  }
  if (xa.kind == AccessKind::Load && any_between(sync_acq_[c], a, b)) {
    return true;
  }
  if (xa.kind == AccessKind::Store && any_between(sync_rel_[c], a, b)) {
    return true;
  }
  return false;
}

const std::vector<std::size_t>& NavIndex::core_inst_positions(
    int core, std::uint32_t inst) const {
  static const std::vector<std::size_t> empty;
  auto it = core_inst_pos_.find(core_inst_key(core, inst));
  return it == core_inst_pos_.end() ? empty : it->second;
}

ReuseScanner::ReuseScanner(const NavIndex& nav, std::size_t x)
    : nav_(&nav),
      positions_(&nav.core_positions(nav.at(x).core)) {
  cursor_ = static_cast<std::size_t>(
      std::upper_bound(positions_->begin(), positions_->end(), x) -
      positions_->begin());
}

std::uint64_t ReuseScanner::advance(std::size_t j) {
  const auto& geo = nav_->trace().hdr.geo;
  while (cursor_ < positions_->size() && (*positions_)[cursor_] < j) {
    const auto& a = nav_->at((*positions_)[cursor_]);
    for (WordMask bits = a.mask; bits != 0; bits &= bits - 1) {
      const unsigned w = static_cast<unsigned>(__builtin_ctz(bits));
      if (words_.insert(geo.word_addr(a.addr, w)).second) {
        bytes_ += geo.word_size;
      }
    }
    ++cursor_;
  }
  return bytes_;
}

}  // namespace fcssim::sel
